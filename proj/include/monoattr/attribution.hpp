#ifndef MONOATTR_ATTRIBUTION_HPP
#define MONOATTR_ATTRIBUTION_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "monoattr/classifier.hpp"
#include "monoattr/core/csv.hpp"
#include "monoattr/core/dense.hpp"
#include "monoattr/core/rng.hpp"
#include "monoattr/core/tensor.hpp"

namespace monoattr {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

enum class AttrMethod { Ablation, Activation, GradTimesAct, GradSHAP, IntegratedGrad, Conductance, Shapley };

inline const std::string& attr_method_name(AttrMethod m) {
    static const std::string names[] = {"ablation",  "activation",       "grad_times_act", "gradient_shap",
                                        "integrated_gradients", "conductance", "shapley"};
    return names[static_cast<int>(m)];
}

inline const std::vector<AttrMethod>& classic_methods() {
    // the six attribution methods applied throughout the pipeline
    static const std::vector<AttrMethod> six = {AttrMethod::Ablation,       AttrMethod::Activation,
                                                AttrMethod::GradTimesAct,   AttrMethod::GradSHAP,
                                                AttrMethod::IntegratedGrad, AttrMethod::Conductance};
    return six;
}

enum class AttrLevel { layer, sae_feature, token };

inline const std::string& attr_level_name(AttrLevel l) {
    static const std::string names[] = {"layer", "sae_feature", "token"};
    return names[static_cast<int>(l)];
}

struct AttributionVector {
    Vec values;
    AttrMethod method = AttrMethod::Activation;
    AttrLevel level = AttrLevel::layer;
    int target_class = 0;
    int sample_id = 0;
    bool zero_gradient_warning = false;
};

/**
 * The attributed layer, abstracted away from any particular network: the
 * activation vector at the operating point, a graph builder for the
 * scalar target score as a function of that vector, and the class
 * probabilities used for prediction-retention checks.
 */
struct LayerContext {
    Vec activations;
    std::function<Tensor(const Tensor&)> head_graph;  // leaf (M,) -> scalar target score
    std::function<Vec(const Vec&)> probabilities;     // layer vector -> class probabilities
    int target_class = 0;
    int sample_id = 0;
    AttrLevel level = AttrLevel::layer;

    double score(const Vec& at) const {
        return head_graph(Tensor::from({static_cast<int>(at.size())}, at)).scalar_value();
    }
    Vec gradient(const Vec& at) const {
        Tensor leaf = Tensor::from({static_cast<int>(at.size())}, at, true);
        backward(head_graph(leaf));
        return leaf.grad();
    }
};

/** Layer activations as a function of position along the input path. */
struct LayerPath {
    std::function<Vec(double)> at;  // alpha in [0,1]; at(1) = operating point
};

struct AttributionConfig {
    Vec baseline;               // empty = zero baseline
    int ig_steps = 32;
    int conductance_steps = 32;
    int shap_samples = 64;
    double shap_sigma = -1.0;   // <0: 0.1 * std(activations)
    std::uint64_t seed = 0;

    Vec resolve_baseline(std::size_t m) const {
        if (baseline.empty()) return Vec(m, 0.0);
        if (baseline.size() == 1) return Vec(m, baseline[0]);  // scalar broadcast
        if (baseline.size() != m) throw DimensionError("attribution: baseline length mismatch");
        for (double v : baseline)
            if (!std::isfinite(v)) throw NumericError("attribution: non-finite baseline");
        return baseline;
    }
};

// ---------------------------------------------------------------------------
// The six methods (plus exact Shapley)
// ---------------------------------------------------------------------------

/** phi_i = a_i: the activations themselves as proxy contributions. */
inline AttributionVector attr_activation(const LayerContext& ctx) {
    AttributionVector out;
    out.values = ctx.activations;
    out.method = AttrMethod::Activation;
    out.level = ctx.level;
    out.target_class = ctx.target_class;
    out.sample_id = ctx.sample_id;
    return out;
}

/** phi_i = a_i * d f/d a_i at the operating point. */
inline AttributionVector attr_grad_times_act(const LayerContext& ctx) {
    AttributionVector out;
    const Vec g = ctx.gradient(ctx.activations);
    out.values.resize(g.size());
    bool all_zero = true;
    for (std::size_t i = 0; i < g.size(); ++i) {
        out.values[i] = ctx.activations[i] * g[i];
        all_zero = all_zero && g[i] == 0.0;
    }
    out.zero_gradient_warning = all_zero;
    out.method = AttrMethod::GradTimesAct;
    out.level = ctx.level;
    out.target_class = ctx.target_class;
    out.sample_id = ctx.sample_id;
    return out;
}

/**
 * Midpoint-rule integrated gradients along the straight line from the
 * baseline to the activations:
 *   phi_i = (a_i - b_i) * (1/S) * sum_s df/da_i at b + (s-0.5)/S * (a-b)
 */
inline AttributionVector attr_integrated_gradients(const LayerContext& ctx, const AttributionConfig& cfg) {
    if (cfg.ig_steps < 1) throw ConfigError("integrated gradients: steps must be >= 1");
    const Vec b = cfg.resolve_baseline(ctx.activations.size());
    const std::size_t m = ctx.activations.size();
    Vec acc(m, 0.0);
    for (int s = 1; s <= cfg.ig_steps; ++s) {
        const double alpha = (static_cast<double>(s) - 0.5) / static_cast<double>(cfg.ig_steps);
        Vec point(m);
        for (std::size_t i = 0; i < m; ++i) point[i] = b[i] + alpha * (ctx.activations[i] - b[i]);
        const Vec g = ctx.gradient(point);
        for (std::size_t i = 0; i < m; ++i) acc[i] += g[i];
    }
    AttributionVector out;
    out.values.resize(m);
    for (std::size_t i = 0; i < m; ++i)
        out.values[i] = (ctx.activations[i] - b[i]) * acc[i] / static_cast<double>(cfg.ig_steps);
    out.method = AttrMethod::IntegratedGrad;
    out.level = ctx.level;
    out.target_class = ctx.target_class;
    out.sample_id = ctx.sample_id;
    return out;
}

/**
 * Gradient SHAP: expectation over Gaussian-noised baselines b' and
 * uniform path positions alpha of (a - b') (x) grad f(b' + alpha (a - b')).
 */
inline AttributionVector attr_gradient_shap(const LayerContext& ctx, const AttributionConfig& cfg) {
    if (cfg.shap_samples < 1) throw ConfigError("gradient shap: n_samples must be >= 1");
    const std::size_t m = ctx.activations.size();
    const Vec b = cfg.resolve_baseline(m);
    double sigma = cfg.shap_sigma;
    if (sigma < 0.0) sigma = 0.1 * vstd(ctx.activations);
    Rng rng(cfg.seed ^ 0x9547a11ULL);
    Vec acc(m, 0.0);
    for (int s = 0; s < cfg.shap_samples; ++s) {
        Vec bp(m);
        for (std::size_t i = 0; i < m; ++i) bp[i] = b[i] + sigma * rng.normal();
        const double alpha = rng.uniform();
        Vec point(m);
        for (std::size_t i = 0; i < m; ++i) point[i] = bp[i] + alpha * (ctx.activations[i] - bp[i]);
        const Vec g = ctx.gradient(point);
        for (std::size_t i = 0; i < m; ++i) acc[i] += (ctx.activations[i] - bp[i]) * g[i];
    }
    AttributionVector out;
    out.values = vscale(acc, 1.0 / static_cast<double>(cfg.shap_samples));
    out.method = AttrMethod::GradSHAP;
    out.level = ctx.level;
    out.target_class = ctx.target_class;
    out.sample_id = ctx.sample_id;
    return out;
}

/**
 * Perturbation attribution with the paper's sign convention: the score
 * of group S is f(x with S ablated to the baseline) - f(x). Groups
 * default to singletons and must partition the units.
 */
inline AttributionVector attr_feature_ablation(const LayerContext& ctx, const AttributionConfig& cfg,
                                               std::vector<std::vector<int>> groups = {}) {
    const std::size_t m = ctx.activations.size();
    const Vec b = cfg.resolve_baseline(m);
    if (groups.empty())
        for (std::size_t i = 0; i < m; ++i) groups.push_back({static_cast<int>(i)});
    std::vector<int> seen(m, 0);
    for (const auto& g : groups)
        for (int i : g) {
            if (i < 0 || i >= static_cast<int>(m)) throw ContractError("ablation: unit index out of range");
            if (seen[static_cast<std::size_t>(i)]++) throw ContractError("ablation: overlapping groups");
        }
    const double f_x = ctx.score(ctx.activations);
    AttributionVector out;
    out.values.assign(m, 0.0);
    for (const auto& g : groups) {
        Vec ablated = ctx.activations;
        for (int i : g) ablated[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(i)];
        const double delta = ctx.score(ablated) - f_x;
        for (int i : g) out.values[static_cast<std::size_t>(i)] = delta;
    }
    out.method = AttrMethod::Ablation;
    out.level = ctx.level;
    out.target_class = ctx.target_class;
    out.sample_id = ctx.sample_id;
    return out;
}

/**
 * Layer conductance: phi_i = sum_s df/da_i(a(mid_s)) * (a_i(s/S) - a_i((s-1)/S))
 * where a(.) follows the straight-line input path. The per-step change
 * telescopes, so sum_i phi_i approximates f(x) - f(x_baseline).
 */
inline AttributionVector attr_layer_conductance(const LayerContext& ctx, const LayerPath& path, int steps) {
    if (steps < 1) throw ConfigError("conductance: steps must be >= 1");
    const std::size_t m = ctx.activations.size();
    Vec phi(m, 0.0);
    Vec prev = path.at(0.0);
    for (int s = 1; s <= steps; ++s) {
        const double mid = (static_cast<double>(s) - 0.5) / static_cast<double>(steps);
        const Vec g = ctx.gradient(path.at(mid));
        const Vec cur = path.at(static_cast<double>(s) / static_cast<double>(steps));
        for (std::size_t i = 0; i < m; ++i) phi[i] += g[i] * (cur[i] - prev[i]);
        prev = cur;
    }
    AttributionVector out;
    out.values = std::move(phi);
    out.method = AttrMethod::Conductance;
    out.level = ctx.level;
    out.target_class = ctx.target_class;
    out.sample_id = ctx.sample_id;
    return out;
}

/**
 * Exact Shapley values by full coalition enumeration (2^M scores with
 * absent units ablated to the baseline). Limited to M <= 12.
 */
inline AttributionVector attr_shapley_exact(const LayerContext& ctx, const AttributionConfig& cfg) {
    const int m = static_cast<int>(ctx.activations.size());
    if (m > 12)
        throw ScaleError("shapley: exact enumeration limited to 12 units; use attr_gradient_shap instead");
    const Vec b = cfg.resolve_baseline(static_cast<std::size_t>(m));
    const std::size_t n_masks = std::size_t{1} << m;
    Vec f(n_masks);
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
        Vec point(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i)
            point[static_cast<std::size_t>(i)] =
                (mask >> i) & 1 ? ctx.activations[static_cast<std::size_t>(i)] : b[static_cast<std::size_t>(i)];
        f[mask] = ctx.score(point);
    }
    Vec fact(static_cast<std::size_t>(m) + 1, 1.0);
    for (int i = 1; i <= m; ++i) fact[static_cast<std::size_t>(i)] = fact[static_cast<std::size_t>(i - 1)] * i;
    AttributionVector out;
    out.values.assign(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        double phi = 0.0;
        for (std::size_t mask = 0; mask < n_masks; ++mask) {
            if ((mask >> i) & 1) continue;
            const int s = std::popcount(mask);
            const double w = fact[static_cast<std::size_t>(s)] * fact[static_cast<std::size_t>(m - s - 1)] /
                             fact[static_cast<std::size_t>(m)];
            phi += w * (f[mask | (std::size_t{1} << i)] - f[mask]);
        }
        out.values[static_cast<std::size_t>(i)] = phi;
    }
    out.method = AttrMethod::Shapley;
    out.level = ctx.level;
    out.target_class = ctx.target_class;
    out.sample_id = ctx.sample_id;
    return out;
}

/** Dispatch one of the six pipeline methods with shared configuration. */
inline AttributionVector run_method(AttrMethod method, const LayerContext& ctx, const LayerPath& path,
                                    const AttributionConfig& cfg) {
    switch (method) {
        case AttrMethod::Ablation: return attr_feature_ablation(ctx, cfg);
        case AttrMethod::Activation: return attr_activation(ctx);
        case AttrMethod::GradTimesAct: return attr_grad_times_act(ctx);
        case AttrMethod::GradSHAP: return attr_gradient_shap(ctx, cfg);
        case AttrMethod::IntegratedGrad: return attr_integrated_gradients(ctx, cfg);
        case AttrMethod::Conductance: return attr_layer_conductance(ctx, path, cfg.conductance_steps);
        case AttrMethod::Shapley: return attr_shapley_exact(ctx, cfg);
    }
    throw ContractError("run_method: unknown method");
}

// ---------------------------------------------------------------------------
// Contexts over the surrogate classifier
// ---------------------------------------------------------------------------

/**
 * Layer context of the classifier's layer of interest for one sample.
 * target_class < 0 selects the predicted class.
 */
inline LayerContext layer_context(const ClassifierModel& model, const Sample& sample,
                                  int target_class = -1, int sample_id = 0) {
    LayerContext ctx;
    ctx.activations = layer_activations(model, sample);
    if (target_class < 0) target_class = predict(model, sample).label;
    ctx.target_class = target_class;
    ctx.sample_id = sample_id;
    ctx.level = AttrLevel::layer;
    ctx.head_graph = [model, target_class](const Tensor& leaf) {
        return pick(head_logits(model, leaf), target_class);
    };
    ctx.probabilities = [model](const Vec& a) { return head_probabilities(model, a); };
    return ctx;
}

/**
 * Straight-line input path for conductance: interpolates the token
 * embeddings from zero to the sample's embedding and reads the layer
 * activations at each stop.
 */
inline LayerPath layer_input_path(const ClassifierModel& model, const Sample& sample) {
    LayerPath path;
    const Vec x1 = embedding_values(model, sample);
    const int lc = sample.content_length();
    const int d = model.cfg.d_model;
    path.at = [model, x1, lc, d](double alpha) {
        Tensor x = Tensor::from({lc, d}, vscale(x1, alpha));
        return forward_from_embedding(model, x).layer_act.values();
    };
    return path;
}

// ---------------------------------------------------------------------------
// Attribution dump
// ---------------------------------------------------------------------------

inline std::string attribution_csv(const std::vector<AttributionVector>& rows) {
    std::string out = "sample_id,method,level,unit_index,value\n";
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.values.size(); ++i) {
            out += std::to_string(r.sample_id);
            out += ',';
            out += attr_method_name(r.method);
            out += ',';
            out += attr_level_name(r.level);
            out += ',';
            out += std::to_string(i);
            out += ',';
            out += fmt_double(r.values[i]);
            out += '\n';
        }
    return out;
}

}  // namespace monoattr

#endif
