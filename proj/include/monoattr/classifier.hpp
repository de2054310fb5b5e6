#ifndef MONOATTR_CLASSIFIER_HPP
#define MONOATTR_CLASSIFIER_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "monoattr/cohort.hpp"
#include "monoattr/core/dense.hpp"
#include "monoattr/core/rng.hpp"
#include "monoattr/core/serialize.hpp"
#include "monoattr/core/tensor.hpp"
#include "monoattr/core/train.hpp"

namespace monoattr {

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ClassifierConfig {
    int d_model = 32;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 64;
    int n_classes = 2;
    int layer_of_interest = -1;  // block index; -1 means the final block
    int vocab_size = kVocabSize;

    int head_dim() const {
        if (d_model % n_heads != 0) throw ConfigError("classifier: d_model must divide into heads");
        return d_model / n_heads;
    }
    int effective_layer() const { return layer_of_interest < 0 ? n_layers - 1 : layer_of_interest; }
};

/**
 * Small pre-LN transformer encoder over token sequences. The
 * classification head reads the CLS position of the designated block
 * output; that d-vector is the layer of interest every attribution
 * method works on. Pad positions are excluded from the computation
 * entirely (content truncation), which realizes exact attention
 * masking: values beyond the first pad cannot influence predictions.
 */
struct TransformerBlock {
    Tensor ln1_g, ln1_b;
    std::vector<Tensor> wq, wk, wv;  // per head, d x d_h
    Tensor wo;                       // d x d
    Tensor ln2_g, ln2_b;
    Tensor w1, b1, w2, b2;           // FFN
};

struct ClassifierModel {
    ClassifierConfig cfg;
    std::uint64_t seed = 0;
    std::uint64_t vocab_hash = 0;
    Tensor embedding;   // vocab x d
    Tensor positional;  // kSeqLen x d
    std::vector<TransformerBlock> blocks;
    Tensor w_head, b_head;  // d x C, C

    std::vector<std::pair<std::string, Tensor>> named_parameters() const {
        std::vector<std::pair<std::string, Tensor>> out;
        out.emplace_back("embedding", embedding);
        out.emplace_back("positional", positional);
        for (std::size_t l = 0; l < blocks.size(); ++l) {
            const auto& b = blocks[l];
            const std::string p = "block" + std::to_string(l) + ".";
            out.emplace_back(p + "ln1_g", b.ln1_g);
            out.emplace_back(p + "ln1_b", b.ln1_b);
            for (std::size_t h = 0; h < b.wq.size(); ++h) {
                out.emplace_back(p + "wq" + std::to_string(h), b.wq[h]);
                out.emplace_back(p + "wk" + std::to_string(h), b.wk[h]);
                out.emplace_back(p + "wv" + std::to_string(h), b.wv[h]);
            }
            out.emplace_back(p + "wo", b.wo);
            out.emplace_back(p + "ln2_g", b.ln2_g);
            out.emplace_back(p + "ln2_b", b.ln2_b);
            out.emplace_back(p + "w1", b.w1);
            out.emplace_back(p + "b1", b.b1);
            out.emplace_back(p + "w2", b.w2);
            out.emplace_back(p + "b2", b.b2);
        }
        out.emplace_back("w_head", w_head);
        out.emplace_back("b_head", b_head);
        return out;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (auto& [n, t] : named_parameters()) out.push_back(t);
        return out;
    }
};

inline ClassifierModel init_classifier(const ClassifierConfig& cfg, std::uint64_t seed,
                                       std::uint64_t vocab_hash) {
    cfg.head_dim();  // validates
    ClassifierModel m;
    m.cfg = cfg;
    m.seed = seed;
    m.vocab_hash = vocab_hash;
    Rng rng(seed ^ 0xc1a551f1e5ULL);
    const int d = cfg.d_model, dh = cfg.head_dim();

    auto param = [&rng](Shape shape, double stddev) {
        return Tensor::from(shape, rng.normal_vector(shape_size(shape), 0.0, stddev), true);
    };
    auto ones = [](int n) { return Tensor::from({n}, std::vector<double>(static_cast<std::size_t>(n), 1.0), true); };
    auto zeros_p = [](Shape s) { return Tensor::zeros(std::move(s), true); };

    m.embedding = param({cfg.vocab_size, d}, 0.5);
    m.positional = param({kSeqLen, d}, 0.1);
    for (int l = 0; l < cfg.n_layers; ++l) {
        TransformerBlock b;
        b.ln1_g = ones(d);
        b.ln1_b = zeros_p({d});
        const double att_std = std::sqrt(2.0 / (d + dh));
        for (int h = 0; h < cfg.n_heads; ++h) {
            b.wq.push_back(param({d, dh}, att_std));
            b.wk.push_back(param({d, dh}, att_std));
            b.wv.push_back(param({d, dh}, att_std));
        }
        b.wo = param({d, d}, std::sqrt(1.0 / d));
        b.ln2_g = ones(d);
        b.ln2_b = zeros_p({d});
        b.w1 = param({d, cfg.d_ff}, std::sqrt(2.0 / (d + cfg.d_ff)));
        b.b1 = zeros_p({cfg.d_ff});
        b.w2 = param({cfg.d_ff, d}, std::sqrt(2.0 / (d + cfg.d_ff)));
        b.b2 = zeros_p({d});
        m.blocks.push_back(std::move(b));
    }
    // zero head: an untrained model emits exactly uniform probabilities
    m.w_head = zeros_p({d, cfg.n_classes});
    m.b_head = zeros_p({cfg.n_classes});
    return m;
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

struct ClassifierForward {
    Tensor x_emb;      // (Lc x d) input embedding actually used
    Tensor layer_act;  // (d,) CLS activation of the layer of interest
    Tensor logits;     // (C,)
};

namespace detail {

inline Tensor run_blocks(const ClassifierModel& m, Tensor x, int upto_block) {
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(m.cfg.head_dim()));
    Tensor out;
    for (int l = 0; l < m.cfg.n_layers; ++l) {
        const auto& b = m.blocks[static_cast<std::size_t>(l)];
        Tensor h = add_rowvec(mul_rowvec(layernorm(x), b.ln1_g), b.ln1_b);
        std::vector<Tensor> heads;
        for (int hd = 0; hd < m.cfg.n_heads; ++hd) {
            Tensor q = matmul(h, b.wq[static_cast<std::size_t>(hd)]);
            Tensor k = matmul(h, b.wk[static_cast<std::size_t>(hd)]);
            Tensor v = matmul(h, b.wv[static_cast<std::size_t>(hd)]);
            Tensor att = softmax(scale(matmul(q, transpose(k)), inv_sqrt_dh));
            heads.push_back(matmul(att, v));
        }
        x = add(x, matmul(concat_cols(heads), b.wo));
        Tensor f = add_rowvec(mul_rowvec(layernorm(x), b.ln2_g), b.ln2_b);
        Tensor ff = add_rowvec(matmul(relu(add_rowvec(matmul(f, b.w1), b.b1)), b.w2), b.b2);
        x = add(x, ff);
        if (l == upto_block) out = x;
    }
    return out.defined() ? out : x;
}

}  // namespace detail

/** Map the layer-of-interest CLS vector to class logits (the linear head). */
inline Tensor head_logits(const ClassifierModel& m, const Tensor& layer_act) {
    return add(reshape(matmul(reshape(layer_act, {1, m.cfg.d_model}), m.w_head), {m.cfg.n_classes}),
               m.b_head);
}

/**
 * Forward from an explicit (Lc x d) embedding tensor. Pass a leaf with
 * requires_grad to obtain input-side gradients.
 */
inline ClassifierForward forward_from_embedding(const ClassifierModel& m, const Tensor& x_emb) {
    ClassifierForward out;
    out.x_emb = x_emb;
    Tensor x = detail::run_blocks(m, x_emb, m.cfg.effective_layer());
    out.layer_act = take_row(x, 0);
    out.logits = head_logits(m, out.layer_act);
    return out;
}

/** Embedding values (token + positional) over the content prefix. */
inline Vec embedding_values(const ClassifierModel& m, const Sample& s) {
    const int lc = s.content_length();
    const int d = m.cfg.d_model;
    Vec x(static_cast<std::size_t>(lc) * d);
    for (int i = 0; i < lc; ++i)
        for (int j = 0; j < d; ++j)
            x[static_cast<std::size_t>(i) * d + j] =
                m.embedding.values()[static_cast<std::size_t>(s.tokens[static_cast<std::size_t>(i)]) * d + j] +
                m.positional.values()[static_cast<std::size_t>(i) * d + j];
    return x;
}

/** Forward wired to the trainable parameters (used by training). */
inline ClassifierForward forward_train(const ClassifierModel& m, const Sample& s) {
    const int lc = s.content_length();
    std::vector<int> ids(s.tokens.begin(), s.tokens.begin() + lc);
    std::vector<int> pos_ids(static_cast<std::size_t>(lc));
    for (int i = 0; i < lc; ++i) pos_ids[static_cast<std::size_t>(i)] = i;
    Tensor x = add(gather_rows(m.embedding, ids), gather_rows(m.positional, pos_ids));
    return forward_from_embedding(m, x);
}

/** Forward from a detached embedding leaf (analysis mode). */
inline ClassifierForward forward_analysis(const ClassifierModel& m, const Sample& s) {
    const int lc = s.content_length();
    Tensor x_emb = Tensor::from({lc, m.cfg.d_model}, embedding_values(m, s), /*requires_grad=*/true);
    return forward_from_embedding(m, x_emb);
}

/** aL: CLS activation vector of the layer of interest. Deterministic. */
inline Vec layer_activations(const ClassifierModel& m, const Sample& s) {
    return forward_train(m, s).layer_act.values();
}

struct Prediction {
    Vec probabilities;
    int label = 0;
};

inline Vec softmax_values(const Vec& logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    Vec p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

/** Probabilities from a raw layer-activation vector through the head. */
inline Vec head_probabilities(const ClassifierModel& m, const Vec& layer_act) {
    Vec logits(static_cast<std::size_t>(m.cfg.n_classes), 0.0);
    for (int c = 0; c < m.cfg.n_classes; ++c) {
        double acc = m.b_head.values()[static_cast<std::size_t>(c)];
        for (int j = 0; j < m.cfg.d_model; ++j)
            acc += layer_act[static_cast<std::size_t>(j)] *
                   m.w_head.values()[static_cast<std::size_t>(j) * m.cfg.n_classes + c];
        logits[static_cast<std::size_t>(c)] = acc;
    }
    return softmax_values(logits);
}

inline Prediction predict(const ClassifierModel& m, const Sample& s) {
    Prediction p;
    p.probabilities = softmax_values(forward_train(m, s).logits.values());
    p.label = 0;
    for (std::size_t c = 1; c < p.probabilities.size(); ++c)
        if (p.probabilities[c] > p.probabilities[static_cast<std::size_t>(p.label)])
            p.label = static_cast<int>(c);  // lowest index wins ties
    return p;
}

inline double accuracy(const ClassifierModel& m, const Cohort& cohort) {
    if (cohort.samples.empty()) return 0.0;
    int hit = 0;
    for (const auto& s : cohort.samples)
        if (predict(m, s).label == s.label) ++hit;
    return static_cast<double>(hit) / static_cast<double>(cohort.size());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 2e-4;
    int epochs = 30;
    int batch_size = 16;
    std::uint64_t seed = 0;
    int patience = 5;  // early stopping on validation accuracy

    void validate() const {
        if (learning_rate < 0.0) throw ConfigError("train: learning rate must be >= 0");
        if (patience < 1) throw ConfigError("train: patience must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    }
};

struct TrainMetrics {
    std::vector<double> epoch_loss;
    std::vector<double> val_accuracy;
    int best_epoch = -1;
    double best_val_accuracy = 0.0;
};

/**
 * AdamW training with early stopping; restores the best-validation
 * parameters. Deterministic given the config seed.
 */
inline TrainMetrics train_classifier(ClassifierModel& model, const Cohort& train, const Cohort& val,
                                     const TrainConfig& cfg) {
    cfg.validate();
    AdamW opt(model.parameters(), cfg.learning_rate);
    Rng shuffle_rng(cfg.seed ^ 0x7a15beefULL);
    TrainMetrics metrics;

    std::vector<Vec> best_params;
    auto snapshot = [&model]() {
        std::vector<Vec> out;
        for (const auto& p : model.parameters()) out.push_back(p.values());
        return out;
    };
    auto restore = [&model](const std::vector<Vec>& snap) {
        auto params = model.parameters();
        for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_values() = snap[i];
    };

    int stale = 0;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto perm = shuffle_rng.permutation(train.samples.size());
        double epoch_loss = 0.0;
        std::size_t i = 0;
        while (i < perm.size()) {
            opt.zero_grad();
            const std::size_t batch_end = std::min(perm.size(), i + static_cast<std::size_t>(cfg.batch_size));
            const double inv = 1.0 / static_cast<double>(batch_end - i);
            for (; i < batch_end; ++i) {
                const Sample& s = train.samples[perm[i]];
                try {
                    const auto fw = forward_train(model, s);
                    Tensor loss = scale(pick(monoattr::log(softmax(fw.logits)), s.label), -inv);
                    epoch_loss += loss.scalar_value() / inv;
                    backward(loss);
                } catch (const NumericError& e) {
                    throw TrainingError("classifier training diverged at step " + std::to_string(step) +
                                        ": " + e.what());
                }
                ++step;
            }
            opt.step();
        }
        metrics.epoch_loss.push_back(epoch_loss / static_cast<double>(perm.size()));

        const double val_acc = accuracy(model, val);
        metrics.val_accuracy.push_back(val_acc);
        if (val_acc > metrics.best_val_accuracy || metrics.best_epoch < 0) {
            metrics.best_val_accuracy = val_acc;
            metrics.best_epoch = epoch;
            best_params = snapshot();
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    if (!best_params.empty()) restore(best_params);
    return metrics;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

inline void save_classifier(const ClassifierModel& m, const std::string& path) {
    nlohmann::json header;
    header["kind"] = "classifier";
    header["d_model"] = m.cfg.d_model;
    header["n_layers"] = m.cfg.n_layers;
    header["n_heads"] = m.cfg.n_heads;
    header["d_ff"] = m.cfg.d_ff;
    header["n_classes"] = m.cfg.n_classes;
    header["layer_of_interest"] = m.cfg.layer_of_interest;
    header["vocab_size"] = m.cfg.vocab_size;
    header["seed"] = m.seed;
    header["vocab_hash"] = hex64(m.vocab_hash);
    std::vector<std::pair<std::string, Vec>> params;
    std::vector<std::vector<int>> shapes;
    for (const auto& [name, t] : m.named_parameters()) {
        params.emplace_back(name, t.values());
        shapes.push_back(t.shape());
    }
    save_checkpoint(path, std::move(header), params, shapes);
}

inline ClassifierModel load_classifier(const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    ClassifierConfig cfg;
    cfg.d_model = ck.header.at("d_model").get<int>();
    cfg.n_layers = ck.header.at("n_layers").get<int>();
    cfg.n_heads = ck.header.at("n_heads").get<int>();
    cfg.d_ff = ck.header.at("d_ff").get<int>();
    cfg.n_classes = ck.header.at("n_classes").get<int>();
    cfg.layer_of_interest = ck.header.at("layer_of_interest").get<int>();
    cfg.vocab_size = ck.header.at("vocab_size").get<int>();
    ClassifierModel m = init_classifier(cfg, ck.header.at("seed").get<std::uint64_t>(), 0);
    m.vocab_hash = std::stoull(ck.header.at("vocab_hash").get<std::string>(), nullptr, 16);
    auto params = m.named_parameters();
    for (auto& [name, t] : params) t.mutable_values() = ck.get(name);
    return m;
}

}  // namespace monoattr

#endif
