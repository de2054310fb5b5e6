#ifndef MONOATTR_METRICS_HPP
#define MONOATTR_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "monoattr/core/dense.hpp"
#include "monoattr/core/error.hpp"
#include "monoattr/core/rng.hpp"

namespace monoattr {

// ---------------------------------------------------------------------------
// Sparseness
// ---------------------------------------------------------------------------

/**
 * Gini index of |phi|: 0 for a uniform vector, 1 - 1/d for one-hot.
 *
 *   G(v) = 1 - 2 * sum_k (v_(k) / ||v||_1) * ((d - k + 0.5) / d)
 *
 * over the ascending-sorted absolute values, k = 1..d.
 */
inline double gini_sparseness(const Vec& phi) {
    if (phi.empty()) throw UndefinedMetricError("gini: empty vector");
    Vec v = vabs(phi);
    const double l1 = std::accumulate(v.begin(), v.end(), 0.0);
    if (l1 == 0.0) throw UndefinedMetricError("gini: all-zero attribution vector");
    std::sort(v.begin(), v.end());
    const double d = static_cast<double>(v.size());
    double acc = 0.0;
    for (std::size_t k = 1; k <= v.size(); ++k)
        acc += (v[k - 1] / l1) * ((d - static_cast<double>(k) + 0.5) / d);
    return 1.0 - 2.0 * acc;
}

// ---------------------------------------------------------------------------
// Relative input / output stability
// ---------------------------------------------------------------------------

struct StabilityConfig {
    double p_norm = 2.0;
    int n_perturbations = 16;   // gaussian directions per radius rung
    double sigma = -1.0;        // <0: 0.05 * ||x|| / sqrt(dim)
    double radius_floor = -1.0; // <0: auto_sigma / 4; fixed floor keeps
                                // neighborhoods nested when sigma grows
    std::uint64_t seed = 0;
    double epsilon = 1e-8;      // denominator guard

    void validate() const {
        if (n_perturbations < 1) throw ConfigError("stability: n_perturbations must be >= 1");
        if (epsilon <= 0.0) throw ConfigError("stability: epsilon must be > 0");
    }
};

struct StabilityValue {
    double value = 0.0;
    bool guarded = false;  // an epsilon guard engaged somewhere
};

using AttrFn = std::function<Vec(const Vec&)>;
using ProbFn = std::function<Vec(const Vec&)>;

namespace detail {

inline int argmax_idx(const Vec& v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = static_cast<int>(i);  // lowest index wins ties
    return best;
}

inline double auto_sigma(const Vec& x) {
    return 0.05 * norm2(x) / std::sqrt(static_cast<double>(x.size()));
}

/** Radius ladder sigma, sigma/2, ... down to the fixed floor (>= 1 rung). */
inline Vec radius_ladder(double sigma, double floor) {
    Vec radii;
    double r = sigma;
    radii.push_back(r);
    while (r * 0.5 >= floor) {
        r *= 0.5;
        radii.push_back(r);
    }
    return radii;
}

struct Neighborhood {
    std::vector<Vec> points;  // retained same-prediction perturbations
};

inline Neighborhood sample_neighborhood(const Vec& x, const ProbFn& probs, const StabilityConfig& cfg) {
    const double sigma = cfg.sigma > 0.0 ? cfg.sigma : auto_sigma(x);
    const double floor = cfg.radius_floor > 0.0 ? cfg.radius_floor : auto_sigma(x) / 4.0;
    const Vec radii = radius_ladder(sigma, std::min(floor, sigma));
    Rng rng(cfg.seed ^ 0x5157ce1db7ULL);
    std::vector<Vec> dirs;
    for (int j = 0; j < cfg.n_perturbations; ++j) dirs.push_back(rng.normal_vector(x.size()));

    const int yhat = argmax_idx(probs(x));
    Neighborhood nb;
    for (double r : radii)
        for (const auto& z : dirs) {
            Vec xp = x;
            for (std::size_t i = 0; i < xp.size(); ++i) xp[i] += r * z[i];
            if (argmax_idx(probs(xp)) == yhat) nb.points.push_back(std::move(xp));
        }
    if (nb.points.empty())
        throw EmptyNeighborhoodError("stability: no perturbation preserved the prediction");
    return nb;
}

}  // namespace detail

/**
 * Relative Input Stability over a same-prediction neighborhood of the
 * attributed representation x:
 *
 *   RIS = (||x||_p / ||phi(x)||_p) * max_x' ||phi(x) - phi(x')||_p / ||x - x'||_p
 *
 * The neighborhood is a fixed set of seeded Gaussian directions sampled
 * at geometrically nested radii, so enlarging sigma enlarges the point
 * set and the max can only grow.
 */
inline StabilityValue ris(const Vec& x, const AttrFn& attr, const ProbFn& probs, const StabilityConfig& cfg) {
    cfg.validate();
    const auto nb = detail::sample_neighborhood(x, probs, cfg);
    const Vec phi_x = attr(x);
    StabilityValue out;
    double phi_norm = norm_p(phi_x, cfg.p_norm);
    if (phi_norm < cfg.epsilon) {
        phi_norm = cfg.epsilon;
        out.guarded = true;
    }
    double worst = 0.0;
    for (const auto& xp : nb.points) {
        const Vec phi_p = attr(xp);
        double denom = norm_p(vsub(x, xp), cfg.p_norm);
        if (denom < cfg.epsilon) {
            denom = cfg.epsilon;
            out.guarded = true;
        }
        worst = std::max(worst, norm_p(vsub(phi_x, phi_p), cfg.p_norm) / denom);
    }
    out.value = norm_p(x, cfg.p_norm) / phi_norm * worst;
    return out;
}

/**
 * Relative Output Stability: prefactor ||f(x)||_p / ||phi(x)||_p and
 * per-point denominator ||f(x) - f(x')||_p, with f the probability
 * vector of the classifier.
 */
inline StabilityValue ros(const Vec& x, const AttrFn& attr, const ProbFn& probs, const StabilityConfig& cfg) {
    cfg.validate();
    const auto nb = detail::sample_neighborhood(x, probs, cfg);
    const Vec phi_x = attr(x);
    const Vec f_x = probs(x);
    StabilityValue out;
    double phi_norm = norm_p(phi_x, cfg.p_norm);
    if (phi_norm < cfg.epsilon) {
        phi_norm = cfg.epsilon;
        out.guarded = true;
    }
    double worst = 0.0;
    for (const auto& xp : nb.points) {
        const Vec phi_p = attr(xp);
        double denom = norm_p(vsub(f_x, probs(xp)), cfg.p_norm);
        if (denom < cfg.epsilon) {
            denom = cfg.epsilon;
            out.guarded = true;
        }
        worst = std::max(worst, norm_p(vsub(phi_x, phi_p), cfg.p_norm) / denom);
    }
    out.value = norm_p(f_x, cfg.p_norm) / phi_norm * worst;
    return out;
}

// ---------------------------------------------------------------------------
// Aggregation of attribution vectors
// ---------------------------------------------------------------------------

struct WeightedAttribution {
    int order_key = 0;  // canonical method rank for order-independent summation
    Vec phi;
    double weight = 0.0;
};

/**
 * Weighted consensus over K attribution vectors. Each vector is min-max
 * normalized first (the methods have incomparable scales); weights must
 * lie on the simplex. Entries are summed in order_key order so any
 * input permutation gives bit-identical output.
 */
inline Vec aggregate_weighted(std::vector<WeightedAttribution> entries) {
    if (entries.empty()) throw ConfigError("aggregate: no attribution vectors");
    const std::size_t m = entries[0].phi.size();
    double wsum = 0.0;
    for (const auto& e : entries) {
        if (e.phi.size() != m) throw ConfigError("aggregate: vectors differ in length");
        if (e.weight < 0.0) throw ConfigError("aggregate: negative weight");
        wsum += e.weight;
    }
    if (std::fabs(wsum - 1.0) > 1e-9) throw ConfigError("aggregate: weights must sum to 1");
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.order_key < b.order_key; });
    Vec out(m, 0.0);
    for (const auto& e : entries) {
        const Vec nm = minmax_normalize(e.phi);
        for (std::size_t i = 0; i < m; ++i) out[i] += e.weight * nm[i];
    }
    return out;
}

inline Vec aggregate_weighted(const std::vector<Vec>& phis, const Vec& weights) {
    if (phis.size() != weights.size()) throw ConfigError("aggregate: K vectors need K weights");
    std::vector<WeightedAttribution> entries;
    for (std::size_t k = 0; k < phis.size(); ++k)
        entries.push_back({static_cast<int>(k), phis[k], weights[k]});
    return aggregate_weighted(std::move(entries));
}

// ---------------------------------------------------------------------------
// Statistical comparison protocol
// ---------------------------------------------------------------------------

namespace detail {

/** Regularized incomplete beta I_x(a,b) via Lentz continued fraction. */
inline double betacf(double a, double b, double x) {
    const int max_iter = 300;
    const double eps = 3e-16, fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

inline double incbeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                      b * std::log(1.0 - x);
    const double front = std::exp(ln);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

/** Two-sided p-value of Student's t with nu degrees of freedom. */
inline double student_t_two_sided(double t, double nu) {
    if (!std::isfinite(t)) return 0.0;
    return incbeta(nu / 2.0, 0.5, nu / (nu + t * t));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace detail

struct PairedCompareResult {
    double t_stat = 0.0;
    double t_p = 1.0;
    double wilcoxon_w = 0.0;
    double wilcoxon_p = 1.0;
    bool wilcoxon_exact = false;
};

/**
 * Two-sided paired t-test and Wilcoxon signed-rank test on values
 * paired by position. Wilcoxon uses the exact rank-sum distribution for
 * n <= 25 tie-free inputs and the tie-corrected normal approximation
 * otherwise; zero differences are dropped (signed-rank convention).
 */
inline PairedCompareResult paired_compare(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ContractError("paired_compare: length mismatch");
    if (a.size() < 5) throw ContractError("paired_compare: need at least 5 pairs");
    Vec d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    bool all_zero = true;
    for (double x : d) all_zero = all_zero && x == 0.0;
    if (all_zero) throw DegenerateTestError("paired_compare: all paired differences are zero");

    PairedCompareResult res;
    const double n = static_cast<double>(d.size());
    const double md = vmean(d);
    const double sd = vstd(d);
    if (sd == 0.0) {
        res.t_stat = md > 0.0 ? std::numeric_limits<double>::infinity()
                              : -std::numeric_limits<double>::infinity();
        res.t_p = 0.0;
    } else {
        res.t_stat = md / (sd / std::sqrt(n));
        res.t_p = detail::student_t_two_sided(res.t_stat, n - 1.0);
    }

    // Wilcoxon signed-rank on nonzero differences
    std::vector<double> nz;
    for (double x : d)
        if (x != 0.0) nz.push_back(x);
    const std::size_t m = nz.size();
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t i, std::size_t j) { return std::fabs(nz[i]) < std::fabs(nz[j]); });
    Vec rank(m, 0.0);
    bool has_ties = false;
    for (std::size_t i = 0; i < m;) {
        std::size_t j = i;
        while (j + 1 < m && std::fabs(nz[idx[j + 1]]) == std::fabs(nz[idx[i]])) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        if (j > i) has_ties = true;
        for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = avg;
        i = j + 1;
    }
    double w_plus = 0.0, w_minus = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        (nz[i] > 0.0 ? w_plus : w_minus) += rank[i];
    res.wilcoxon_w = std::min(w_plus, w_minus);

    if (m <= 25 && !has_ties) {
        // exact null distribution of W+ by subset-sum counting over ranks 1..m
        const std::size_t smax = m * (m + 1) / 2;
        std::vector<double> ways(smax + 1, 0.0);
        ways[0] = 1.0;
        for (std::size_t r = 1; r <= m; ++r)
            for (std::size_t s = smax; s + 1 > r; --s) ways[s] += ways[s - r];
        const double total = std::pow(2.0, static_cast<double>(m));
        double cum = 0.0;
        const std::size_t w = static_cast<std::size_t>(std::llround(res.wilcoxon_w));
        for (std::size_t s = 0; s <= w && s <= smax; ++s) cum += ways[s];
        res.wilcoxon_p = std::min(1.0, 2.0 * cum / total);
        res.wilcoxon_exact = true;
    } else {
        const double mm = static_cast<double>(m);
        double tie_corr = 0.0;
        for (std::size_t i = 0; i < m;) {
            std::size_t j = i;
            while (j + 1 < m && rank[idx[j + 1]] == rank[idx[i]]) ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_corr += t * t * t - t;
            i = j + 1;
        }
        const double mu = mm * (mm + 1.0) / 4.0;
        const double var = mm * (mm + 1.0) * (2.0 * mm + 1.0) / 24.0 - tie_corr / 48.0;
        if (var <= 0.0) throw DegenerateTestError("wilcoxon: zero variance after tie correction");
        const double z = (res.wilcoxon_w - mu + 0.5) / std::sqrt(var);  // continuity-corrected
        res.wilcoxon_p = std::min(1.0, 2.0 * detail::normal_cdf(z));
    }
    return res;
}

struct FdrResult {
    Vec q_values;             // BH-adjusted, aligned with the input order
    std::vector<bool> reject; // q_value <= q
};

/** Benjamini-Hochberg step-up adjustment with monotone adjusted values. */
inline FdrResult bh_fdr(const Vec& pvalues, double q) {
    for (double p : pvalues)
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("bh_fdr: p-value outside [0,1]");
    if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("bh_fdr: q outside [0,1]");
    const std::size_t m = pvalues.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return pvalues[i] < pvalues[j]; });
    Vec adj(m, 1.0);
    double running = 1.0;
    for (std::size_t r = m; r > 0; --r) {
        const std::size_t i = order[r - 1];
        running = std::min(running, pvalues[i] * static_cast<double>(m) / static_cast<double>(r));
        adj[i] = running;
    }
    FdrResult res;
    res.q_values = std::move(adj);
    res.reject.resize(m);
    for (std::size_t i = 0; i < m; ++i) res.reject[i] = res.q_values[i] <= q;
    return res;
}

// ---------------------------------------------------------------------------
// Report plumbing
// ---------------------------------------------------------------------------

struct MetricSample {
    std::string method;
    int class_id = 0;
    int sample_id = 0;
    double sparseness = 0.0;
    double ris_value = 0.0;
    double ros_value = 0.0;
    bool guarded = false;
};

struct MetricAggregate {
    std::string method;
    int class_id = 0;
    double sparseness_mean = 0.0, sparseness_std = 0.0;
    double ris_mean = 0.0, ris_std = 0.0;
    double ros_mean = 0.0, ros_std = 0.0;
    int n = 0;
};

/** Per-(method, class) sample values with mean +/- std rollups. */
struct MetricReport {
    std::vector<MetricSample> rows;

    void add(MetricSample s) {
        if (!(s.sparseness >= 0.0 && s.sparseness <= 1.0))
            throw ContractError("metric report: sparseness outside [0,1]");
        if (s.ris_value < 0.0 || s.ros_value < 0.0)
            throw ContractError("metric report: negative stability value");
        rows.push_back(std::move(s));
    }

    std::vector<MetricAggregate> aggregates() const {
        std::map<std::pair<std::string, int>, std::vector<const MetricSample*>> groups;
        for (const auto& r : rows) groups[{r.method, r.class_id}].push_back(&r);
        std::vector<MetricAggregate> out;
        for (const auto& [key, rs] : groups) {
            MetricAggregate a;
            a.method = key.first;
            a.class_id = key.second;
            a.n = static_cast<int>(rs.size());
            Vec sp, ri, ro;
            for (const auto* r : rs) {
                sp.push_back(r->sparseness);
                ri.push_back(r->ris_value);
                ro.push_back(r->ros_value);
            }
            a.sparseness_mean = vmean(sp);
            a.sparseness_std = vstd(sp);
            a.ris_mean = vmean(ri);
            a.ris_std = vstd(ri);
            a.ros_mean = vmean(ro);
            a.ros_std = vstd(ro);
            out.push_back(std::move(a));
        }
        return out;
    }
};

}  // namespace monoattr

#endif
