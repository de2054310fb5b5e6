#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "monoattr/metrics.hpp"

using namespace monoattr;

TEST_CASE("gini sparseness analytic cases", "[metrics]") {
    SECTION("uniform vector is 0 for any d") {
        for (int d : {2, 3, 7, 64}) {
            Vec v(static_cast<std::size_t>(d), 0.37);
            CHECK(std::fabs(gini_sparseness(v)) < 1e-12);
        }
    }
    SECTION("one-hot d=4 is 0.75") {
        CHECK(gini_sparseness({0, 0, 2.5, 0}) == Catch::Approx(0.75).margin(1e-12));
    }
    SECTION("|phi| = [1,2,3] matches hand evaluation of the formula") {
        // ascending sorted: 1,2,3; l1 = 6, d = 3
        // G = 1 - 2*[ (1/6)(2.5/3) + (2/6)(1.5/3) + (3/6)(0.5/3) ]
        const double want = 1.0 - 2.0 * ((1.0 / 6) * (2.5 / 3) + (2.0 / 6) * (1.5 / 3) + (3.0 / 6) * (0.5 / 3));
        CHECK(gini_sparseness({1, -2, 3}) == Catch::Approx(want).margin(1e-15));
    }
    SECTION("all-zero vector is undefined") {
        CHECK_THROWS_AS(gini_sparseness({0, 0, 0}), UndefinedMetricError);
    }
    SECTION("bounds and scale invariance on random vectors") {
        testutil::Rng rng(3);
        for (int trial = 0; trial < 200; ++trial) {
            const int d = 2 + static_cast<int>(rng.below(30));
            Vec v = rng.normal_vector(static_cast<std::size_t>(d));
            const double g = gini_sparseness(v);
            CHECK(g >= 0.0);
            CHECK(g <= 1.0 - 1.0 / static_cast<double>(d) + 1e-12);
            const double c = rng.uniform(0.01, 100.0);
            CHECK(std::fabs(gini_sparseness(vscale(v, c)) - g) < 1e-12);
        }
    }
}

namespace {

// hand-built linear context: attribution phi(x) = M x, probabilities via
// a fixed 2-class linear head
struct LinearCtx {
    Mat m;
    Vec w_head;  // logit = w.x, probs = softmax([z, -z])

    AttrFn attr() const {
        return [this](const Vec& x) { return matvec(m, x); };
    }
    ProbFn probs() const {
        return [this](const Vec& x) {
            const double z = dot(w_head, x);
            const double e1 = std::exp(z), e2 = std::exp(-z);
            return Vec{e1 / (e1 + e2), e2 / (e1 + e2)};
        };
    }
};

}  // namespace

TEST_CASE("ris basics", "[metrics]") {
    LinearCtx ctx;
    ctx.m = Mat(3, 3);
    ctx.m.at(0, 0) = 1.5;
    ctx.m.at(1, 1) = -0.5;
    ctx.m.at(2, 2) = 2.0;
    ctx.w_head = {0.2, 0.1, 0.3};
    const Vec x = {1.0, 0.5, -0.25};

    StabilityConfig cfg;
    cfg.seed = 17;

    SECTION("constant attribution gives 0") {
        AttrFn constant = [](const Vec&) { return Vec{1.0, 2.0, 3.0}; };
        CHECK(ris(x, constant, ctx.probs(), cfg).value == 0.0);
        CHECK(ros(x, constant, ctx.probs(), cfg).value == 0.0);
    }

    SECTION("single-perturbation run matches the hand formula") {
        cfg.n_perturbations = 1;
        cfg.sigma = 0.05;
        cfg.radius_floor = 0.05;  // one rung
        // reproduce the draw
        Rng rng(cfg.seed ^ 0x5157ce1db7ULL);
        const Vec z = rng.normal_vector(3);
        Vec xp = x;
        for (int i = 0; i < 3; ++i) xp[i] += 0.05 * z[i];
        const Vec phi_x = ctx.attr()(x), phi_p = ctx.attr()(xp);
        const double want =
            norm2(x) / norm2(phi_x) * (norm2(vsub(phi_x, phi_p)) / norm2(vsub(x, xp)));
        const auto got = ris(x, ctx.attr(), ctx.probs(), cfg);
        CHECK(got.value == Catch::Approx(want).epsilon(1e-12));
    }

    SECTION("doubling sigma never decreases the max (nested neighborhoods)") {
        cfg.sigma = 0.04;
        cfg.radius_floor = 0.01;
        const double v1 = ris(x, ctx.attr(), ctx.probs(), cfg).value;
        cfg.sigma = 0.08;
        const double v2 = ris(x, ctx.attr(), ctx.probs(), cfg).value;
        CHECK(v2 >= v1);
        // and again for a nonlinear attribution function
        AttrFn nl = [](const Vec& v) {
            Vec r(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) r[i] = std::tanh(3.0 * v[i]) + 0.1 * v[i] * v[i];
            return r;
        };
        cfg.sigma = 0.04;
        const double n1 = ris(x, nl, ctx.probs(), cfg).value;
        cfg.sigma = 0.08;
        const double n2 = ris(x, nl, ctx.probs(), cfg).value;
        CHECK(n2 >= n1);
    }
}

TEST_CASE("ros basics", "[metrics]") {
    LinearCtx ctx;
    ctx.m = Mat(2, 2);
    ctx.m.at(0, 0) = 1.0;
    ctx.m.at(1, 1) = 1.0;
    ctx.w_head = {0.8, -0.4};
    const Vec x = {0.6, 0.2};
    StabilityConfig cfg;
    cfg.seed = 23;

    SECTION("hand-built 2-class linear model, N=1") {
        cfg.n_perturbations = 1;
        cfg.sigma = 0.03;
        cfg.radius_floor = 0.03;
        Rng rng(cfg.seed ^ 0x5157ce1db7ULL);
        const Vec z = rng.normal_vector(2);
        Vec xp = x;
        for (int i = 0; i < 2; ++i) xp[i] += 0.03 * z[i];
        const Vec phi_x = ctx.attr()(x), phi_p = ctx.attr()(xp);
        const Vec fx = ctx.probs()(x), fp = ctx.probs()(xp);
        const double want =
            norm2(fx) / norm2(phi_x) * (norm2(vsub(phi_x, phi_p)) / norm2(vsub(fx, fp)));
        CHECK(ros(x, ctx.attr(), ctx.probs(), cfg).value == Catch::Approx(want).epsilon(1e-12));
    }

    SECTION("identical outputs engage the epsilon guard and flag the result") {
        ProbFn flat = [](const Vec&) { return Vec{0.5, 0.5}; };
        const auto got = ros(x, ctx.attr(), flat, cfg);
        CHECK(got.guarded);
        CHECK(std::isfinite(got.value));
    }
}

TEST_CASE("weighted aggregation", "[metrics]") {
    SECTION("identical minmax-stable vectors pass through") {
        const Vec v = {0.0, 1.0, 0.25};
        const Vec got = aggregate_weighted({v, v, v}, {0.2, 0.5, 0.3});
        for (int i = 0; i < 3; ++i) CHECK(got[i] == Catch::Approx(v[i]).margin(1e-15));
    }
    SECTION("one-hot weight selects the normalized vector") {
        const Vec a = {2.0, 4.0, 6.0};
        const Vec b = {9.0, 9.0, 9.0};
        const Vec got = aggregate_weighted({a, b}, {1.0, 0.0});
        CHECK(got == Vec{0.0, 0.5, 1.0});
    }
    SECTION("K=2 arithmetic") {
        const Vec got = aggregate_weighted({Vec{0.0, 1.0}, Vec{1.0, 0.0}}, {0.5, 0.5});
        CHECK(got == Vec{0.5, 0.5});
    }
    SECTION("order independence is bit exact") {
        testutil::Rng rng(5);
        std::vector<WeightedAttribution> fwd, rev;
        for (int k = 0; k < 6; ++k) {
            WeightedAttribution e{k, rng.normal_vector(16), (k + 1) / 21.0};
            fwd.push_back(e);
            rev.insert(rev.begin(), e);
        }
        CHECK(aggregate_weighted(fwd) == aggregate_weighted(rev));
    }
    SECTION("weight simplex violations") {
        CHECK_THROWS_AS(aggregate_weighted({Vec{1.0}, Vec{2.0}}, {0.7, 0.7}), ConfigError);
        CHECK_THROWS_AS(aggregate_weighted({Vec{1.0}, Vec{2.0}}, {1.5, -0.5}), ConfigError);
    }
}

TEST_CASE("paired tests", "[metrics]") {
    SECTION("zero-mean symmetric differences give t = 0, p = 1") {
        const Vec a = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
        const Vec b = {1.5, 1.5, 3.5, 3.5, 5.5, 5.5};
        const auto r = paired_compare(a, b);
        CHECK(r.t_stat == Catch::Approx(0.0).margin(1e-14));
        CHECK(r.t_p == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("identical vectors are degenerate") {
        const Vec a = {1, 2, 3, 4, 5};
        CHECK_THROWS_AS(paired_compare(a, a), DegenerateTestError);
    }
    SECTION("t statistic matches a quadrature oracle for the p-value") {
        // fixed pair set, textbook style
        const Vec a = {12.1, 14.3, 11.9, 13.5, 12.8, 14.0, 13.1, 12.5};
        const Vec b = {11.4, 13.1, 12.0, 12.2, 12.1, 13.0, 12.4, 11.8};
        const auto r = paired_compare(a, b);
        // oracle: t by hand, p by Simpson quadrature of the t density
        Vec d(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
        const double n = 8.0, md = vmean(d), sd = vstd(d);
        const double t_hand = md / (sd / std::sqrt(n));
        CHECK(r.t_stat == Catch::Approx(t_hand).epsilon(1e-12));
        const double nu = n - 1.0;
        auto density = [nu](double x) {
            return std::exp(std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2)) /
                   std::sqrt(nu * std::acos(-1.0)) * std::pow(1.0 + x * x / nu, -(nu + 1) / 2);
        };
        // two-sided tail by integrating the body on [-|t|, |t|]
        const double T = std::fabs(t_hand);
        const int steps = 20000;
        double body = 0.0;
        for (int i = 0; i < steps; ++i) {
            const double x0 = -T + 2 * T * i / steps, x1 = -T + 2 * T * (i + 1) / steps;
            body += (density(x0) + 4 * density((x0 + x1) / 2) + density(x1)) * (x1 - x0) / 6;
        }
        CHECK(r.t_p == Catch::Approx(1.0 - body).margin(1e-6));
    }
    SECTION("wilcoxon exact matches brute force over sign assignments") {
        const Vec a = {2.4, 1.1, 3.73, 0.8, 2.04, 1.6, 2.93, 0.5, 1.31, 3.12};
        const Vec b = {1.9, 1.41, 2.6, 1.02, 1.2, 1.03, 2.2, 1.16, 0.6, 2.3};
        const auto r = paired_compare(a, b);
        REQUIRE(r.wilcoxon_exact);

        // brute force: all 2^10 sign assignments of ranks
        Vec d(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
        const std::size_t n = d.size();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t i, std::size_t j) { return std::fabs(d[i]) < std::fabs(d[j]); });
        Vec rank(n);
        for (std::size_t i = 0; i < n; ++i) rank[idx[i]] = static_cast<double>(i + 1);
        double w_plus = 0.0, w_minus = 0.0;
        for (std::size_t i = 0; i < n; ++i) (d[i] > 0 ? w_plus : w_minus) += rank[i];
        const double w = std::min(w_plus, w_minus);
        CHECK(r.wilcoxon_w == Catch::Approx(w));

        std::size_t count = 0, total = 1u << n;
        for (std::size_t mask = 0; mask < total; ++mask) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (mask & (1u << i)) s += rank[i];
            if (s <= w) ++count;
        }
        const double p_brute = std::min(1.0, 2.0 * static_cast<double>(count) / static_cast<double>(total));
        CHECK(r.wilcoxon_p == Catch::Approx(p_brute).margin(1e-12));
    }
    SECTION("unit shift with noise is decisively significant") {
        testutil::Rng rng(11);
        Vec b(10), a(10);
        for (int i = 0; i < 10; ++i) {
            b[i] = rng.uniform(0.0, 1.0);
            a[i] = b[i] + 1.0 + 0.05 * rng.normal();
        }
        const auto r = paired_compare(a, b);
        CHECK(r.t_p < 0.01);
        CHECK(r.wilcoxon_p < 0.01);
    }
}

TEST_CASE("bh-fdr", "[metrics]") {
    SECTION("single p is returned unchanged") {
        const auto r = bh_fdr({0.031}, 0.05);
        CHECK(r.q_values[0] == Catch::Approx(0.031));
        CHECK(r.reject[0]);
    }
    SECTION("step-up hand evaluation") {
        const auto r = bh_fdr({0.01, 0.02, 0.03, 0.04}, 0.05);
        for (double qv : r.q_values) CHECK(qv == Catch::Approx(0.04));
        for (bool b : r.reject) CHECK(b);
    }
    SECTION("all ones rejected nowhere") {
        const auto r = bh_fdr({1.0, 1.0, 1.0}, 0.05);
        for (bool b : r.reject) CHECK_FALSE(b);
    }
    SECTION("monotone adjusted values and Bonferroni superset") {
        testutil::Rng rng(29);
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t m = 1 + rng.below(12);
            Vec p(m);
            for (auto& x : p) x = rng.uniform(0.0, 1.0);
            const double q = 0.1;
            const auto r = bh_fdr(p, q);
            // sorted adjusted values are monotone in sorted p order
            std::vector<std::size_t> order(m);
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(),
                      [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });
            for (std::size_t i = 1; i < m; ++i)
                CHECK(r.q_values[order[i - 1]] <= r.q_values[order[i]] + 1e-15);
            // every Bonferroni rejection is a BH rejection
            for (std::size_t i = 0; i < m; ++i)
                if (p[i] <= q / static_cast<double>(m)) CHECK(r.reject[i]);
        }
    }
    SECTION("invalid p-values") {
        CHECK_THROWS_AS(bh_fdr({-0.1}, 0.05), ValidationError);
        CHECK_THROWS_AS(bh_fdr({1.2}, 0.05), ValidationError);
    }
}

TEST_CASE("metric report aggregation", "[metrics]") {
    MetricReport rep;
    rep.add({"activation", 0, 0, 0.5, 1.0, 2.0, false});
    rep.add({"activation", 0, 1, 0.7, 3.0, 4.0, false});
    rep.add({"teo", 1, 0, 0.4, 0.5, 0.6, false});
    const auto agg = rep.aggregates();
    REQUIRE(agg.size() == 2);
    CHECK(agg[0].method == "activation");
    CHECK(agg[0].sparseness_mean == Catch::Approx(0.6));
    CHECK(agg[0].ris_mean == Catch::Approx(2.0));
    CHECK(agg[0].n == 2);
    CHECK_THROWS_AS(rep.add({"x", 0, 0, 1.5, 0.0, 0.0, false}), ContractError);
}
