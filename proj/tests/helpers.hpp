#ifndef MONOATTR_TESTS_HELPERS_HPP
#define MONOATTR_TESTS_HELPERS_HPP

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "monoattr/core/dense.hpp"
#include "monoattr/core/rng.hpp"
#include "monoattr/core/tensor.hpp"

namespace testutil {

using monoattr::Rng;
using monoattr::Tensor;
using monoattr::Vec;

inline double rel_err(double got, double want) {
    const double denom = std::max(std::fabs(want), 1e-12);
    return std::fabs(got - want) / denom;
}

/** Central finite differences of a scalar function, h = 1e-5. */
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, Vec x, double h = 1e-5) {
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/** Largest relative error between an analytic gradient and its FD oracle. */
inline double max_rel_err(const Vec& got, const Vec& want) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double scale = std::max({std::fabs(want[i]), std::fabs(got[i]), 1e-6});
        worst = std::max(worst, std::fabs(got[i] - want[i]) / scale);
    }
    return worst;
}

inline Vec draw_box(Rng& rng, int n, double lo = -2.0, double hi = 2.0) {
    Vec v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline Vec draw_away_from(Rng& rng, int n, double point, double margin) {
    Vec v = draw_box(rng, n);
    for (auto& x : v)
        if (std::fabs(x - point) < margin) x = x >= point ? point + margin : point - margin;
    return v;
}

inline Vec draw_positive(Rng& rng, int n, double lo = 0.1, double hi = 2.0) {
    return draw_box(rng, n, lo, hi);
}

/** Weighted sum with fixed coefficients so every output element matters. */
inline Tensor spread_sum(const Tensor& t) {
    std::vector<double> w(t.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
    const Tensor coeff = Tensor::from(t.shape(), std::move(w));
    return monoattr::sum(monoattr::mul(t, coeff));
}

/** Contiguous slice of a leaf vector reshaped to a matrix, graph preserved. */
inline Tensor slice_matrix(const Tensor& x, int offset, int rows, int cols) {
    std::vector<int> ids(static_cast<std::size_t>(rows) * cols);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = offset + static_cast<int>(i);
    return monoattr::reshape(monoattr::gather_elems(x, ids), {rows, cols});
}

/**
 * One finite-difference scenario per registered op: builds a scalar
 * graph output from a single leaf vector so reverse-mode and central
 * differences can be compared on random inputs.
 *
 * Inputs are drawn in [-2, 2], nudged off non-smooth points (relu/abs
 * kinks, the clamp boundary) and away from domain edges (log, sqrt,
 * power) where the mathematical derivative - and so the oracle - is
 * undefined.
 */
struct OpScenario {
    int input_size;
    std::function<Vec(Rng&)> draw;
    std::function<Tensor(const Tensor&)> build;
};

inline std::map<std::string, OpScenario> op_scenarios() {
    using namespace monoattr;
    std::map<std::string, OpScenario> m;
    auto box = [](Rng& r, int n) { return draw_box(r, n); };

    m["add"] = {8, [box](Rng& r) { return box(r, 8); }, [](const Tensor& x) {
                    return spread_sum(add(slice_matrix(x, 0, 1, 4), slice_matrix(x, 4, 1, 4)));
                }};
    m["sub"] = {8, [box](Rng& r) { return box(r, 8); }, [](const Tensor& x) {
                    return spread_sum(sub(slice_matrix(x, 0, 1, 4), slice_matrix(x, 4, 1, 4)));
                }};
    m["mul"] = {8, [box](Rng& r) { return box(r, 8); }, [](const Tensor& x) {
                    return spread_sum(mul(slice_matrix(x, 0, 1, 4), slice_matrix(x, 4, 1, 4)));
                }};
    m["div"] = {8,
                [](Rng& r) {
                    Vec v = draw_box(r, 8);
                    for (int i = 4; i < 8; ++i) v[i] = r.uniform(0.5, 2.0) * (r.uniform() < 0.5 ? -1.0 : 1.0);
                    return v;
                },
                [](const Tensor& x) {
                    return spread_sum(div(slice_matrix(x, 0, 1, 4), slice_matrix(x, 4, 1, 4)));
                }};
    m["scale"] = {6, [box](Rng& r) { return box(r, 6); },
                  [](const Tensor& x) { return spread_sum(scale(x, -1.7)); }};
    m["add_const"] = {6, [box](Rng& r) { return box(r, 6); },
                      [](const Tensor& x) { return spread_sum(add_const(x, 0.9)); }};
    m["relu"] = {8, [](Rng& r) { return draw_away_from(r, 8, 0.0, 1e-2); },
                 [](const Tensor& x) { return spread_sum(relu(x)); }};
    m["abs"] = {8, [](Rng& r) { return draw_away_from(r, 8, 0.0, 1e-2); },
                [](const Tensor& x) { return spread_sum(abs(x)); }};
    m["exp"] = {6, [box](Rng& r) { return box(r, 6); },
                [](const Tensor& x) { return spread_sum(monoattr::exp(x)); }};
    m["log"] = {6, [](Rng& r) { return draw_positive(r, 6); },
                [](const Tensor& x) { return spread_sum(monoattr::log(x)); }};
    m["sqrt"] = {6, [](Rng& r) { return draw_positive(r, 6); },
                 [](const Tensor& x) { return spread_sum(monoattr::sqrt(x)); }};
    m["power"] = {6, [](Rng& r) { return draw_positive(r, 6); },
                  [](const Tensor& x) { return spread_sum(monoattr::pow(x, 1.7)); }};
    m["clamp_min"] = {8, [](Rng& r) { return draw_away_from(r, 8, 0.25, 1e-2); },
                      [](const Tensor& x) { return spread_sum(clamp_min(x, 0.25)); }};
    m["sum"] = {6, [box](Rng& r) { return box(r, 6); }, [](const Tensor& x) { return monoattr::sum(x); }};
    m["mean"] = {6, [box](Rng& r) { return box(r, 6); },
                 [](const Tensor& x) { return scale(mean(x), 2.5); }};
    m["matmul"] = {24, [box](Rng& r) { return box(r, 24); }, [](const Tensor& x) {
                       return spread_sum(matmul(slice_matrix(x, 0, 3, 4), slice_matrix(x, 12, 4, 3)));
                   }};
    m["transpose"] = {12, [box](Rng& r) { return box(r, 12); }, [](const Tensor& x) {
                          return spread_sum(transpose(slice_matrix(x, 0, 3, 4)));
                      }};
    m["softmax"] = {12, [box](Rng& r) { return box(r, 12); }, [](const Tensor& x) {
                        return spread_sum(softmax(slice_matrix(x, 0, 3, 4)));
                    }};
    m["layernorm"] = {12, [box](Rng& r) { return box(r, 12); }, [](const Tensor& x) {
                          return spread_sum(layernorm(slice_matrix(x, 0, 3, 4)));
                      }};
    m["gather"] = {12, [box](Rng& r) { return box(r, 12); }, [](const Tensor& x) {
                       return spread_sum(gather_rows(slice_matrix(x, 0, 4, 3), {2, 0, 2, 1}));
                   }};
    m["gather_elems"] = {8, [box](Rng& r) { return box(r, 8); }, [](const Tensor& x) {
                             return spread_sum(gather_elems(x, {7, 1, 1, 4}));
                         }};
    m["take_row"] = {12, [box](Rng& r) { return box(r, 12); }, [](const Tensor& x) {
                         return spread_sum(take_row(slice_matrix(x, 0, 3, 4), 1));
                     }};
    m["pick"] = {6, [box](Rng& r) { return box(r, 6); },
                 [](const Tensor& x) { return scale(pick(reshape(x, {6}), 3), 1.3); }};
    m["add_rowvec"] = {15, [box](Rng& r) { return box(r, 15); }, [](const Tensor& x) {
                           return spread_sum(add_rowvec(slice_matrix(x, 0, 4, 3),
                                                        gather_elems(x, {12, 13, 14})));
                       }};
    m["mul_rowvec"] = {15, [box](Rng& r) { return box(r, 15); }, [](const Tensor& x) {
                           return spread_sum(mul_rowvec(slice_matrix(x, 0, 4, 3),
                                                        gather_elems(x, {12, 13, 14})));
                       }};
    m["add_colvec"] = {15, [box](Rng& r) { return box(r, 15); }, [](const Tensor& x) {
                           return spread_sum(add_colvec(slice_matrix(x, 0, 3, 4),
                                                        gather_elems(x, {12, 13, 14})));
                       }};
    m["concat_cols"] = {14, [box](Rng& r) { return box(r, 14); }, [](const Tensor& x) {
                            return spread_sum(concat_cols({slice_matrix(x, 0, 2, 3), slice_matrix(x, 6, 2, 4)}));
                        }};
    m["concat_rows"] = {14, [box](Rng& r) { return box(r, 14); }, [](const Tensor& x) {
                            return spread_sum(concat_rows({slice_matrix(x, 0, 3, 2), slice_matrix(x, 6, 4, 2)}));
                        }};
    m["reshape"] = {12, [box](Rng& r) { return box(r, 12); }, [](const Tensor& x) {
                        return spread_sum(reshape(x, {3, 4}));
                    }};
    m["conv1d"] = {26, [box](Rng& r) { return box(r, 26); }, [](const Tensor& x) {
                       std::vector<int> wi(12);
                       for (int i = 0; i < 12; ++i) wi[i] = 14 + i;
                       return spread_sum(conv1d(slice_matrix(x, 0, 2, 7),
                                                reshape(gather_elems(x, wi), {2, 2, 3})));
                   }};
    m["avgpool1d2"] = {12, [box](Rng& r) { return box(r, 12); }, [](const Tensor& x) {
                           return spread_sum(avgpool1d2(slice_matrix(x, 0, 2, 6)));
                       }};
    m["upsample1d2"] = {12, [box](Rng& r) { return box(r, 12); }, [](const Tensor& x) {
                            return spread_sum(upsample1d2(slice_matrix(x, 0, 2, 6)));
                        }};
    return m;
}

/** Run the FD oracle for one op over `seeds` random inputs; worst rel err. */
inline double fd_check_op(const std::string& name, const OpScenario& sc, int seeds, std::uint64_t seed0 = 11) {
    double worst = 0.0;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(seed0 + static_cast<std::uint64_t>(s) * 977);
        const Vec x0 = sc.draw(rng);
        Tensor leaf = Tensor::from({static_cast<int>(x0.size())}, x0, /*requires_grad=*/true);
        Tensor out = sc.build(leaf);
        monoattr::backward(out);
        const Vec got = leaf.grad();
        const Vec want = fd_gradient(
            [&](const Vec& xv) {
                Tensor lx = Tensor::from({static_cast<int>(xv.size())}, xv);
                return sc.build(lx).scalar_value();
            },
            x0);
        worst = std::max(worst, max_rel_err(got, want));
    }
    (void)name;
    return worst;
}

}  // namespace testutil

#endif
