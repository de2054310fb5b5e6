#ifndef MONOATTR_CORE_DENSE_HPP
#define MONOATTR_CORE_DENSE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "monoattr/core/error.hpp"

namespace monoattr {

using Vec = std::vector<double>;

/** Row-major dense matrix for plain (non-differentiated) numerics. */
struct Mat {
    int rows = 0;
    int cols = 0;
    Vec data;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
    double* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }
};

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm_p(const Vec& v, double p) {
    if (p == 2.0) return std::sqrt(dot(v, v));
    double s = 0.0;
    for (double x : v) s += std::pow(std::fabs(x), p);
    return std::pow(s, 1.0 / p);
}

inline double norm2(const Vec& v) { return norm_p(v, 2.0); }

inline Vec vsub(const Vec& a, const Vec& b) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline Vec vadd(const Vec& a, const Vec& b) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline Vec vscale(const Vec& a, double c) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * c;
    return r;
}

inline Vec vabs(const Vec& a) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = std::fabs(a[i]);
    return r;
}

/** y = M v for row-major (r x c) by length-c vector. */
inline Vec matvec(const Mat& m, const Vec& v) {
    if (static_cast<int>(v.size()) != m.cols) throw DimensionError("matvec: dimension mismatch");
    Vec y(m.rows, 0.0);
    for (int i = 0; i < m.rows; ++i) {
        const double* r = m.row(i);
        double acc = 0.0;
        for (int j = 0; j < m.cols; ++j) acc += r[j] * v[j];
        y[i] = acc;
    }
    return y;
}

/** y = M^T v for row-major (r x c) by length-r vector. */
inline Vec matvec_t(const Mat& m, const Vec& v) {
    if (static_cast<int>(v.size()) != m.rows) throw DimensionError("matvec_t: dimension mismatch");
    Vec y(m.cols, 0.0);
    for (int i = 0; i < m.rows; ++i) {
        const double* r = m.row(i);
        const double vi = v[i];
        for (int j = 0; j < m.cols; ++j) y[j] += r[j] * vi;
    }
    return y;
}

inline double vmin(const Vec& v) { return *std::min_element(v.begin(), v.end()); }
inline double vmax(const Vec& v) { return *std::max_element(v.begin(), v.end()); }

inline double vmean(const Vec& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/** Sample standard deviation (n-1 denominator). */
inline double vstd(const Vec& v) {
    if (v.size() < 2) return 0.0;
    const double m = vmean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/** Map to [0,1]; a constant vector maps to all zeros. */
inline Vec minmax_normalize(const Vec& v) {
    const double lo = vmin(v), hi = vmax(v);
    Vec r(v.size(), 0.0);
    if (hi > lo)
        for (std::size_t i = 0; i < v.size(); ++i) r[i] = (v[i] - lo) / (hi - lo);
    return r;
}

}  // namespace monoattr

#endif
