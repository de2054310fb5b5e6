#ifndef MONOATTR_CORE_TENSOR_HPP
#define MONOATTR_CORE_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "monoattr/core/error.hpp"

namespace monoattr {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (int e : s) n *= static_cast<std::size_t>(e);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

/**
 * Dense f64 tensor participating in a dynamically recorded computation
 * graph. Values are immutable once created (except through explicit
 * parameter updates between forward passes); gradients accumulate into
 * leaf tensors on backward().
 *
 * The graph is a DAG of shared nodes: an op's result holds owning
 * references to its inputs plus a closure that routes the incoming
 * gradient. backward() linearizes the DAG into a Tape (topological
 * order) and visits every node exactly once.
 */
class Tensor {
public:
    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;  // allocated on demand
        bool requires_grad = false;
        bool leaf = true;
        const char* op = "leaf";
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backprop;  // scatter node.grad into parents

        void ensure_grad() {
            if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
        }
    };

    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
        if (shape_size(shape) != data.size())
            throw DimensionError("tensor: shape " + shape_str(shape) + " does not match data length " +
                                 std::to_string(data.size()));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<double> d(shape_size(shape), 0.0);
        return from(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor constant(Shape shape, double v) {
        std::vector<double> d(shape_size(shape), v);
        return from(std::move(shape), std::move(d), false);
    }

    static Tensor scalar(double v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->leaf; }
    const char* op_name() const { return node_->op; }

    const std::vector<double>& values() const { return node_->value; }
    double value_at(std::size_t i) const { return node_->value[i]; }
    double scalar_value() const {
        if (size() != 1) throw ContractError("scalar_value: tensor has " + std::to_string(size()) + " elements");
        return node_->value[0];
    }

    /** Accumulated gradient; zeros if backward has not reached this leaf. */
    std::vector<double> grad() const {
        if (node_->grad.size() != node_->value.size()) return std::vector<double>(node_->value.size(), 0.0);
        return node_->grad;
    }

    void zero_grad() const { node_->grad.assign(node_->value.size(), 0.0); }

    /** Direct value access for parameter updates between forward passes. */
    std::vector<double>& mutable_values() { return node_->value; }

    std::shared_ptr<Node> node() const { return node_; }

    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<Node> node_;
};

/**
 * Linearized computation graph: nodes in topological order (every
 * node's inputs precede it). Built once per backward pass.
 */
struct Tape {
    std::vector<Tensor::Node*> order;

    static Tape build(const std::shared_ptr<Tensor::Node>& root) {
        Tape t;
        std::unordered_set<Tensor::Node*> seen;
        std::vector<std::pair<Tensor::Node*, std::size_t>> stack;
        stack.emplace_back(root.get(), 0);
        seen.insert(root.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                Tensor::Node* p = node->parents[next++].get();
                if (!seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                t.order.push_back(node);
                stack.pop_back();
            }
        }
        return t;  // parents before children
    }
};

namespace detail {

inline void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError(std::string("op '") + op + "' produced a non-finite value");
}

inline Tensor make_op(const char* op, Shape shape, std::vector<double> value,
                      std::vector<Tensor> parents, std::function<void(Tensor::Node&)> backprop) {
    check_finite(value, op);
    auto n = std::make_shared<Tensor::Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    n->leaf = false;
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    n->requires_grad = rg;
    for (auto& p : parents) n->parents.push_back(p.node());
    if (rg) n->backprop = std::move(backprop);
    return Tensor(std::move(n));
}

// C(n x m) = A(n x k) * B(k x m), C pre-zeroed. Hot path for attention.
inline void gemm(const double* a, const double* b, double* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * k;
        double* ci = c + static_cast<std::size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b + static_cast<std::size_t>(p) * m;
            for (int j = 0; j < m; ++j) ci[j] += av * bp[j];
        }
    }
}

// C(n x k) += A(n x m) * B(k x m)^T  (row-dot-row)
inline void gemm_nt(const double* a, const double* b, double* c, int n, int m, int k) {
    for (int i = 0; i < n; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * m;
        double* ci = c + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double* bp = b + static_cast<std::size_t>(p) * m;
            double acc = 0.0;
            for (int j = 0; j < m; ++j) acc += ai[j] * bp[j];
            ci[p] += acc;
        }
    }
}

// C(k x m) += A(n x k)^T * B(n x m)
inline void gemm_tn(const double* a, const double* b, double* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * k;
        const double* bi = b + static_cast<std::size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            double* cp = c + static_cast<std::size_t>(p) * m;
            for (int j = 0; j < m; ++j) cp[j] += av * bi[j];
        }
    }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
    return detail::make_op("add", a.shape(), std::move(v), {a, b}, [](Tensor::Node& n) {
        for (int s = 0; s < 2; ++s) {
            auto& p = *n.parents[s];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] - b.values()[i];
    return detail::make_op("sub", a.shape(), std::move(v), {a, b}, [](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
    return detail::make_op("mul", a.shape(), std::move(v), {a, b}, [](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
        }
    });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "div");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] / b.values()[i];
    return detail::make_op("div", a.shape(), std::move(v), {a, b}, [](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] / pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                pb.grad[i] -= n.grad[i] * pa.value[i] / (pb.value[i] * pb.value[i]);
        }
    });
}

inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * c;
    return detail::make_op("scale", a.shape(), std::move(v), {a}, [c](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * c;
    });
}

inline Tensor add_const(const Tensor& a, double c) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + c;
    return detail::make_op("add_const", a.shape(), std::move(v), {a}, [](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    });
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    return detail::make_op("relu", a.shape(), std::move(v), {a}, [](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        // subgradient at 0 is 0
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (p.value[i] > 0.0) p.grad[i] += n.grad[i];
    });
}

inline Tensor abs(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::fabs(a.values()[i]);
    return detail::make_op("abs", a.shape(), std::move(v), {a}, [](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            if (p.value[i] > 0.0)
                p.grad[i] += n.grad[i];
            else if (p.value[i] < 0.0)
                p.grad[i] -= n.grad[i];
        }
    });
}

inline Tensor exp(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(a.values()[i]);
    return detail::make_op("exp", a.shape(), std::move(v), {a}, [](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * n.value[i];
    });
}

inline Tensor log(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(a.values()[i]);
    return detail::make_op("log", a.shape(), std::move(v), {a}, [](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] / p.value[i];
    });
}

inline Tensor sqrt(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sqrt(a.values()[i]);
    return detail::make_op("sqrt", a.shape(), std::move(v), {a}, [](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * 0.5 / n.value[i];
    });
}

/** Elementwise x^p for a fixed real exponent. */
inline Tensor pow(const Tensor& a, double p) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::pow(a.values()[i], p);
    return detail::make_op("power", a.shape(), std::move(v), {a}, [p](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        pa.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            pa.grad[i] += n.grad[i] * p * std::pow(pa.value[i], p - 1.0);
    });
}

/** max(x, c) elementwise; gradient passes only where x > c. */
inline Tensor clamp_min(const Tensor& a, double c) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(a.values()[i], c);
    return detail::make_op("clamp_min", a.shape(), std::move(v), {a}, [c](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (p.value[i] > c) p.grad[i] += n.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.values()) s += x;
    return detail::make_op("sum", {}, {s}, {a}, [](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += n.grad[0];
    });
}

inline Tensor mean(const Tensor& a) {
    double s = 0.0;
    for (double x : a.values()) s += x;
    const double inv = 1.0 / static_cast<double>(a.size());
    return detail::make_op("mean", {}, {s * inv}, {a}, [inv](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += n.grad[0] * inv;
    });
}

// ---------------------------------------------------------------------------
// Linear algebra and structural ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    std::vector<double> v(static_cast<std::size_t>(n) * m, 0.0);
    detail::gemm(a.values().data(), b.values().data(), v.data(), n, k, m);
    return detail::make_op("matmul", {n, m}, std::move(v), {a, b}, [n, k, m](Tensor::Node& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            detail::gemm_nt(node.grad.data(), pb.value.data(), pa.grad.data(), n, m, k);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            detail::gemm_tn(pa.value.data(), node.grad.data(), pb.grad.data(), n, k, m);
        }
    });
}

inline Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transpose: rank-2 tensor required");
    const int n = a.shape()[0], m = a.shape()[1];
    std::vector<double> v(a.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) v[static_cast<std::size_t>(j) * n + i] = a.values()[static_cast<std::size_t>(i) * m + j];
    return detail::make_op("transpose", {m, n}, std::move(v), {a}, [n, m](Tensor::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j)
                p.grad[static_cast<std::size_t>(i) * m + j] += node.grad[static_cast<std::size_t>(j) * n + i];
    });
}

/** Row-wise softmax over the last axis (rank 1 or 2), max-shifted. */
inline Tensor softmax(const Tensor& a) {
    if (a.rank() < 1 || a.rank() > 2) throw DimensionError("softmax: rank-1 or rank-2 tensor required");
    const int rows = a.rank() == 2 ? a.shape()[0] : 1;
    const int cols = a.rank() == 2 ? a.shape()[1] : a.shape()[0];
    std::vector<double> v(a.size());
    for (int r = 0; r < rows; ++r) {
        const double* x = a.values().data() + static_cast<std::size_t>(r) * cols;
        double* y = v.data() + static_cast<std::size_t>(r) * cols;
        double mx = x[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (int j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (int j = 0; j < cols; ++j) y[j] /= z;
    }
    return detail::make_op("softmax", a.shape(), std::move(v), {a}, [rows, cols](Tensor::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        for (int r = 0; r < rows; ++r) {
            const double* y = node.value.data() + static_cast<std::size_t>(r) * cols;
            const double* gy = node.grad.data() + static_cast<std::size_t>(r) * cols;
            double* gx = p.grad.data() + static_cast<std::size_t>(r) * cols;
            double dot = 0.0;
            for (int j = 0; j < cols; ++j) dot += gy[j] * y[j];
            for (int j = 0; j < cols; ++j) gx[j] += y[j] * (gy[j] - dot);
        }
    });
}

/** Row-wise standardization over the last axis: (x - mu) / sqrt(var + eps). */
inline Tensor layernorm(const Tensor& a, double eps = 1e-5) {
    if (a.rank() < 1 || a.rank() > 2) throw DimensionError("layernorm: rank-1 or rank-2 tensor required");
    const int rows = a.rank() == 2 ? a.shape()[0] : 1;
    const int cols = a.rank() == 2 ? a.shape()[1] : a.shape()[0];
    std::vector<double> v(a.size());
    std::vector<double> inv_sd(rows);
    for (int r = 0; r < rows; ++r) {
        const double* x = a.values().data() + static_cast<std::size_t>(r) * cols;
        double* y = v.data() + static_cast<std::size_t>(r) * cols;
        double mu = 0.0;
        for (int j = 0; j < cols; ++j) mu += x[j];
        mu /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= cols;
        inv_sd[r] = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < cols; ++j) y[j] = (x[j] - mu) * inv_sd[r];
    }
    return detail::make_op("layernorm", a.shape(), std::move(v), {a},
                           [rows, cols, inv_sd](Tensor::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        for (int r = 0; r < rows; ++r) {
            const double* y = node.value.data() + static_cast<std::size_t>(r) * cols;
            const double* gy = node.grad.data() + static_cast<std::size_t>(r) * cols;
            double* gx = p.grad.data() + static_cast<std::size_t>(r) * cols;
            double gsum = 0.0, gysum = 0.0;
            for (int j = 0; j < cols; ++j) {
                gsum += gy[j];
                gysum += gy[j] * y[j];
            }
            const double inv_n = 1.0 / cols;
            for (int j = 0; j < cols; ++j)
                gx[j] += inv_sd[r] * (gy[j] - inv_n * gsum - inv_n * y[j] * gysum);
        }
    });
}

/** Select rows of a (n x d) table: out[i] = table[ids[i]]. Gradient scatters into the table. */
inline Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw DimensionError("gather: rank-2 table required");
    const int d = table.shape()[1], n = table.shape()[0];
    for (int id : ids)
        if (id < 0 || id >= n) throw DimensionError("gather: index " + std::to_string(id) + " out of range");
    std::vector<double> v(ids.size() * static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table.values().data() + static_cast<std::size_t>(ids[i]) * d, d, v.data() + i * d);
    return detail::make_op("gather", {static_cast<int>(ids.size()), d}, std::move(v), {table},
                           [ids, d](Tensor::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const double* g = node.grad.data() + i * d;
            double* t = p.grad.data() + static_cast<std::size_t>(ids[i]) * d;
            for (int j = 0; j < d; ++j) t[j] += g[j];
        }
    });
}

/** Select elements of a vector: out[i] = x[ids[i]]. */
inline Tensor gather_elems(const Tensor& x, const std::vector<int>& ids) {
    if (x.rank() != 1) throw DimensionError("gather_elems: rank-1 tensor required");
    const int n = x.shape()[0];
    std::vector<double> v(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= n) throw DimensionError("gather_elems: index out of range");
        v[i] = x.values()[static_cast<std::size_t>(ids[i])];
    }
    return detail::make_op("gather_elems", {static_cast<int>(ids.size())}, std::move(v), {x},
                           [ids](Tensor::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i) p.grad[static_cast<std::size_t>(ids[i])] += node.grad[i];
    });
}

inline Tensor take_row(const Tensor& a, int row) {
    if (a.rank() != 2) throw DimensionError("take_row: rank-2 tensor required");
    const int n = a.shape()[0], m = a.shape()[1];
    if (row < 0 || row >= n) throw DimensionError("take_row: row out of range");
    std::vector<double> v(a.values().begin() + static_cast<std::size_t>(row) * m,
                          a.values().begin() + static_cast<std::size_t>(row + 1) * m);
    return detail::make_op("take_row", {m}, std::move(v), {a}, [row, m](Tensor::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        for (int j = 0; j < m; ++j) p.grad[static_cast<std::size_t>(row) * m + j] += node.grad[j];
    });
}

/** Scalar element of a vector. */
inline Tensor pick(const Tensor& a, int index) {
    if (a.rank() != 1) throw DimensionError("pick: rank-1 tensor required");
    if (index < 0 || index >= a.shape()[0]) throw DimensionError("pick: index out of range");
    return detail::make_op("pick", {}, {a.values()[static_cast<std::size_t>(index)]}, {a},
                           [index](Tensor::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        p.grad[static_cast<std::size_t>(index)] += node.grad[0];
    });
}

/** Broadcast-add a length-d vector to every row of an (n x d) matrix. */
inline Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    if (a.rank() != 2 || v.rank() != 1 || a.shape()[1] != v.shape()[0])
        throw DimensionError("add_rowvec: shapes " + shape_str(a.shape()) + " + " + shape_str(v.shape()));
    const int n = a.shape()[0], d = a.shape()[1];
    std::vector<double> out(a.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            out[static_cast<std::size_t>(i) * d + j] = a.values()[static_cast<std::size_t>(i) * d + j] + v.values()[j];
    return detail::make_op("add_rowvec", a.shape(), std::move(out), {a, v}, [n, d](Tensor::Node& node) {
        auto& pa = *node.parents[0];
        auto& pv = *node.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) pv.grad[j] += node.grad[static_cast<std::size_t>(i) * d + j];
        }
    });
}

/** Broadcast-multiply every row of an (n x d) matrix by a length-d vector. */
inline Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
    if (a.rank() != 2 || v.rank() != 1 || a.shape()[1] != v.shape()[0])
        throw DimensionError("mul_rowvec: shapes " + shape_str(a.shape()) + " * " + shape_str(v.shape()));
    const int n = a.shape()[0], d = a.shape()[1];
    std::vector<double> out(a.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            out[static_cast<std::size_t>(i) * d + j] = a.values()[static_cast<std::size_t>(i) * d + j] * v.values()[j];
    return detail::make_op("mul_rowvec", a.shape(), std::move(out), {a, v}, [n, d](Tensor::Node& node) {
        auto& pa = *node.parents[0];
        auto& pv = *node.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j)
                    pa.grad[static_cast<std::size_t>(i) * d + j] += node.grad[static_cast<std::size_t>(i) * d + j] * pv.value[j];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j)
                    pv.grad[j] += node.grad[static_cast<std::size_t>(i) * d + j] * pa.value[static_cast<std::size_t>(i) * d + j];
        }
    });
}

/** Broadcast-add a length-C vector down the rows of a (C x T) matrix (one bias per channel). */
inline Tensor add_colvec(const Tensor& a, const Tensor& v) {
    if (a.rank() != 2 || v.rank() != 1 || a.shape()[0] != v.shape()[0])
        throw DimensionError("add_colvec: shapes " + shape_str(a.shape()) + " + " + shape_str(v.shape()));
    const int c = a.shape()[0], t = a.shape()[1];
    std::vector<double> out(a.size());
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < t; ++j)
            out[static_cast<std::size_t>(i) * t + j] = a.values()[static_cast<std::size_t>(i) * t + j] + v.values()[i];
    return detail::make_op("add_colvec", a.shape(), std::move(out), {a, v}, [c, t](Tensor::Node& node) {
        auto& pa = *node.parents[0];
        auto& pv = *node.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < c; ++i)
                for (int j = 0; j < t; ++j) pv.grad[i] += node.grad[static_cast<std::size_t>(i) * t + j];
        }
    });
}

/** Same data, new shape; gradient passes through unchanged. */
inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size())
        throw DimensionError("reshape: size mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
    return detail::make_op("reshape", std::move(shape), a.values(), {a}, [](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    });
}

/** Concatenate rank-2 tensors along columns (same row count). */
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const int n = parts[0].shape()[0];
    int m = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.shape()[0] != n) throw DimensionError("concat_cols: row counts differ");
        m += p.shape()[1];
    }
    std::vector<double> v(static_cast<std::size_t>(n) * m);
    std::vector<int> offsets;
    int off = 0;
    for (const auto& p : parts) {
        const int w = p.shape()[1];
        offsets.push_back(off);
        for (int i = 0; i < n; ++i)
            std::copy_n(p.values().data() + static_cast<std::size_t>(i) * w, w,
                        v.data() + static_cast<std::size_t>(i) * m + off);
        off += w;
    }
    return detail::make_op("concat_cols", {n, m}, std::move(v), parts, [n, m, offsets](Tensor::Node& node) {
        for (std::size_t s = 0; s < node.parents.size(); ++s) {
            auto& p = *node.parents[s];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            const int w = p.shape[1];
            for (int i = 0; i < n; ++i) {
                const double* g = node.grad.data() + static_cast<std::size_t>(i) * m + offsets[s];
                double* pg = p.grad.data() + static_cast<std::size_t>(i) * w;
                for (int j = 0; j < w; ++j) pg[j] += g[j];
            }
        }
    });
}

/** Concatenate rank-2 tensors along rows (same column count). */
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no inputs");
    const int m = parts[0].shape()[1];
    int n = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.shape()[1] != m) throw DimensionError("concat_rows: column counts differ");
        n += p.shape()[0];
    }
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(n) * m);
    std::vector<int> offsets;
    int off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        v.insert(v.end(), p.values().begin(), p.values().end());
        off += p.shape()[0];
    }
    return detail::make_op("concat_rows", {n, m}, std::move(v), parts, [m, offsets](Tensor::Node& node) {
        for (std::size_t s = 0; s < node.parents.size(); ++s) {
            auto& p = *node.parents[s];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            const std::size_t base = static_cast<std::size_t>(offsets[s]) * m;
            for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += node.grad[base + i];
        }
    });
}

// ---------------------------------------------------------------------------
// 1-D convolution stack (channels x length layout)
// ---------------------------------------------------------------------------

/** Same-padded stride-1 conv: x (Cin x T), w (Cout x Cin x K) with odd K. */
inline Tensor conv1d(const Tensor& x, const Tensor& w) {
    if (x.rank() != 2 || w.rank() != 3 || w.shape()[1] != x.shape()[0])
        throw DimensionError("conv1d: shapes " + shape_str(x.shape()) + " conv " + shape_str(w.shape()));
    const int cin = x.shape()[0], t = x.shape()[1];
    const int cout = w.shape()[0], k = w.shape()[2];
    if (k % 2 == 0) throw DimensionError("conv1d: odd kernel size required");
    const int half = k / 2;
    std::vector<double> v(static_cast<std::size_t>(cout) * t, 0.0);
    for (int o = 0; o < cout; ++o)
        for (int c = 0; c < cin; ++c) {
            const double* wr = w.values().data() + (static_cast<std::size_t>(o) * cin + c) * k;
            const double* xr = x.values().data() + static_cast<std::size_t>(c) * t;
            double* vr = v.data() + static_cast<std::size_t>(o) * t;
            for (int j = 0; j < t; ++j) {
                double acc = 0.0;
                for (int q = 0; q < k; ++q) {
                    const int src = j + q - half;
                    if (src >= 0 && src < t) acc += wr[q] * xr[src];
                }
                vr[j] += acc;
            }
        }
    return detail::make_op("conv1d", {cout, t}, std::move(v), {x, w},
                           [cin, t, cout, k, half](Tensor::Node& node) {
        auto& px = *node.parents[0];
        auto& pw = *node.parents[1];
        if (px.requires_grad) px.ensure_grad();
        if (pw.requires_grad) pw.ensure_grad();
        for (int o = 0; o < cout; ++o)
            for (int c = 0; c < cin; ++c) {
                const double* wr = pw.value.data() + (static_cast<std::size_t>(o) * cin + c) * k;
                const double* gr = node.grad.data() + static_cast<std::size_t>(o) * t;
                for (int j = 0; j < t; ++j) {
                    for (int q = 0; q < k; ++q) {
                        const int src = j + q - half;
                        if (src < 0 || src >= t) continue;
                        if (px.requires_grad) px.grad[static_cast<std::size_t>(c) * t + src] += gr[j] * wr[q];
                        if (pw.requires_grad)
                            pw.grad[(static_cast<std::size_t>(o) * cin + c) * k + q] +=
                                gr[j] * px.value[static_cast<std::size_t>(c) * t + src];
                    }
                }
            }
    });
}

/** Average-pool pairs along the length axis (T must be even). */
inline Tensor avgpool1d2(const Tensor& x) {
    if (x.rank() != 2 || x.shape()[1] % 2 != 0) throw DimensionError("avgpool1d2: (C x even T) required");
    const int c = x.shape()[0], t = x.shape()[1], th = t / 2;
    std::vector<double> v(static_cast<std::size_t>(c) * th);
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < th; ++j)
            v[static_cast<std::size_t>(i) * th + j] = 0.5 * (x.values()[static_cast<std::size_t>(i) * t + 2 * j] +
                                                             x.values()[static_cast<std::size_t>(i) * t + 2 * j + 1]);
    return detail::make_op("avgpool1d2", {c, th}, std::move(v), {x}, [c, t, th](Tensor::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < th; ++j) {
                const double g = 0.5 * node.grad[static_cast<std::size_t>(i) * th + j];
                p.grad[static_cast<std::size_t>(i) * t + 2 * j] += g;
                p.grad[static_cast<std::size_t>(i) * t + 2 * j + 1] += g;
            }
    });
}

/** Nearest-neighbor upsample by 2 along the length axis. */
inline Tensor upsample1d2(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("upsample1d2: rank-2 tensor required");
    const int c = x.shape()[0], t = x.shape()[1];
    std::vector<double> v(static_cast<std::size_t>(c) * t * 2);
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < t; ++j) {
            const double val = x.values()[static_cast<std::size_t>(i) * t + j];
            v[static_cast<std::size_t>(i) * 2 * t + 2 * j] = val;
            v[static_cast<std::size_t>(i) * 2 * t + 2 * j + 1] = val;
        }
    return detail::make_op("upsample1d2", {c, 2 * t}, std::move(v), {x}, [c, t](Tensor::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < t; ++j)
                p.grad[static_cast<std::size_t>(i) * t + j] += node.grad[static_cast<std::size_t>(i) * 2 * t + 2 * j] +
                                                               node.grad[static_cast<std::size_t>(i) * 2 * t + 2 * j + 1];
    });
}

// ---------------------------------------------------------------------------
// Straight-through estimator (training aid; intentionally not an exact
// derivative, so it is excluded from the registered differentiable ops)
// ---------------------------------------------------------------------------

/**
 * Heaviside step H(x) with H(0) = 0. Backward uses a boxcar surrogate:
 * 1/eps inside |x| < eps/2, zero elsewhere.
 */
inline Tensor heaviside_st(const Tensor& x, double eps) {
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.values()[i] > 0.0 ? 1.0 : 0.0;
    return detail::make_op("heaviside_st", x.shape(), std::move(v), {x}, [eps](Tensor::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i)
            if (std::fabs(p.value[i]) < eps * 0.5) p.grad[i] += node.grad[i] / eps;
    });
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

namespace detail {

inline void backward_seeded(const Tensor& out, const std::vector<double>& seed) {
    Tape tape = Tape::build(out.node());
    // Intermediate gradients restart at zero; leaves keep accumulating.
    for (auto* n : tape.order)
        if (!n->leaf) n->grad.assign(n->value.size(), 0.0);
        else n->ensure_grad();
    for (std::size_t i = 0; i < seed.size(); ++i) out.node()->grad[i] += seed[i];
    for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
        Tensor::Node* n = *it;
        if (!n->leaf && n->requires_grad && n->backprop) n->backprop(*n);
    }
}

}  // namespace detail

/**
 * Differentiable op kinds with exact reverse-mode rules. heaviside_st is
 * deliberately absent: its backward is a surrogate, not a derivative.
 */
inline const std::vector<std::string>& registered_ops() {
    static const std::vector<std::string> ops = {
        "add",        "sub",       "mul",        "div",        "scale",      "add_const",  "relu",
        "abs",        "exp",       "log",        "sqrt",       "power",      "clamp_min",  "sum",
        "mean",       "matmul",    "transpose",  "softmax",    "layernorm",  "gather",     "gather_elems",
        "take_row",   "pick",      "add_rowvec", "mul_rowvec", "add_colvec", "concat_cols", "concat_rows",
        "reshape",    "conv1d",    "avgpool1d2", "upsample1d2"};
    return ops;
}

/**
 * Reverse-mode sweep from a scalar output. Every reachable leaf with
 * requires_grad receives (accumulates) its gradient.
 */
inline void backward(const Tensor& out) {
    if (out.size() != 1) throw ContractError("backward: output must be scalar");
    detail::backward_seeded(out, {1.0});
}

/**
 * Dense Jacobian of a vector-valued graph function at leaf x:
 * row i is the gradient of output component i.
 */
inline std::vector<std::vector<double>> jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    if (!x.requires_grad() || !x.is_leaf()) throw ContractError("jacobian: x must be a leaf with requires_grad");
    for (double v : x.values())
        if (!std::isfinite(v)) throw NumericError("jacobian: non-finite input");
    Tensor y = f(x);
    std::vector<std::vector<double>> rows(y.size());
    std::vector<double> seed(y.size(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        x.zero_grad();
        seed[i] = 1.0;
        detail::backward_seeded(y, seed);
        seed[i] = 0.0;
        rows[i] = x.grad();
    }
    return rows;
}

}  // namespace monoattr

#endif
