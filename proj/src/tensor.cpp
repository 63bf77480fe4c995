#include "drf/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace drf {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "{";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "}";
    return os.str();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw Error(std::string("autodiff: ") + op + ": shape mismatch " +
                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

using EigenMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EigenCMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void ensure_grad(Tensor::Node& n) {
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
}

// Constants with no upstream graph never accumulate gradient.
bool wants_grad(const Tensor::Node& n) {
    return n.requires_grad || !n.parents.empty();
}

}  // namespace

Tensor make_op(std::vector<std::size_t> shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(Tensor::Node&)> backward) {
    auto n = std::make_shared<Tensor::Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->parents.reserve(parents.size());
    bool needs = false;
    for (auto& p : parents) {
        needs = needs || p.node()->requires_grad || !p.node()->parents.empty();
        n->parents.push_back(p.node());
    }
    if (needs) n->backward = std::move(backward);
    n->requires_grad = false;
    return Tensor(n);
}

Tensor Tensor::constant(std::vector<std::size_t> shape, std::vector<double> value) {
    if (shape_numel(shape) != value.size())
        throw Error("tensor: data length " + std::to_string(value.size()) +
                    " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    return Tensor(n);
}

Tensor Tensor::constant(double scalar) { return constant({1}, {scalar}); }

Tensor Tensor::leaf(std::vector<std::size_t> shape, std::vector<double> value) {
    Tensor t = constant(std::move(shape), std::move(value));
    t.node_->requires_grad = true;
    return t;
}

Tensor Tensor::leaf(double scalar) { return leaf({1}, {scalar}); }

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool trainable) {
    std::vector<double> v(shape_numel(shape), 0.0);
    return trainable ? leaf(std::move(shape), std::move(v))
                     : constant(std::move(shape), std::move(v));
}

double Tensor::scalar() const {
    if (numel() != 1) throw Error("tensor: scalar() on tensor of size " + std::to_string(numel()));
    return node()->value[0];
}

double Tensor::operator()(std::size_t r, std::size_t c) const {
    return node()->value[r * cols() + c];
}

void Tensor::zero_grad() { node()->grad.assign(node()->value.size(), 0.0); }

void backward(const Tensor& loss) {
    auto root = loss.node();
    if (root->numel() != 1)
        throw Error("autodiff: backward requires a scalar loss, got shape " +
                    shape_str(root->shape));
    if (root->parents.empty() && !root->requires_grad)
        throw Error("autodiff: backward on an empty trace (loss is a constant)");

    // Iterative post-order DFS; reverse post-order is a valid reverse
    // topological order for gradient propagation.
    std::vector<Tensor::Node*> order;
    std::vector<std::pair<Tensor::Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    root->visit_mark = 1;
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Tensor::Node* p = n->parents[idx++].get();
            if (p->visit_mark == 0) {
                p->visit_mark = 1;
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (auto* n : order) n->visit_mark = 0;

    ensure_grad(*root);
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor::Node* n = *it;
        if (n->backward) {
            if (n->grad.size() != n->value.size()) ensure_grad(*n);
            n->backward(*n);
        }
    }
}

// ---- elementwise binary ops with broadcasting ----

namespace {

enum class Bcast { same, a_scalar, b_scalar, a_col, b_col };

Bcast classify(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return Bcast::same;
    if (a.numel() == 1) return Bcast::a_scalar;
    if (b.numel() == 1) return Bcast::b_scalar;
    if (a.rows() == b.rows() && a.cols() == 1 && b.cols() > 1) return Bcast::a_col;
    if (a.rows() == b.rows() && b.cols() == 1 && a.cols() > 1) return Bcast::b_col;
    shape_error(op, a, b);
}

// f(av, bv) forward; dfa/dfb give local partials at element level.
template <class F, class DA, class DB>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
    Bcast bc = classify(op, a, b);
    const Tensor& big = (bc == Bcast::a_scalar || bc == Bcast::a_col) ? b : a;
    const std::size_t n = big.numel();
    const std::size_t cols = big.cols();
    auto index_a = [bc, cols](std::size_t i) {
        switch (bc) {
            case Bcast::a_scalar: return std::size_t{0};
            case Bcast::a_col: return i / cols;
            default: return i;
        }
    };
    auto index_b = [bc, cols](std::size_t i) {
        switch (bc) {
            case Bcast::b_scalar: return std::size_t{0};
            case Bcast::b_col: return i / cols;
            default: return i;
        }
    };
    const auto& av = a.value();
    const auto& bv = b.value();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[index_a(i)], bv[index_b(i)]);

    return make_op(big.shape(), std::move(out), {a, b},
                   [index_a, index_b, n, dfa, dfb](Tensor::Node& node) {
                       auto& pa = *node.parents[0];
                       auto& pb = *node.parents[1];
                       const bool wa = wants_grad(pa), wb = wants_grad(pb);
                       if (wa) ensure_grad(pa);
                       if (wb) ensure_grad(pb);
                       for (std::size_t i = 0; i < n; ++i) {
                           const double ga = node.grad[i];
                           const std::size_t ia = index_a(i), ib = index_b(i);
                           if (wa) pa.grad[ia] += ga * dfa(pa.value[ia], pb.value[ib]);
                           if (wb) pb.grad[ib] += ga * dfb(pa.value[ia], pb.value[ib]);
                       }
                   });
}

template <class F, class DF>
Tensor unary_op(const Tensor& a, F f, DF df) {
    const auto& av = a.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    return make_op(a.shape(), std::move(out), {a}, [f, df](Tensor::Node& node) {
        auto& pa = *node.parents[0];
        if (!wants_grad(pa)) return;
        ensure_grad(pa);
        for (std::size_t i = 0; i < node.value.size(); ++i)
            pa.grad[i] += node.grad[i] * df(pa.value[i], node.value[i]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) {
    return unary_op(a, [](double x) { return -x; },
                    [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double s) {
    return unary_op(a, [s](double x) { return s * x; },
                    [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary_op(a, [s](double x) { return x + s; },
                    [](double, double) { return 1.0; });
}

Tensor sin(const Tensor& a) {
    return unary_op(a, [](double x) { return std::sin(x); },
                    [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
    return unary_op(a, [](double x) { return std::cos(x); },
                    [](double x, double) { return -std::sin(x); });
}

Tensor exp(const Tensor& a) {
    return unary_op(a, [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary_op(a, [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(a, [](double x) { return std::sqrt(x); },
                    [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& a) {
    return unary_op(a, [](double x) { return x * x; },
                    [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
    return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                    [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
    // log(1+e^x) with the standard overflow-safe form.
    return unary_op(a,
                    [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x))
                                                  : std::log1p(std::exp(x)); },
                    [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
        shape_error("matmul", a, b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n);
    // row-at-a-time so a row's result never depends on the batch size (gemm
    // blocking would otherwise reorder the accumulation)
    EigenCMap bm(b.value().data(), k, n);
    for (std::size_t i = 0; i < m; ++i)
        EigenMap(out.data() + i * n, 1, n) = EigenCMap(a.value().data() + i * k, 1, k) * bm;
    return make_op({m, n}, std::move(out), {a, b}, [m, k, n](Tensor::Node& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        EigenCMap g(node.grad.data(), m, n);
        if (wants_grad(pa)) {
            ensure_grad(pa);
            EigenMap(pa.grad.data(), m, k).noalias() += g * EigenCMap(pb.value.data(), k, n).transpose();
        }
        if (wants_grad(pb)) {
            ensure_grad(pb);
            EigenMap(pb.grad.data(), k, n).noalias() += EigenCMap(pa.value.data(), m, k).transpose() * g;
        }
    });
}

Tensor sum(const Tensor& a) {
    double s = std::accumulate(a.value().begin(), a.value().end(), 0.0);
    return make_op({1}, {s}, {a}, [](Tensor::Node& node) {
        auto& pa = *node.parents[0];
        if (!wants_grad(pa)) return;
        ensure_grad(pa);
        for (auto& g : pa.grad) g += node.grad[0];
    });
}

Tensor row_sum(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i] += a.value()[i * c + j];
    return make_op({r, 1}, std::move(out), {a}, [r, c](Tensor::Node& node) {
        auto& pa = *node.parents[0];
        if (!wants_grad(pa)) return;
        ensure_grad(pa);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) pa.grad[i * c + j] += node.grad[i];
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error("autodiff: concat of zero tensors");
    const std::size_t r = parts[0].rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rows() != r)
            throw Error("autodiff: concat: row count mismatch " + std::to_string(p.rows()) +
                        " vs " + std::to_string(r));
        total += p.cols();
    }
    std::vector<double> out(r * total);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t c = p.cols();
        for (std::size_t i = 0; i < r; ++i)
            std::copy_n(p.value().data() + i * c, c, out.data() + i * total + off);
        off += c;
    }
    return make_op({r, total}, std::move(out), parts, [r, total](Tensor::Node& node) {
        std::size_t off = 0;
        for (auto& pp : node.parents) {
            auto& p = *pp;
            const std::size_t c = p.cols();
            if (!wants_grad(p)) { off += c; continue; }
            ensure_grad(p);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    p.grad[i * c + j] += node.grad[i * total + off + j];
            off += c;
        }
    });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
    const std::size_t r = a.rows(), c = a.cols();
    if (start + len > c)
        throw Error("autodiff: slice [" + std::to_string(start) + "," +
                    std::to_string(start + len) + ") out of range for " +
                    std::to_string(c) + " columns");
    std::vector<double> out(r * len);
    for (std::size_t i = 0; i < r; ++i)
        std::copy_n(a.value().data() + i * c + start, len, out.data() + i * len);
    return make_op({r, len}, std::move(out), {a}, [r, c, start, len](Tensor::Node& node) {
        auto& pa = *node.parents[0];
        if (!wants_grad(pa)) return;
        ensure_grad(pa);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < len; ++j)
                pa.grad[i * c + start + j] += node.grad[i * len + j];
    });
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
    if (shape_numel(shape) != a.numel())
        throw Error("autodiff: reshape to " + shape_str(shape) + " from " +
                    shape_str(a.shape()) + " changes element count");
    return make_op(std::move(shape), a.value(), {a}, [](Tensor::Node& node) {
        auto& pa = *node.parents[0];
        if (!wants_grad(pa)) return;
        ensure_grad(pa);
        for (std::size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i];
    });
}

Tensor tile_rows(const Tensor& a, std::size_t reps) {
    if (a.rows() != 1) throw Error("autodiff: tile_rows expects a single row");
    const std::size_t c = a.cols();
    std::vector<double> out(reps * c);
    for (std::size_t i = 0; i < reps; ++i)
        std::copy_n(a.value().data(), c, out.data() + i * c);
    return make_op({reps, c}, std::move(out), {a}, [reps, c](Tensor::Node& node) {
        auto& pa = *node.parents[0];
        if (!wants_grad(pa)) return;
        ensure_grad(pa);
        for (std::size_t i = 0; i < reps; ++i)
            for (std::size_t j = 0; j < c; ++j) pa.grad[j] += node.grad[i * c + j];
    });
}

Tensor repeat_rows(const Tensor& a, std::size_t reps) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * reps * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t k = 0; k < reps; ++k)
            std::copy_n(a.value().data() + i * c, c, out.data() + (i * reps + k) * c);
    return make_op({r * reps, c}, std::move(out), {a}, [r, reps, c](Tensor::Node& node) {
        auto& pa = *node.parents[0];
        if (!wants_grad(pa)) return;
        ensure_grad(pa);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t k = 0; k < reps; ++k)
                for (std::size_t j = 0; j < c; ++j)
                    pa.grad[i * c + j] += node.grad[(i * reps + k) * c + j];
    });
}

Tensor cumsum_exclusive(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = acc;
            acc += a.value()[i * c + j];
        }
    }
    return make_op({r, c}, std::move(out), {a}, [r, c](Tensor::Node& node) {
        auto& pa = *node.parents[0];
        if (!wants_grad(pa)) return;
        ensure_grad(pa);
        // dy[j']/dx[j] = 1 for j < j'  =>  gx[j] = sum_{j' > j} gy[j']
        for (std::size_t i = 0; i < r; ++i) {
            double acc = 0.0;
            for (std::size_t j = c; j-- > 0;) {
                pa.grad[i * c + j] += acc;
                acc += node.grad[i * c + j];
            }
        }
    });
}

Tensor stack_scalars(const std::vector<Tensor>& scalars, std::vector<std::size_t> shape) {
    if (shape_numel(shape) != scalars.size())
        throw Error("autodiff: stack of " + std::to_string(scalars.size()) +
                    " scalars into shape " + shape_str(shape));
    std::vector<double> out(scalars.size());
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        if (scalars[i].numel() != 1) throw Error("autodiff: stack expects scalar tensors");
        out[i] = scalars[i].value()[0];
    }
    return make_op(std::move(shape), std::move(out), scalars, [](Tensor::Node& node) {
        for (std::size_t i = 0; i < node.parents.size(); ++i) {
            auto& p = *node.parents[i];
            if (!wants_grad(p)) continue;
            ensure_grad(p);
            p.grad[0] += node.grad[i];
        }
    });
}

}  // namespace drf
