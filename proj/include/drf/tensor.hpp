#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "drf/error.hpp"

namespace drf {

/// Dense 64-bit float tensor participating in reverse-mode differentiation.
///
/// A Tensor is a cheap handle onto a graph node. Operations record their
/// local backward rule on the node; backward() on a scalar loss walks the
/// graph once in reverse topological order and accumulates gradients into
/// every leaf created with Tensor::leaf(). Tensors created with
/// Tensor::constant() never receive gradient.
///
/// Shapes are at most rank 2: {rows, cols} or {n} (treated as a column of
/// n entries where it matters). Elementwise ops broadcast a one-element
/// operand, or a {rows, 1} column against {rows, cols}.
class Tensor {
public:
    struct Node {
        std::vector<std::size_t> shape;
        std::vector<double> value;
        std::vector<double> grad;
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        // Pushes this node's grad into parents' grad buffers.
        std::function<void(Node&)> backward;
        int visit_mark = 0;  // scratch for topo sort

        std::size_t numel() const { return value.size(); }
        std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
        std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    };

    Tensor() = default;

    static Tensor constant(std::vector<std::size_t> shape, std::vector<double> value);
    static Tensor constant(double scalar);
    static Tensor leaf(std::vector<std::size_t> shape, std::vector<double> value);
    static Tensor leaf(double scalar);
    static Tensor zeros(std::vector<std::size_t> shape, bool trainable = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node()->shape; }
    std::size_t numel() const { return node()->numel(); }
    std::size_t rows() const { return node()->rows(); }
    std::size_t cols() const { return node()->cols(); }
    bool requires_grad() const { return node()->requires_grad; }

    const std::vector<double>& value() const { return node()->value; }
    std::vector<double>& value_mut() { return node()->value; }
    double scalar() const;
    double operator()(std::size_t r, std::size_t c) const;

    /// Gradient accumulated by the last backward() pass (empty before).
    const std::vector<double>& grad() const { return node()->grad; }
    void zero_grad();

    std::shared_ptr<Node> node() const {
        if (!node_) throw Error("tensor: use of undefined tensor");
        return node_;
    }

private:
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    std::shared_ptr<Node> node_;

    friend Tensor make_op(std::vector<std::size_t> shape, std::vector<double> value,
                          std::vector<Tensor> parents,
                          std::function<void(Tensor::Node&)> backward);
};

/// Runs reverse-mode accumulation from a scalar loss. Gradients of leaves
/// SUM across every use; call zero_grad() (or Optimizer::zero_grad) between
/// passes.
void backward(const Tensor& loss);

// ---- elementwise / scalar ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);

// ---- linear algebra / structure ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& a);                         // -> {1}
Tensor row_sum(const Tensor& a);                     // {r,c} -> {r,1}
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len);
Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);
Tensor tile_rows(const Tensor& a, std::size_t reps);         // {1,c} -> {reps,c}
Tensor repeat_rows(const Tensor& a, std::size_t reps);       // each row repeated reps times
Tensor cumsum_exclusive(const Tensor& a);            // along columns, per row
Tensor stack_scalars(const std::vector<Tensor>& scalars, std::vector<std::size_t> shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace drf
