#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "drf/rng.hpp"
#include "drf/tensor.hpp"

namespace drf::testutil {

struct GradReport {
    double max_rel = 0;
    int checked = 0;

    void merge(const GradReport& o) {
        max_rel = std::max(max_rel, o.max_rel);
        checked += o.checked;
    }
};

/// Central-difference check of d(loss)/d(leaf) for every element of every
/// leaf. make_loss must rebuild the graph from the leaves' current values.
template <class Fn>
GradReport grad_check(std::vector<Tensor> leaves, Fn&& make_loss, double h = 1e-5) {
    for (auto& l : leaves) l.zero_grad();
    backward(make_loss());
    std::vector<std::vector<double>> analytic;
    for (auto& l : leaves)
        analytic.push_back(l.grad().empty() ? std::vector<double>(l.numel(), 0.0) : l.grad());

    GradReport rep;
    for (std::size_t li = 0; li < leaves.size(); ++li)
        for (std::size_t i = 0; i < leaves[li].numel(); ++i) {
            double& v = leaves[li].value_mut()[i];
            const double orig = v;
            v = orig + h;
            const double fp = make_loss().scalar();
            v = orig - h;
            const double fm = make_loss().scalar();
            v = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double a = analytic[li][i];
            const double rel = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
            rep.max_rel = std::max(rep.max_rel, rel);
            ++rep.checked;
        }
    return rep;
}

inline Tensor rand_leaf(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::leaf(std::move(shape), std::move(v));
}

inline Tensor rand_const(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::constant(std::move(shape), std::move(v));
}

}  // namespace drf::testutil
