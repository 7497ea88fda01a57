#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "promptforge/common.hpp"

namespace pforge {

/// Row-major dense matrix of doubles. Everything in this library that is
/// numeric flows through this one type.
struct Tensor2D {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor2D() = default;
    Tensor2D(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool same_shape(const Tensor2D& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void require_shape(const Tensor2D& t, std::size_t r, std::size_t c, const char* what) {
    if (t.rows != r || t.cols != c)
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(r) + "x" +
                                    std::to_string(c) + ", got " + std::to_string(t.rows) + "x" +
                                    std::to_string(t.cols));
}

// Fixed i-k-j loop; accumulation order never varies between runs.
inline Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
    Tensor2D out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* orow = out.data.data() + i * out.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

inline Tensor2D transpose(const Tensor2D& a) {
    Tensor2D out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double silu_scalar(double x) { return x * sigmoid(x); }

// d/dx [x*sigma(x)] = sigma(x) * (1 + x * (1 - sigma(x)))
inline double silu_grad_scalar(double x) {
    double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

inline Tensor2D silu(const Tensor2D& x) {
    Tensor2D out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = silu_scalar(x.data[i]);
    return out;
}

/// Two-layer feedforward block: y = silu(x @ w1) @ w2, no biases.
struct Fnn {
    Tensor2D w1; // in_dim x inner
    Tensor2D w2; // inner x out_dim

    std::size_t in_dim() const { return w1.rows; }
    std::size_t inner_dim() const { return w1.cols; }
    std::size_t out_dim() const { return w2.cols; }
};

inline Tensor2D fnn_forward(const Fnn& f, const Tensor2D& x) {
    if (x.cols != f.w1.rows) throw std::invalid_argument("fnn_forward: input width mismatch");
    if (f.w1.cols != f.w2.rows) throw std::invalid_argument("fnn_forward: layer shapes do not compose");
    return matmul(silu(matmul(x, f.w1)), f.w2);
}

struct FnnGradients {
    Tensor2D w1;
    Tensor2D w2;
    Tensor2D x;
};

// Reverse mode through y = silu(x w1) w2 given dL/dy.
inline FnnGradients fnn_backward(const Fnn& f, const Tensor2D& x, const Tensor2D& upstream) {
    if (x.cols != f.w1.rows) throw std::invalid_argument("fnn_backward: input width mismatch");
    if (f.w1.cols != f.w2.rows) throw std::invalid_argument("fnn_backward: layer shapes do not compose");
    require_shape(upstream, x.rows, f.w2.cols, "fnn_backward upstream");

    Tensor2D z = matmul(x, f.w1);
    Tensor2D a = silu(z);

    FnnGradients g;
    g.w2 = matmul(transpose(a), upstream);
    Tensor2D da = matmul(upstream, transpose(f.w2));
    Tensor2D dz(z.rows, z.cols);
    for (std::size_t i = 0; i < z.data.size(); ++i)
        dz.data[i] = da.data[i] * silu_grad_scalar(z.data[i]);
    g.w1 = matmul(transpose(x), dz);
    g.x = matmul(dz, transpose(f.w1));
    return g;
}

// Xavier-style uniform in [-a, a], a = sqrt(6 / (fan_in + fan_out)).
inline Tensor2D init_params(std::uint64_t seed, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("init_params: zero dimension");
    double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Rng rng(seed);
    Tensor2D out(rows, cols);
    for (double& v : out.data) v = rng.uniform(-a, a);
    return out;
}

inline Fnn make_fnn(std::uint64_t seed, std::size_t in_dim, std::size_t inner, std::size_t out_dim) {
    Fnn f;
    f.w1 = init_params(mix_seed(seed, 1), in_dim, inner);
    f.w2 = init_params(mix_seed(seed, 2), inner, out_dim);
    return f;
}

// --- finite differences -----------------------------------------------------
//
// Central differences over a scalar loss. Used by the gradcheck CLI command;
// it only ever evaluates the forward path, so it stays independent of the
// analytic backward pass it is compared against.

inline Tensor2D finite_diff(Tensor2D& param, const std::function<double()>& loss, double step) {
    Tensor2D grad(param.rows, param.cols);
    for (std::size_t i = 0; i < param.data.size(); ++i) {
        double saved = param.data[i];
        param.data[i] = saved + step;
        double up = loss();
        param.data[i] = saved - step;
        double down = loss();
        param.data[i] = saved;
        grad.data[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

// Elementwise |a-n| / max(|a|, |n|, floor); the floor keeps genuinely zero
// gradients from turning finite-difference noise into large ratios.
inline double max_relative_error(const Tensor2D& analytic, const Tensor2D& numeric,
                                 double floor = 1e-6) {
    if (!analytic.same_shape(numeric))
        throw std::invalid_argument("max_relative_error: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.data.size(); ++i) {
        double a = analytic.data[i];
        double n = numeric.data[i];
        double denom = std::max({std::abs(a), std::abs(n), floor});
        worst = std::max(worst, std::abs(a - n) / denom);
    }
    return worst;
}

inline double tensor_sum(const Tensor2D& t) {
    double s = 0.0;
    for (double v : t.data) s += v;
    return s;
}

inline double weighted_sum(const Tensor2D& t, const Tensor2D& weights) {
    require_shape(weights, t.rows, t.cols, "weighted_sum weights");
    double s = 0.0;
    for (std::size_t i = 0; i < t.data.size(); ++i) s += t.data[i] * weights.data[i];
    return s;
}

} // namespace pforge
