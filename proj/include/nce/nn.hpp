#pragma once

// Small dense network kernel with hand-written gradients. Everything is
// templated on the scalar: double for gradient checks, float for training and
// checkpoints.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "nce/core.hpp"
#include "nce/rng.hpp"

namespace nce::nn {

template <class T>
using Tensor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
bool all_finite(const Tensor<T> &t) {
    return t.allFinite();
}

template <class T>
void require_finite(const Tensor<T> &t, const char *what) {
    if (!t.allFinite()) throw NumericError(std::string("non-finite values in ") + what);
}

template <class T>
void require_shape(const Tensor<T> &t, Eigen::Index rows, Eigen::Index cols, const char *what) {
    if (t.rows() != rows || t.cols() != cols)
        throw Error("shape_mismatch", std::string(what) + ": expected " + std::to_string(rows) + "x" +
                                          std::to_string(cols) + ", got " + std::to_string(t.rows()) + "x" +
                                          std::to_string(t.cols()));
}

// ---------------------------------------------------------------------------
// Activations and losses

template <class T>
T softplus(T x) {
    return x > T(20) ? x : std::log1p(std::exp(x));
}

template <class T>
T mish(T x) {
    return x * std::tanh(softplus(x));
}

template <class T>
T mish_grad(T x) {
    const T t = std::tanh(softplus(x));
    const T s = T(1) / (T(1) + std::exp(-x));
    return t + x * (T(1) - t * t) * s;
}

// tanh(softplus(x)) = n / (n + 2) with n = e^x (e^x + 2): one exponential per
// element, vectorised by Eigen. Inputs are clamped at 20 where the ratio is 1.
template <class T>
Tensor<T> mish(const Tensor<T> &x) {
    const auto e = x.array().min(T(20)).exp();
    const auto n = e * (e + T(2));
    return (x.array() * n / (n + T(2))).matrix();
}

template <class T>
Tensor<T> mish_grad(const Tensor<T> &x) {
    const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> e = x.array().min(T(20)).exp();
    const auto n = e * (e + T(2));
    const auto t = n / (n + T(2));
    const auto s = e / (e + T(1));
    return (t + x.array() * (T(1) - t * t) * s).matrix();
}

/// Softmax of one vector, shifted by its maximum.
template <class T>
std::vector<T> softmax(const std::vector<T> &z) {
    std::vector<T> out(z.size());
    if (z.empty()) return out;
    T mx = z[0];
    for (T v : z) mx = std::max(mx, v);
    T sum = 0;
    for (std::size_t k = 0; k < z.size(); ++k) sum += out[k] = std::exp(z[k] - mx);
    for (auto &v : out) v /= sum;
    return out;
}

template <class T>
T huber(T pred, T target, T delta = T(1)) {
    const T e = std::abs(pred - target);
    return e <= delta ? T(0.5) * e * e : delta * (e - T(0.5) * delta);
}

/// d huber / d pred.
template <class T>
T huber_grad(T pred, T target, T delta = T(1)) {
    const T e = pred - target;
    return std::max(-delta, std::min(delta, e));
}

// ---------------------------------------------------------------------------
// Linear layer: y = x W^T + b, one sample per row.

template <class T>
struct Linear {
    Tensor<T> w; // out x in
    Tensor<T> b; // 1 x out

    Linear() = default;
    Linear(int in, int out) : w(Tensor<T>::Zero(out, in)), b(Tensor<T>::Zero(1, out)) {}

    int in() const { return static_cast<int>(w.cols()); }
    int out() const { return static_cast<int>(w.rows()); }

    /// Uniform in +-sqrt(6 / fan_in), zero bias.
    void init_kaiming(Rng &rng) {
        const double bound = std::sqrt(6.0 / in());
        for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = static_cast<T>(uniform_real(rng, -bound, bound));
        b.setZero();
    }

    Tensor<T> forward(const Tensor<T> &x) const {
        if (x.cols() != in()) require_shape(x, x.rows(), in(), "linear input");
        Tensor<T> y = x * w.transpose();
        y.rowwise() += b.row(0);
        return y;
    }

    /// Accumulates parameter gradients into g and returns the input gradient.
    Tensor<T> backward(const Tensor<T> &x, const Tensor<T> &dy, Linear &g) const {
        g.w.noalias() += dy.transpose() * x;
        g.b.row(0) += dy.colwise().sum();
        return dy * w;
    }

    template <class U>
    Linear<U> cast() const {
        Linear<U> o;
        o.w = w.template cast<U>();
        o.b = b.template cast<U>();
        return o;
    }
};

// ---------------------------------------------------------------------------
// MLP with Mish on hidden layers and identity output.

template <class T>
struct MlpTape {
    std::vector<Tensor<T>> inputs; // input of each layer
    std::vector<Tensor<T>> pre;    // pre-activation of each hidden layer
};

template <class T>
struct Mlp {
    std::vector<Linear<T>> layers;

    Mlp() = default;
    /// widths = {in, hidden..., out}
    explicit Mlp(const std::vector<int> &widths) {
        for (std::size_t k = 0; k + 1 < widths.size(); ++k) layers.emplace_back(widths[k], widths[k + 1]);
    }

    int in() const { return layers.front().in(); }
    int out() const { return layers.back().out(); }

    void init_kaiming(Rng &rng) {
        for (auto &l : layers) l.init_kaiming(rng);
    }

    Tensor<T> forward(const Tensor<T> &x, MlpTape<T> *tape = nullptr) const {
        Tensor<T> y = forward_from_pre(layers[0].forward(x), tape);
        if (tape) tape->inputs[0] = x;
        return y;
    }

    Tensor<T> backward(const MlpTape<T> &tape, const Tensor<T> &dy, Mlp &g) const {
        return layers[0].backward(tape.inputs[0], backward_to_pre(tape, dy, g), g.layers[0]);
    }

    /// Runs the network given the first layer's pre-activation, for callers
    /// that compute that product in a cheaper factored form.
    Tensor<T> forward_from_pre(Tensor<T> pre0, MlpTape<T> *tape = nullptr) const {
        if (tape) {
            tape->inputs.assign(1, Tensor<T>());
            tape->pre.clear();
        }
        if (layers.size() == 1) return pre0;
        Tensor<T> h = mish(pre0);
        if (tape) tape->pre.push_back(std::move(pre0));
        for (std::size_t k = 1; k < layers.size(); ++k) {
            if (tape) tape->inputs.push_back(h);
            Tensor<T> z = layers[k].forward(h);
            if (k + 1 < layers.size()) {
                h = mish(z);
                if (tape) tape->pre.push_back(std::move(z));
            } else {
                h = std::move(z);
            }
        }
        return h;
    }

    /// Gradient with respect to the first layer's pre-activation; the first
    /// layer's own parameters are left to the caller.
    Tensor<T> backward_to_pre(const MlpTape<T> &tape, const Tensor<T> &dy, Mlp &g) const {
        Tensor<T> d = dy;
        for (std::size_t k = layers.size(); k-- > 1;) {
            if (k + 1 < layers.size()) d.array() *= mish_grad(tape.pre[k]).array();
            d = layers[k].backward(tape.inputs[k], d, g.layers[k]);
        }
        if (layers.size() > 1) d.array() *= mish_grad(tape.pre[0]).array();
        return d;
    }

    template <class U>
    Mlp<U> cast() const {
        Mlp<U> o;
        for (const auto &l : layers) o.layers.push_back(l.template cast<U>());
        return o;
    }

    template <class F>
    void visit(const std::string &prefix, F &&f) {
        for (std::size_t k = 0; k < layers.size(); ++k) {
            f(prefix + "." + std::to_string(k) + ".weight", layers[k].w);
            f(prefix + "." + std::to_string(k) + ".bias", layers[k].b);
        }
    }
};

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay and bias-corrected moments.

struct AdamWConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

template <class T>
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    const AdamWConfig &config() const { return cfg_; }
    long step_count() const { return step_; }

    /// params and grads are parallel lists of tensors with matching shapes.
    void step(const std::vector<Tensor<T> *> &params, const std::vector<const Tensor<T> *> &grads) {
        if (params.size() != grads.size()) throw Error("shape_mismatch", "parameter and gradient counts differ");
        if (m_.empty()) {
            for (auto *p : params) {
                m_.push_back(Tensor<T>::Zero(p->rows(), p->cols()));
                v_.push_back(Tensor<T>::Zero(p->rows(), p->cols()));
            }
        }
        if (m_.size() != params.size()) throw Error("shape_mismatch", "optimizer state does not match parameters");
        ++step_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
        const T lr = static_cast<T>(cfg_.lr), eps = static_cast<T>(cfg_.eps);
        const T decay = static_cast<T>(1.0 - cfg_.lr * cfg_.weight_decay);
        for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor<T> &p = *params[k];
            const Tensor<T> &g = *grads[k];
            require_shape(g, p.rows(), p.cols(), "adamw gradient");
            require_finite(g, "gradient");
            m_[k] = b1 * m_[k] + (T(1) - b1) * g;
            v_[k] = b2 * v_[k] + (T(1) - b2) * g.cwiseProduct(g);
            p *= decay;
            const T sc1 = static_cast<T>(1.0 / c1), sc2 = static_cast<T>(1.0 / c2);
            p.array() -= lr * (m_[k].array() * sc1) / ((v_[k].array() * sc2).sqrt() + eps);
        }
    }

private:
    AdamWConfig cfg_;
    long step_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

} // namespace nce::nn
