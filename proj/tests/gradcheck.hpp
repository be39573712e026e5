#pragma once

// Central finite-difference checks of analytic gradients, double precision.
// Each check compares directional derivatives along random directions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "nce/gnn.hpp"
#include "nce/nn.hpp"
#include "nce/rng.hpp"

namespace gradcheck {

using nce::nn::Tensor;
using Mat = Tensor<double>;

inline double rel_error(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-7});
    return std::abs(a - b) / scale;
}

inline Mat random_like(const Mat &m, nce::Rng &rng, double scale = 1.0) {
    Mat r(m.rows(), m.cols());
    for (Eigen::Index k = 0; k < r.size(); ++k) r.data()[k] = nce::uniform_real(rng, -scale, scale);
    return r;
}

/// Largest relative error between <grad, d> and the central difference of f
/// along d, over `directions` random directions spanning every tensor in xs.
inline double directional(const std::function<double()> &f, const std::vector<Mat *> &xs,
                          const std::vector<const Mat *> &grads, nce::Rng &rng, int directions = 20,
                          double h = 1e-5) {
    double worst = 0.0;
    for (int r = 0; r < directions; ++r) {
        std::vector<Mat> dirs;
        double analytic = 0.0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            dirs.push_back(random_like(*xs[k], rng));
            analytic += grads[k]->cwiseProduct(dirs.back()).sum();
        }
        for (std::size_t k = 0; k < xs.size(); ++k) *xs[k] += h * dirs[k];
        const double fp = f();
        for (std::size_t k = 0; k < xs.size(); ++k) *xs[k] -= 2 * h * dirs[k];
        const double fm = f();
        for (std::size_t k = 0; k < xs.size(); ++k) *xs[k] += h * dirs[k];
        worst = std::max(worst, rel_error(analytic, (fp - fm) / (2 * h)));
    }
    return worst;
}

/// Linear layer: parameters and input.
inline double linear(nce::Rng &rng) {
    nce::nn::Linear<double> lin(7, 5);
    lin.init_kaiming(rng);
    lin.b = random_like(lin.b, rng);
    Mat x = random_like(Mat(4, 7), rng);
    const Mat c = random_like(Mat(4, 5), rng);
    auto f = [&] { return lin.forward(x).cwiseProduct(c).sum(); };
    nce::nn::Linear<double> g(7, 5);
    const Mat dx = lin.backward(x, c, g);
    return directional(f, {&lin.w, &lin.b, &x}, {&g.w, &g.b, &dx}, rng);
}

/// Elementwise Mish, over a wide input range.
inline double mish(nce::Rng &rng) {
    Mat x = random_like(Mat(6, 9), rng, 6.0);
    const Mat c = random_like(x, rng);
    auto f = [&] { return nce::nn::mish(x).cwiseProduct(c).sum(); };
    const Mat g = nce::nn::mish_grad(x).cwiseProduct(c);
    return directional(f, {&x}, {&g}, rng);
}

/// Random 3-layer MLP: parameters and input.
inline double mlp(nce::Rng &rng) {
    nce::nn::Mlp<double> net({6, 8, 8, 3});
    net.init_kaiming(rng);
    for (auto &l : net.layers) l.b = random_like(l.b, rng, 0.5);
    Mat x = random_like(Mat(5, 6), rng);
    const Mat c = random_like(Mat(5, 3), rng);
    auto f = [&] { return net.forward(x).cwiseProduct(c).sum(); };
    nce::nn::Mlp<double> g({6, 8, 8, 3});
    nce::nn::MlpTape<double> tape;
    net.forward(x, &tape);
    const Mat dx = net.backward(tape, c, g);
    std::vector<Mat *> xs{&x};
    std::vector<const Mat *> gs{&dx};
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        xs.push_back(&net.layers[k].w);
        xs.push_back(&net.layers[k].b);
        gs.push_back(&g.layers[k].w);
        gs.push_back(&g.layers[k].b);
    }
    return directional(f, xs, gs, rng);
}

/// Tour pair over two depots with two cities each: a six-node graph.
inline nce::TourPairGraph small_graph(const nce::Problem &p, bool edge_types = true) {
    return nce::build_graph(nce::Tour{0, 0, {0, 1}, 0}, nce::Tour{1, 1, {2, 3}, 1}, p, edge_types);
}

inline nce::Instance small_instance() {
    nce::Instance inst;
    inst.variant = nce::Variant::MDVRP;
    inst.depots = {{0.1, 0.2}, {0.9, 0.7}};
    inst.cities = {{0.3, 0.8}, {0.5, 0.1}, {0.7, 0.4}, {0.2, 0.5}};
    inst.num_vehicles = 2;
    inst.vehicle_start_depot = {0, 1};
    return inst;
}

/// Gradient of the summed Huber loss over every cut pair, restricted to the
/// parameters whose names start with one of `prefixes` (empty: all).
inline double model(const nce::GnnConfig &cfg, const std::vector<std::string> &prefixes, nce::Rng &rng,
                    int directions = 20) {
    const nce::Problem p(small_instance());
    const nce::TourPairGraph g = small_graph(p, cfg.edge_types);
    nce::GnnModel<double> m(cfg);
    m.init(rng());
    // Shrink the weights so activations stay in a moderate range.
    for (auto *t : m.parameters()) *t *= 0.7;
    std::vector<nce::HeadSample> samples;
    for (int a1 = 0; a1 <= 2; ++a1)
        for (int a2 = 0; a2 <= 2; ++a2) samples.push_back({a1, a2, nce::uniform_real(rng, -3, 3)});
    nce::GnnModel<double> grad = m.zeros_like();
    nce::graph_loss<double>(m, g, samples, 1.0, &grad);

    std::vector<Mat *> xs;
    std::vector<const Mat *> gs;
    std::vector<Mat *> all_grads;
    grad.visit([&](const std::string &, Mat &t) { all_grads.push_back(&t); });
    std::size_t k = 0;
    m.visit([&](const std::string &name, Mat &t) {
        const bool take = prefixes.empty() || std::any_of(prefixes.begin(), prefixes.end(), [&](const auto &pre) {
                              return name.rfind(pre, 0) == 0;
                          });
        if (take) {
            xs.push_back(&t);
            gs.push_back(all_grads[k]);
        }
        ++k;
    });
    auto f = [&] { return nce::graph_loss<double>(m, g, samples); };
    return directional(f, xs, gs, rng, directions);
}

} // namespace gradcheck
