#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "simdiff/nn.hpp"
#include "simdiff/rng.hpp"
#include "simdiff/tensor.hpp"

namespace testing {

using simdiff::Shape;
using simdiff::Tensor;
namespace nn = simdiff::nn;

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
    Tensor t(std::move(shape));
    simdiff::CounterRng rng(seed);
    for (double& v : t.storage()) v = scale * rng.normal();
    return t;
}

// Values bounded away from zero, for probes of |x|.
inline Tensor away_from_zero(Shape shape, std::uint64_t seed, double margin = 0.05) {
    Tensor t = random_tensor(std::move(shape), seed);
    for (double& v : t.storage()) v = v >= 0 ? v + margin : v - margin;
    return t;
}

inline double l2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// Builds a scalar loss from parameter leaves; returns the largest
// norm-wise relative error ||g_analytic - g_fd|| / max(||g_analytic||, ||g_fd||)
// over all inputs, using central differences of step h.
inline double grad_check(const std::function<nn::Var(const std::vector<nn::Var>&)>& f,
                         const std::vector<Tensor>& inputs, double h = 1e-5) {
    std::vector<nn::Var> leaves;
    for (const auto& t : inputs) leaves.push_back(nn::Var::parameter(t));
    nn::Var loss = f(leaves);
    nn::backward(loss);
    double worst = 0.0;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        std::vector<double> analytic(inputs[i].numel(), 0.0);
        if (!leaves[i].grad().empty()) analytic = leaves[i].grad().storage();
        std::vector<double> numeric(inputs[i].numel());
        for (std::size_t j = 0; j < inputs[i].numel(); ++j) {
            auto eval = [&](double delta) {
                std::vector<nn::Var> probe;
                for (std::size_t q = 0; q < inputs.size(); ++q) {
                    Tensor t = inputs[q];
                    if (q == i) t[j] += delta;
                    probe.push_back(nn::Var::constant(t));
                }
                nn::NoGradGuard guard;
                return f(probe).value()[0];
            };
            numeric[j] = (eval(h) - eval(-h)) / (2.0 * h);
        }
        std::vector<double> diff(analytic.size());
        for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = analytic[j] - numeric[j];
        const double denom = std::max({l2(analytic), l2(numeric), 1e-12});
        worst = std::max(worst, l2(diff) / denom);
    }
    return worst;
}

// Generic scalar head: sum(out * R) with fixed random R.
inline nn::Var project(const nn::Var& out, std::uint64_t seed = 99) {
    return nn::sum(nn::mul(out, nn::Var::constant(random_tensor(out.shape(), seed))));
}

}  // namespace testing
