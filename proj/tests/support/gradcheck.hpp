#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nartsp/autodiff.hpp"
#include "nartsp/ops.hpp"

namespace nartsp::testing {

/// ||a - b|| / max(||a||, ||b||, floor), with 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 0.0) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::max(std::sqrt(std::max(na, nb)), floor);
    if (scale < 1e-300) return std::sqrt(d);
    return std::sqrt(d) / scale;
}

struct GradCheckResult {
    double worst = 0.0;
    std::string worst_name;
    std::size_t tensors = 0;
};

/// Compares reverse-mode gradients of `loss` with respect to each of the
/// named leaves against central differences, tensor by tensor.
///
/// A tensor whose true gradient vanishes (a bias feeding straight into a
/// batch-normalized sum, say) has no meaningful relative error, so the
/// denominator is floored at `floor_ratio` times the norm of the whole
/// gradient. The default of 0 keeps the plain per-tensor ratio.
inline GradCheckResult check_gradients(const std::vector<std::pair<std::string, Var<double>>>& leaves,
                                       const std::function<Var<double>()>& loss, double h = 1e-6,
                                       double floor_ratio = 0.0) {
    for (const auto& [name, v] : leaves) v.zero_grad();
    backward(loss());
    std::vector<std::vector<double>> analytic, numeric;
    double total = 0.0;
    for (const auto& [name, v] : leaves) {
        const auto g = v.grad().storage();
        for (double x : g) total += x * x;
        std::vector<double> fd(g.size());
        auto& x = const_cast<Var<double>&>(v).mutable_value();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double x0 = x[i];
            x[i] = x0 + h;
            double up, down;
            {
                NoGradGuard ng;
                up = loss().value().item();
                x[i] = x0 - h;
                down = loss().value().item();
            }
            x[i] = x0;
            fd[i] = (up - down) / (2 * h);
        }
        analytic.push_back(g);
        numeric.push_back(std::move(fd));
    }
    const double floor = floor_ratio * std::sqrt(total);
    GradCheckResult res;
    for (std::size_t t = 0; t < leaves.size(); ++t) {
        const double err = relative_error(analytic[t], numeric[t], floor);
        ++res.tensors;
        if (res.worst_name.empty() || err > res.worst) {
            res.worst = err;
            res.worst_name = leaves[t].first;
        }
    }
    return res;
}

inline Array<double> random_array(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Array<double> a(std::move(shape));
    for (auto& x : a.values()) x = u(rng);
    return a;
}

/// A random linear functional of x, so every output entry receives a
/// distinct upstream gradient.
inline Var<double> probe(const Var<double>& x, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return weighted_sum(x, random_array(x.shape(), rng));
}

}  // namespace nartsp::testing
