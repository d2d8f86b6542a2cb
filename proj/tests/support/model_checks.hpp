#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "nartsp/decoder.hpp"
#include "nartsp/model.hpp"
#include "support/gradcheck.hpp"

namespace nartsp::testing {

inline ModelConfig toy_config(std::size_t hidden = 8, std::size_t layers = 2, std::size_t heads = 2) {
    ModelConfig c;
    c.hidden = hidden;
    c.gnn_layers = layers;
    c.heads = heads;
    c.fc_layers = 2;
    return c;
}

/// Central-difference check of every parameter of a double model through
/// the full forward (start logits and edge scores). In train mode the input
/// bias has an exactly zero gradient (batch norm removes it), so tensors are
/// judged against 1e-4 of the whole gradient norm rather than their own.
inline GradCheckResult full_model_gradcheck(const ModelConfig& cfg, std::size_t n, std::size_t batch,
                                            std::uint64_t seed, Mode mode) {
    Model<double> model(cfg, seed);
    if (mode == Mode::eval) {
        // Non-trivial running statistics so eval mode is not the identity map.
        std::mt19937_64 rng(seed + 1);
        model.for_each_batch_norm([&](BatchNorm<double>& bn) {
            bn.running_mean() = random_array({bn.features()}, rng, -0.5, 0.5);
            bn.running_var() = random_array({bn.features()}, rng, 0.5, 2.0);
        });
    }
    const auto insts = generate_uniform_batch(n, batch, seed + 2);
    const auto g = make_batch(insts, cfg);
    std::vector<std::pair<std::string, Var<double>>> leaves;
    model.for_each_parameter([&](Parameter<double>& p) { leaves.emplace_back(p.name(), p.var()); });
    return check_gradients(
        leaves,
        [&] {
            auto out = model.forward(g, mode);
            auto b = cfg.pointer_enabled ? probe(out.beta, seed + 3) : Var<double>::constant(Array<double>::scalar(0));
            return add(b, probe(out.scores, seed + 4));
        },
        1e-6, 1e-4);
}

/// Instance with node i' = perm[i'] of the original.
inline TspInstance relabel(const TspInstance& inst, const std::vector<std::uint32_t>& perm) {
    TspInstance r = inst;
    for (std::size_t i = 0; i < perm.size(); ++i) r.coords[i] = inst.coords[perm[i]];
    return r;
}

struct EquivarianceResult {
    double worst_beta = 0.0;
    double worst_scores = 0.0;
    bool tours_match = true;
};

/// Runs the eval-mode model on `inst` and on a random relabeling of it and
/// compares outputs entry by entry (relative to the largest magnitude).
template <typename T>
EquivarianceResult check_equivariance(Model<T>& model, const TspInstance& inst, std::mt19937_64& rng) {
    const std::size_t n = inst.size();
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto moved = relabel(inst, perm);
    const auto a = model.infer(make_batch(std::span(&inst, 1), model.config()))[0];
    const auto b = model.infer(make_batch(std::span(&moved, 1), model.config()))[0];
    EquivarianceResult r;
    double bmax = 0, smax = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bmax = std::max(bmax, std::abs(a.beta[i]));
        for (std::size_t j = 0; j < n; ++j) smax = std::max(smax, std::abs(a.scores(i, j)));
    }
    for (std::size_t i = 0; i < n; ++i) {
        r.worst_beta = std::max(r.worst_beta, std::abs(b.beta[i] - a.beta[perm[i]]) / std::max(bmax, 1e-12));
        for (std::size_t j = 0; j < n; ++j) {
            r.worst_scores =
                std::max(r.worst_scores, std::abs(b.scores(i, j) - a.scores(perm[i], perm[j])) / std::max(smax, 1e-12));
        }
    }
    const auto ta = greedy_decode(a).tour;
    const auto tb = greedy_decode(b).tour;
    for (std::size_t t = 0; t < n; ++t) r.tours_match = r.tours_match && perm[tb[t]] == ta[t];
    return r;
}

}  // namespace nartsp::testing
