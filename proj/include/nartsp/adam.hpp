#pragma once

#include <cstdint>
#include <vector>

#include "nartsp/autodiff.hpp"

namespace nartsp {

template <typename T>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<Array<T>> m;
    std::vector<Array<T>> v;

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam over `params` (in a fixed order); gradients are
/// zeroed afterwards. Moments are allocated on first use.
template <typename T>
void adam_step(std::vector<Parameter<T>*>& params, AdamState<T>& state, double lr);

}  // namespace nartsp
