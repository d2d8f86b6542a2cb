#pragma once

#include <string>

#include "nartsp/autodiff.hpp"

namespace nartsp {

enum class Mode { train, eval };

/// Batch normalization over the last (feature) axis. In train mode the
/// statistics come from every other axis of the input and the running
/// estimates are updated; eval mode uses the running estimates only.
template <typename T>
class BatchNorm {
public:
    static constexpr double kEpsilon = 1e-5;
    static constexpr double kMomentum = 0.1;

    BatchNorm() = default;
    BatchNorm(const std::string& prefix, std::size_t features);

    Var<T> operator()(const Var<T>& x, Mode mode);

    std::size_t features() const noexcept { return gamma_.size(); }

    Parameter<T>& gamma() noexcept { return gamma_; }
    Parameter<T>& beta() noexcept { return beta_; }
    const Parameter<T>& gamma() const noexcept { return gamma_; }
    const Parameter<T>& beta() const noexcept { return beta_; }

    Array<T>& running_mean() noexcept { return running_mean_; }
    Array<T>& running_var() noexcept { return running_var_; }
    const Array<T>& running_mean() const noexcept { return running_mean_; }
    const Array<T>& running_var() const noexcept { return running_var_; }
    const std::string& prefix() const noexcept { return prefix_; }

private:
    std::string prefix_;
    Parameter<T> gamma_;
    Parameter<T> beta_;
    Array<T> running_mean_;
    Array<T> running_var_;
};

}  // namespace nartsp
