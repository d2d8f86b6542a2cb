#include "nartsp/adam.hpp"

#include <cmath>

namespace nartsp {

template <typename T>
void adam_step(std::vector<Parameter<T>*>& params, AdamState<T>& state, double lr) {
    if (state.m.empty()) {
        for (auto* p : params) {
            state.m.emplace_back(p->shape(), T{0});
            state.v.emplace_back(p->shape(), T{0});
        }
    }
    if (state.m.size() != params.size()) throw ContractError("Adam state does not match the parameter list");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const double b1 = state.beta1, b2 = state.beta2, eps = state.epsilon;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (m.shape() != p.shape()) throw ContractError("Adam moment shape mismatch for " + p.name());
        auto& g = p.mutable_grad();
        auto& w = p.mutable_value();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            w[i] = static_cast<T>(w[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + eps));
        }
        g.fill(T{0});
    }
}

template void adam_step<float>(std::vector<Parameter<float>*>&, AdamState<float>&, double);
template void adam_step<double>(std::vector<Parameter<double>*>&, AdamState<double>&, double);

}  // namespace nartsp
