#include "nartsp/batch_norm.hpp"

#include <cmath>

namespace nartsp {

template <typename T>
BatchNorm<T>::BatchNorm(const std::string& prefix, std::size_t features)
    : prefix_(prefix),
      gamma_(prefix + ".gamma", Array<T>(Shape{features}, T{1})),
      beta_(prefix + ".beta", Array<T>(Shape{features}, T{0})),
      running_mean_(Shape{features}, T{0}),
      running_var_(Shape{features}, T{1}) {}

template <typename T>
Var<T> BatchNorm<T>::operator()(const Var<T>& x, Mode mode) {
    const std::size_t h = features();
    if (x.value().rank() == 0 || x.shape().back() != h) {
        throw DimensionError("batch_norm: last axis of " + shape_string(x.shape()) + " must be " + std::to_string(h));
    }
    const std::size_t rows = x.value().size() / h;
    const T* X = x.value().data();
    const T* G = gamma_.value().data();
    const T* Bt = beta_.value().data();

    std::vector<double> mu(h, 0.0), var(h, 0.0);
    if (mode == Mode::train) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < h; ++c) mu[c] += X[r * h + c];
        for (auto& m : mu) m /= static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < h; ++c) {
                const double d = X[r * h + c] - mu[c];
                var[c] += d * d;
            }
        for (auto& v : var) v /= static_cast<double>(rows);
        const double unbias = rows > 1 ? static_cast<double>(rows) / static_cast<double>(rows - 1) : 1.0;
        for (std::size_t c = 0; c < h; ++c) {
            running_mean_[c] = static_cast<T>((1.0 - kMomentum) * running_mean_[c] + kMomentum * mu[c]);
            running_var_[c] = static_cast<T>((1.0 - kMomentum) * running_var_[c] + kMomentum * var[c] * unbias);
        }
    } else {
        for (std::size_t c = 0; c < h; ++c) {
            mu[c] = running_mean_[c];
            var[c] = running_var_[c];
        }
    }

    Array<T> inv(Shape{h});
    Array<T> mean_t(Shape{h});
    for (std::size_t c = 0; c < h; ++c) {
        inv[c] = static_cast<T>(1.0 / std::sqrt(var[c] + kEpsilon));
        mean_t[c] = static_cast<T>(mu[c]);
    }
    Array<T> xhat(x.shape());
    Array<T> out(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < h; ++c) {
            const std::size_t i = r * h + c;
            xhat[i] = (X[i] - mean_t[c]) * inv[c];
            out[i] = G[c] * xhat[i] + Bt[c];
        }

    const bool batch_stats = mode == Mode::train;
    return make_result<T>(
        std::move(out), {x.shared(), gamma_.var().shared(), beta_.var().shared()},
        [rows, h, batch_stats, inv = std::move(inv), xhat = std::move(xhat)](Node<T>& self) {
            const T* g = self.grad.data();
            auto& Xn = *self.parents[0];
            auto& Gn = *self.parents[1];
            auto& Bn = *self.parents[2];
            std::vector<double> sum_g(h, 0.0), sum_gx(h, 0.0);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < h; ++c) {
                    sum_g[c] += g[r * h + c];
                    sum_gx[c] += static_cast<double>(g[r * h + c]) * xhat[r * h + c];
                }
            if (Bn.requires_grad) {
                T* d = Bn.grad_buffer().data();
                for (std::size_t c = 0; c < h; ++c) d[c] += static_cast<T>(sum_g[c]);
            }
            if (Gn.requires_grad) {
                T* d = Gn.grad_buffer().data();
                for (std::size_t c = 0; c < h; ++c) d[c] += static_cast<T>(sum_gx[c]);
            }
            if (!Xn.requires_grad) return;
            T* d = Xn.grad_buffer().data();
            const T* G = Gn.value.data();
            if (batch_stats) {
                const double inv_rows = 1.0 / static_cast<double>(rows);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < h; ++c) {
                        const std::size_t i = r * h + c;
                        const double v =
                            g[i] - inv_rows * sum_g[c] - xhat[i] * inv_rows * sum_gx[c];
                        d[i] += static_cast<T>(static_cast<double>(G[c]) * inv[c] * v);
                    }
            } else {
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < h; ++c) d[r * h + c] += g[r * h + c] * G[c] * inv[c];
            }
        });
}

template class BatchNorm<float>;
template class BatchNorm<double>;

}  // namespace nartsp
