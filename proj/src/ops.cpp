#include "nartsp/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace nartsp {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

void require(bool cond, const std::string& what) {
    if (!cond) throw DimensionError(what);
}

std::size_t leading_rows(const Shape& s) {
    std::size_t r = 1;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
    return r;
}

template <typename T, typename F>
Var<T> unary(const Var<T>& x, F&& f, std::function<void(Node<T>&)> back) {
    Array<T> out(x.shape());
    const T* in = x.value().data();
    T* o = out.data();
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) o[i] = f(in[i]);
    return make_result<T>(std::move(out), {x.shared()}, std::move(back));
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    require(a.value().rank() == 2 && b.value().rank() == 2, "matmul expects 2-D operands");
    const std::size_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
    require(b.shape()[0] == k, "matmul inner dimensions disagree: " + shape_string(a.shape()) + " x " +
                                   shape_string(b.shape()));
    Array<T> out(Shape{m, p});
    MatMap<T>(out.data(), m, p).noalias() =
        ConstMatMap<T>(a.value().data(), m, k) * ConstMatMap<T>(b.value().data(), k, p);
    return make_result<T>(std::move(out), {a.shared(), b.shared()}, [m, k, p](Node<T>& self) {
        auto& A = *self.parents[0];
        auto& B = *self.parents[1];
        ConstMatMap<T> g(self.grad.data(), m, p);
        if (A.requires_grad) {
            MatMap<T>(A.grad_buffer().data(), m, k).noalias() += g * ConstMatMap<T>(B.value.data(), k, p).transpose();
        }
        if (B.requires_grad) {
            MatMap<T>(B.grad_buffer().data(), k, p).noalias() += ConstMatMap<T>(A.value.data(), m, k).transpose() * g;
        }
    });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
    require(x.value().rank() >= 1 && w.value().rank() == 2, "linear expects x[...,k] and w[k,p]");
    const std::size_t k = x.shape().back();
    require(w.shape()[0] == k, "linear: input width " + std::to_string(k) + " vs weight " + shape_string(w.shape()));
    const std::size_t p = w.shape()[1];
    const bool has_bias = bias.valid();
    if (has_bias) require(bias.value().size() == p, "linear: bias length mismatch");
    const std::size_t rows = leading_rows(x.shape());

    Shape out_shape = x.shape();
    out_shape.back() = p;
    Array<T> out(out_shape);
    MatMap<T> y(out.data(), rows, p);
    y.noalias() = ConstMatMap<T>(x.value().data(), rows, k) * ConstMatMap<T>(w.value().data(), k, p);
    if (has_bias) y.rowwise() += ConstVecMap<T>(bias.value().data(), p);

    std::vector<NodePtr<T>> parents{x.shared(), w.shared()};
    if (has_bias) parents.push_back(bias.shared());
    return make_result<T>(std::move(out), std::move(parents), [rows, k, p, has_bias](Node<T>& self) {
        auto& X = *self.parents[0];
        auto& W = *self.parents[1];
        ConstMatMap<T> g(self.grad.data(), rows, p);
        if (X.requires_grad) {
            MatMap<T>(X.grad_buffer().data(), rows, k).noalias() += g * ConstMatMap<T>(W.value.data(), k, p).transpose();
        }
        if (W.requires_grad) {
            MatMap<T>(W.grad_buffer().data(), k, p).noalias() +=
                ConstMatMap<T>(X.value.data(), rows, k).transpose() * g;
        }
        if (has_bias && self.parents[2]->requires_grad) {
            // Plain loop: Eigen's vectorized reduction peels by pointer
            // alignment, which would make the sum order allocation dependent.
            T* gb = self.parents[2]->grad_buffer().data();
            const T* gs = self.grad.data();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < p; ++c) gb[c] += gs[r * p + c];
        }
    });
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require(a.shape() == b.shape(), "add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    Array<T> out(a.shape());
    const std::size_t n = out.size();
    const T* x = a.value().data();
    const T* y = b.value().data();
    T* o = out.data();
    for (std::size_t i = 0; i < n; ++i) o[i] = x[i] + y[i];
    return make_result<T>(std::move(out), {a.shared(), b.shared()}, [n](Node<T>& self) {
        const T* g = self.grad.data();
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            T* d = p->grad_buffer().data();
            for (std::size_t i = 0; i < n; ++i) d[i] += g[i];
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require(a.shape() == b.shape(), "mul: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    Array<T> out(a.shape());
    const std::size_t n = out.size();
    const T* x = a.value().data();
    const T* y = b.value().data();
    T* o = out.data();
    for (std::size_t i = 0; i < n; ++i) o[i] = x[i] * y[i];
    return make_result<T>(std::move(out), {a.shared(), b.shared()}, [n](Node<T>& self) {
        const T* g = self.grad.data();
        auto& A = *self.parents[0];
        auto& B = *self.parents[1];
        if (A.requires_grad) {
            T* d = A.grad_buffer().data();
            const T* y = B.value.data();
            for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * y[i];
        }
        if (B.requires_grad) {
            T* d = B.grad_buffer().data();
            const T* x = A.value.data();
            for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * x[i];
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
    return unary<T>(a, [factor](T v) { return v * factor; }, [factor](Node<T>& self) {
        T* d = self.parents[0]->grad_buffer().data();
        const T* g = self.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += g[i] * factor;
    });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
    return unary<T>(x, [slope](T v) { return v > T{0} ? v : slope * v; }, [slope](Node<T>& self) {
        auto& P = *self.parents[0];
        T* d = P.grad_buffer().data();
        const T* in = P.value.data();
        const T* g = self.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += in[i] > T{0} ? g[i] : slope * g[i];
    });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    return unary<T>(x, [](T v) { return v > T{0} ? v : T{0}; }, [](Node<T>& self) {
        auto& P = *self.parents[0];
        T* d = P.grad_buffer().data();
        const T* in = P.value.data();
        const T* g = self.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (in[i] > T{0}) d[i] += g[i];
        }
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    return unary<T>(x, [](T v) { return T{1} / (T{1} + std::exp(-v)); }, [](Node<T>& self) {
        T* d = self.parents[0]->grad_buffer().data();
        const T* y = self.value.data();
        const T* g = self.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += g[i] * y[i] * (T{1} - y[i]);
    });
}

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
    const Shape& s = x.shape();
    if (axis >= s.size()) throw DimensionError("softmax axis " + std::to_string(axis) + " out of range for " + shape_string(s));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];

    Array<T> out(s);
    const T* in = x.value().data();
    T* o = out.data();
    for (std::size_t a = 0; a < outer; ++a) {
        for (std::size_t c = 0; c < inner; ++c) {
            const std::size_t base = a * len * inner + c;
            T mx = masked_logit<T>();
            for (std::size_t j = 0; j < len; ++j) {
                const T v = in[base + j * inner];
                if (std::isnan(v) || v == std::numeric_limits<T>::infinity()) throw NumericError("softmax: non-finite logit");
                mx = std::max(mx, v);
            }
            if (mx == masked_logit<T>()) throw ContractError("softmax over a fully masked slice");
            T total{0};
            for (std::size_t j = 0; j < len; ++j) {
                const T e = std::exp(in[base + j * inner] - mx);
                o[base + j * inner] = e;
                total += e;
            }
            const T inv = T{1} / total;
            for (std::size_t j = 0; j < len; ++j) o[base + j * inner] *= inv;
        }
    }
    return make_result<T>(std::move(out), {x.shared()}, [outer, inner, len](Node<T>& self) {
        T* d = self.parents[0]->grad_buffer().data();
        const T* y = self.value.data();
        const T* g = self.grad.data();
        for (std::size_t a = 0; a < outer; ++a) {
            for (std::size_t c = 0; c < inner; ++c) {
                const std::size_t base = a * len * inner + c;
                T dot{0};
                for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
                for (std::size_t j = 0; j < len; ++j) {
                    const std::size_t idx = base + j * inner;
                    d[idx] += y[idx] * (g[idx] - dot);
                }
            }
        }
    });
}

namespace {

// Maps each flat index of `target` to the flat index of a right-aligned
// broadcast source of shape `src`.
std::vector<std::size_t> broadcast_index(const Shape& src, const Shape& target) {
    if (src.size() > target.size()) throw DimensionError("mask rank exceeds array rank");
    const std::size_t offset = target.size() - src.size();
    std::vector<std::size_t> stride(target.size(), 0);
    std::size_t acc = 1;
    for (std::size_t i = src.size(); i-- > 0;) {
        const std::size_t t = i + offset;
        if (src[i] == target[t]) {
            stride[t] = acc;
        } else if (src[i] != 1) {
            throw DimensionError("mask shape " + shape_string(src) + " not broadcastable to " + shape_string(target));
        }
        acc *= src[i];
    }
    const std::size_t total = shape_size(target);
    std::vector<std::size_t> map(total);
    std::vector<std::size_t> idx(target.size(), 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t off = 0;
        for (std::size_t a = 0; a < target.size(); ++a) off += idx[a] * stride[a];
        map[flat] = off;
        for (std::size_t a = target.size(); a-- > 0;) {
            if (++idx[a] < target[a]) break;
            idx[a] = 0;
        }
    }
    return map;
}

}  // namespace

template <typename T>
Var<T> masked_fill(const Var<T>& x, const Mask& mask, T fill) {
    const auto map = broadcast_index(mask.shape(), x.shape());
    Array<T> out = x.value();
    std::vector<std::uint8_t> hit(out.size(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (mask[map[i]]) {
            out[i] = fill;
            hit[i] = 1;
        }
    }
    return make_result<T>(std::move(out), {x.shared()}, [hit = std::move(hit)](Node<T>& self) {
        T* d = self.parents[0]->grad_buffer().data();
        const T* g = self.grad.data();
        for (std::size_t i = 0; i < hit.size(); ++i) {
            if (!hit[i]) d[i] += g[i];
        }
    });
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
    Array<T> out = x.value().reshaped(std::move(shape));
    return make_result<T>(std::move(out), {x.shared()}, [](Node<T>& self) {
        T* d = self.parents[0]->grad_buffer().data();
        const T* g = self.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += g[i];
    });
}

template <typename T>
Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t end) {
    require(x.value().rank() == 2, "slice_rows expects a 2-D array");
    require(begin <= end && end <= x.shape()[0], "slice_rows range out of bounds");
    const std::size_t cols = x.shape()[1];
    Array<T> out(Shape{end - begin, cols});
    std::copy(x.value().data() + begin * cols, x.value().data() + end * cols, out.data());
    return make_result<T>(std::move(out), {x.shared()}, [begin, cols](Node<T>& self) {
        T* d = self.parents[0]->grad_buffer().data() + begin * cols;
        const T* g = self.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += g[i];
    });
}

template <typename T>
Var<T> tile_leading(const Var<T>& x, std::size_t count) {
    Shape s{count};
    s.insert(s.end(), x.shape().begin(), x.shape().end());
    Array<T> out(s);
    const std::size_t block = x.value().size();
    for (std::size_t c = 0; c < count; ++c) std::copy(x.value().data(), x.value().data() + block, out.data() + c * block);
    return make_result<T>(std::move(out), {x.shared()}, [count, block](Node<T>& self) {
        T* d = self.parents[0]->grad_buffer().data();
        const T* g = self.grad.data();
        for (std::size_t c = 0; c < count; ++c)
            for (std::size_t i = 0; i < block; ++i) d[i] += g[c * block + i];
    });
}

template <typename T>
Var<T> pair_add(const Var<T>& p, const Var<T>& q) {
    require(p.value().rank() == 3 && q.value().rank() == 3, "pair_add expects [B,n,c] operands");
    const std::size_t B = p.shape()[0], np = p.shape()[1], c = p.shape()[2];
    const std::size_t nq = q.shape()[1];
    require(q.shape()[0] == B && q.shape()[2] == c, "pair_add batch/feature mismatch");
    Array<T> out(Shape{B, np, nq, c});
    const T* P = p.value().data();
    const T* Q = q.value().data();
    T* o = out.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < np; ++i) {
            const T* pi = P + (b * np + i) * c;
            for (std::size_t j = 0; j < nq; ++j) {
                const T* qj = Q + (b * nq + j) * c;
                T* oij = o + ((b * np + i) * nq + j) * c;
                for (std::size_t f = 0; f < c; ++f) oij[f] = pi[f] + qj[f];
            }
        }
    return make_result<T>(std::move(out), {p.shared(), q.shared()}, [B, np, nq, c](Node<T>& self) {
        const T* g = self.grad.data();
        auto& Pn = *self.parents[0];
        auto& Qn = *self.parents[1];
        T* dp = Pn.requires_grad ? Pn.grad_buffer().data() : nullptr;
        T* dq = Qn.requires_grad ? Qn.grad_buffer().data() : nullptr;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < np; ++i)
                for (std::size_t j = 0; j < nq; ++j) {
                    const T* gij = g + ((b * np + i) * nq + j) * c;
                    if (dp) {
                        T* d = dp + (b * np + i) * c;
                        for (std::size_t f = 0; f < c; ++f) d[f] += gij[f];
                    }
                    if (dq) {
                        T* d = dq + (b * nq + j) * c;
                        for (std::size_t f = 0; f < c; ++f) d[f] += gij[f];
                    }
                }
    });
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> head_dot(const Var<T>& x, const Var<T>& a, std::size_t heads) {
    const std::size_t h = x.shape().back();
    require(a.value().size() == h, "head_dot: weight length must equal feature width");
    require(heads > 0 && h % heads == 0, "head_dot: width not divisible by head count");
    const std::size_t w = h / heads;
    const std::size_t rows = leading_rows(x.shape());
    Shape s = x.shape();
    s.back() = heads;
    Array<T> out(s);
    const T* X = x.value().data();
    const T* A = a.value().data();
    T* o = out.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < heads; ++k) {
            T acc{0};
            for (std::size_t c = k * w; c < (k + 1) * w; ++c) acc += X[r * h + c] * A[c];
            o[r * heads + k] = acc;
        }
    return make_result<T>(std::move(out), {x.shared(), a.shared()}, [rows, h, heads, w](Node<T>& self) {
        const T* g = self.grad.data();
        auto& Xn = *self.parents[0];
        auto& An = *self.parents[1];
        const T* X = Xn.value.data();
        const T* A = An.value.data();
        if (Xn.requires_grad) {
            T* d = Xn.grad_buffer().data();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < h; ++c) d[r * h + c] += g[r * heads + c / w] * A[c];
        }
        if (An.requires_grad) {
            T* d = An.grad_buffer().data();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < h; ++c) d[c] += g[r * heads + c / w] * X[r * h + c];
        }
    });
}

template <typename T>
Var<T> head_scores(const Var<T>& q, const Var<T>& key, std::size_t heads) {
    require(q.value().rank() == 3 && key.value().rank() == 3, "head_scores expects [B,m,h] and [B,n,h]");
    const std::size_t B = q.shape()[0], m = q.shape()[1], h = q.shape()[2];
    const std::size_t n = key.shape()[1];
    require(key.shape()[0] == B && key.shape()[2] == h, "head_scores: batch/width mismatch");
    require(heads > 0 && h % heads == 0, "head_scores: width not divisible by head count");
    const std::size_t w = h / heads;
    Array<T> out(Shape{B, m, n, heads});
    const T* Q = q.value().data();
    const T* K = key.value().data();
    T* o = out.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t k = 0; k < heads; ++k) {
                    T acc{0};
                    const T* qi = Q + (b * m + i) * h + k * w;
                    const T* kj = K + (b * n + j) * h + k * w;
                    for (std::size_t c = 0; c < w; ++c) acc += qi[c] * kj[c];
                    o[((b * m + i) * n + j) * heads + k] = acc;
                }
    return make_result<T>(std::move(out), {q.shared(), key.shared()}, [B, m, n, h, heads, w](Node<T>& self) {
        const T* g = self.grad.data();
        auto& Qn = *self.parents[0];
        auto& Kn = *self.parents[1];
        const T* Q = Qn.value.data();
        const T* K = Kn.value.data();
        T* dq = Qn.requires_grad ? Qn.grad_buffer().data() : nullptr;
        T* dk = Kn.requires_grad ? Kn.grad_buffer().data() : nullptr;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    for (std::size_t k = 0; k < heads; ++k) {
                        const T gs = g[((b * m + i) * n + j) * heads + k];
                        const std::size_t qo = (b * m + i) * h + k * w;
                        const std::size_t ko = (b * n + j) * h + k * w;
                        if (dq)
                            for (std::size_t c = 0; c < w; ++c) dq[qo + c] += gs * K[ko + c];
                        if (dk)
                            for (std::size_t c = 0; c < w; ++c) dk[ko + c] += gs * Q[qo + c];
                    }
    });
}

template <typename T>
Var<T> head_aggregate(const Var<T>& weights, const Var<T>& v) {
    require(weights.value().rank() == 4 && v.value().rank() == 3, "head_aggregate expects [B,m,n,H] and [B,n,h]");
    const std::size_t B = weights.shape()[0], m = weights.shape()[1], n = weights.shape()[2];
    const std::size_t heads = weights.shape()[3];
    const std::size_t h = v.shape()[2];
    require(v.shape()[0] == B && v.shape()[1] == n, "head_aggregate: batch/node mismatch");
    require(h % heads == 0, "head_aggregate: width not divisible by head count");
    const std::size_t w = h / heads;
    Array<T> out(Shape{B, m, h}, T{0});
    const T* W = weights.value().data();
    const T* V = v.value().data();
    T* o = out.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < m; ++i) {
            T* oi = o + (b * m + i) * h;
            for (std::size_t j = 0; j < n; ++j) {
                const T* wij = W + ((b * m + i) * n + j) * heads;
                const T* vj = V + (b * n + j) * h;
                for (std::size_t c = 0; c < h; ++c) oi[c] += wij[c / w] * vj[c];
            }
        }
    return make_result<T>(std::move(out), {weights.shared(), v.shared()}, [B, m, n, h, heads, w](Node<T>& self) {
        const T* g = self.grad.data();
        auto& Wn = *self.parents[0];
        auto& Vn = *self.parents[1];
        const T* W = Wn.value.data();
        const T* V = Vn.value.data();
        T* dw = Wn.requires_grad ? Wn.grad_buffer().data() : nullptr;
        T* dv = Vn.requires_grad ? Vn.grad_buffer().data() : nullptr;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < m; ++i) {
                const T* gi = g + (b * m + i) * h;
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t wo = ((b * m + i) * n + j) * heads;
                    const T* vj = V + (b * n + j) * h;
                    if (dw) {
                        for (std::size_t k = 0; k < heads; ++k) {
                            T acc{0};
                            for (std::size_t c = k * w; c < (k + 1) * w; ++c) acc += gi[c] * vj[c];
                            dw[wo + k] += acc;
                        }
                    }
                    if (dv) {
                        T* dvj = dv + (b * n + j) * h;
                        for (std::size_t c = 0; c < h; ++c) dvj[c] += W[wo + c / w] * gi[c];
                    }
                }
            }
    });
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum(const Var<T>& x) {
    T acc{0};
    for (T v : x.value().values()) acc += v;
    return make_result<T>(Array<T>::scalar(acc), {x.shared()}, [](Node<T>& self) {
        const T g = self.grad[0];
        for (T& d : self.parents[0]->grad_buffer().values()) d += g;
    });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
    const std::size_t n = x.value().size();
    if (n == 0) throw ContractError("mean of empty array");
    return scale(sum(x), T{1} / static_cast<T>(n));
}

template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Array<T>& weights) {
    require(weights.size() == x.value().size(), "weighted_sum: weight count mismatch");
    T acc{0};
    const T* X = x.value().data();
    for (std::size_t i = 0; i < weights.size(); ++i) acc += X[i] * weights[i];
    return make_result<T>(Array<T>::scalar(acc), {x.shared()}, [weights](Node<T>& self) {
        const T g = self.grad[0];
        T* d = self.parents[0]->grad_buffer().data();
        for (std::size_t i = 0; i < weights.size(); ++i) d[i] += g * weights[i];
    });
}

// ---------------------------------------------------------------------------

namespace {

// log-softmax at `chosen` over the allowed entries of a row; fills `probs`
// with the restricted distribution (zeros off the allowed set).
template <typename T>
double restricted_log_prob(const T* row, std::size_t n, const std::uint8_t* allowed, std::size_t chosen,
                           std::vector<double>* probs) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
        if (!allowed || allowed[j]) mx = std::max(mx, static_cast<double>(row[j]));
    if (!std::isfinite(mx)) throw ContractError("choice over an empty allowed set");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        if (!allowed || allowed[j]) total += std::exp(static_cast<double>(row[j]) - mx);
    const double lse = mx + std::log(total);
    if (probs) {
        probs->assign(n, 0.0);
        for (std::size_t j = 0; j < n; ++j)
            if (!allowed || allowed[j]) (*probs)[j] = std::exp(static_cast<double>(row[j]) - lse);
    }
    return static_cast<double>(row[chosen]) - lse;
}

}  // namespace

template <typename T>
Var<T> choice_log_prob(const Var<T>& start_logits, const Var<T>& scores, const std::vector<ChoiceSequence>& sequences) {
    require(scores.value().rank() == 3, "choice_log_prob: scores must be [B,n,n]");
    const std::size_t B = scores.shape()[0], n = scores.shape()[1];
    require(scores.shape()[2] == n, "choice_log_prob: scores must be square per instance");
    require(sequences.size() == B, "choice_log_prob: one sequence per batch entry required");
    const bool has_start = start_logits.valid();
    if (has_start) require(start_logits.shape() == Shape({B, n}), "choice_log_prob: start logits must be [B,n]");

    Array<T> out(Shape{B});
    for (std::size_t b = 0; b < B; ++b) {
        const auto& seq = sequences[b];
        double total = 0.0;
        if (seq.start >= 0) {
            if (!has_start) throw ContractError("choice_log_prob: sequence uses start logits but none given");
            require(static_cast<std::size_t>(seq.start) < n, "choice_log_prob: start index out of range");
            total += restricted_log_prob(start_logits.value().data() + b * n, n, nullptr,
                                         static_cast<std::size_t>(seq.start), nullptr);
        }
        for (const auto& step : seq.steps) {
            require(step.allowed.size() == n && step.row < n && step.chosen < n, "choice_log_prob: malformed step");
            if (!step.allowed[step.chosen]) throw ContractError("choice_log_prob: chosen entry is not allowed");
            total += restricted_log_prob(scores.value().data() + (b * n + step.row) * n, n, step.allowed.data(),
                                         step.chosen, nullptr);
        }
        out[b] = static_cast<T>(total);
    }

    std::vector<NodePtr<T>> parents{scores.shared()};
    if (has_start) parents.push_back(start_logits.shared());
    return make_result<T>(std::move(out), std::move(parents), [B, n, has_start, sequences](Node<T>& self) {
        auto& S = *self.parents[0];
        T* ds = S.requires_grad ? S.grad_buffer().data() : nullptr;
        T* db = nullptr;
        const T* beta = nullptr;
        if (has_start && self.parents[1]->requires_grad) {
            db = self.parents[1]->grad_buffer().data();
            beta = self.parents[1]->value.data();
        }
        std::vector<double> probs;
        for (std::size_t b = 0; b < B; ++b) {
            const double g = static_cast<double>(self.grad[b]);
            if (g == 0.0) continue;
            const auto& seq = sequences[b];
            if (seq.start >= 0 && db) {
                restricted_log_prob(beta + b * n, n, nullptr, static_cast<std::size_t>(seq.start), &probs);
                for (std::size_t j = 0; j < n; ++j) {
                    const double ind = j == static_cast<std::size_t>(seq.start) ? 1.0 : 0.0;
                    db[b * n + j] += static_cast<T>(g * (ind - probs[j]));
                }
            }
            if (!ds) continue;
            for (const auto& step : seq.steps) {
                const std::size_t off = (b * n + step.row) * n;
                restricted_log_prob(S.value.data() + off, n, step.allowed.data(), step.chosen, &probs);
                for (std::size_t j = 0; j < n; ++j) {
                    if (!step.allowed[j]) continue;
                    const double ind = j == step.chosen ? 1.0 : 0.0;
                    ds[off + j] += static_cast<T>(g * (ind - probs[j]));
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------

#define NARTSP_INSTANTIATE_OPS(T)                                                                        \
    template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                             \
    template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                              \
    template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                \
    template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                \
    template Var<T> scale<T>(const Var<T>&, T);                                                          \
    template Var<T> leaky_relu<T>(const Var<T>&, T);                                                     \
    template Var<T> relu<T>(const Var<T>&);                                                              \
    template Var<T> sigmoid<T>(const Var<T>&);                                                           \
    template Var<T> softmax<T>(const Var<T>&, std::size_t);                                              \
    template Var<T> masked_fill<T>(const Var<T>&, const Mask&, T);                                       \
    template Var<T> reshape<T>(const Var<T>&, Shape);                                                    \
    template Var<T> slice_rows<T>(const Var<T>&, std::size_t, std::size_t);                              \
    template Var<T> tile_leading<T>(const Var<T>&, std::size_t);                                         \
    template Var<T> pair_add<T>(const Var<T>&, const Var<T>&);                                           \
    template Var<T> head_dot<T>(const Var<T>&, const Var<T>&, std::size_t);                              \
    template Var<T> head_scores<T>(const Var<T>&, const Var<T>&, std::size_t);                           \
    template Var<T> head_aggregate<T>(const Var<T>&, const Var<T>&);                                     \
    template Var<T> sum<T>(const Var<T>&);                                                               \
    template Var<T> mean<T>(const Var<T>&);                                                              \
    template Var<T> weighted_sum<T>(const Var<T>&, const Array<T>&);                                     \
    template Var<T> choice_log_prob<T>(const Var<T>&, const Var<T>&, const std::vector<ChoiceSequence>&);

NARTSP_INSTANTIATE_OPS(float)
NARTSP_INSTANTIATE_OPS(double)

}  // namespace nartsp
