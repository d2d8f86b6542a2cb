#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "nartsp/autodiff.hpp"

namespace nartsp {

/// Stand-in for -inf ahead of exponentiation: the most negative finite
/// value, so masked softmax entries come out as exact zeros without NaN.
template <typename T>
constexpr T masked_logit() noexcept {
    return std::numeric_limits<T>::lowest();
}

// Products. --------------------------------------------------------------

/// 2-D matrix product [m,k] x [k,p].
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// Affine map over the last axis: x[..., k] * w[k, p] + bias[p].
/// `bias` may be an empty Var.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias = Var<T>());

// Elementwise. -----------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& a, T factor);

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

/// Normalized exponentials along `axis`.
template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis);

/// Replaces entries where `mask` is nonzero with `fill`. The mask is
/// broadcast against x with right-aligned numpy rules. No gradient flows
/// through filled entries.
template <typename T>
Var<T> masked_fill(const Var<T>& x, const Mask& mask, T fill);

// Layout. ----------------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// Rows [begin, end) of a 2-D array.
template <typename T>
Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t end);

/// Repeats x `count` times along a new leading axis.
template <typename T>
Var<T> tile_leading(const Var<T>& x, std::size_t count);

/// Outer broadcast sum: out[b,i,j,:] = p[b,i,:] + q[b,j,:].
template <typename T>
Var<T> pair_add(const Var<T>& p, const Var<T>& q);

// Head-sliced attention helpers. The feature axis of width h is split into
// `heads` contiguous slices of width h/heads.

/// out[..., k] = sum over slice k of x[..., c] * a[c].
template <typename T>
Var<T> head_dot(const Var<T>& x, const Var<T>& a, std::size_t heads);

/// out[b,i,j,k] = <q[b,i, slice k], key[b,j, slice k]> for q [B,m,h], key [B,n,h].
template <typename T>
Var<T> head_scores(const Var<T>& q, const Var<T>& key, std::size_t heads);

/// out[b,i,c] = sum_j weights[b,i,j,k(c)] * v[b,j,c] for weights [B,m,n,H], v [B,n,h].
template <typename T>
Var<T> head_aggregate(const Var<T>& weights, const Var<T>& v);

// Reductions. ------------------------------------------------------------

template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> mean(const Var<T>& x);

/// Scalar sum of x[i] * w[i] with constant weights.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Array<T>& weights);

// Sequential choice likelihood. -----------------------------------------

/// One categorical decision: softmax over `row` of the score matrix,
/// restricted to entries where `allowed` is nonzero.
struct Choice {
    std::uint32_t row = 0;
    std::uint32_t chosen = 0;
    std::vector<std::uint8_t> allowed;
};

/// Decisions that produced one solution. `start` indexes the start logits
/// (negative when the start is fixed and contributes probability 1).
struct ChoiceSequence {
    std::int64_t start = -1;
    std::vector<Choice> steps;
};

/// Per-instance log-likelihood of the recorded decisions.
/// start_logits: [B,n] (may be empty Var when no sequence uses it);
/// scores: [B,n,n]. Returns [B].
template <typename T>
Var<T> choice_log_prob(const Var<T>& start_logits, const Var<T>& scores,
                       const std::vector<ChoiceSequence>& sequences);

}  // namespace nartsp
