#ifndef CDNET_OPS_HPP_
#define CDNET_OPS_HPP_

// Differentiable operations recorded on a Tape. Shapes follow the matrix
// view of Tensor: a rank-1 tensor of length n behaves as a 1×n row where a
// matrix is expected. No implicit broadcasting beyond what each op states.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cdnet/tape.hpp"

namespace cdnet::ops {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kCosineFloor = 1e-12;
inline constexpr double kProbClamp = 1e-7;

// Elementwise, identical shapes.
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> x, T c);
template <typename T> Var<T> add_scalar(Var<T> x, T c);
template <typename T> Var<T> sigmoid(Var<T> x);
template <typename T> Var<T> relu(Var<T> x);

// x[m×n] + b[n] on every row.
template <typename T> Var<T> add_bias(Var<T> x, Var<T> b);

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
template <typename T> Var<T> transpose(Var<T> x);

// Row softmax, stabilized by the row max. Columns with col_mask[j] == 0 get
// exactly zero weight.
template <typename T> Var<T> softmax_rows(Var<T> x, const Mask& col_mask = {});

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(kLayerNormEps));

template <typename T> Var<T> gather_rows(Var<T> x, std::span<const std::size_t> idx);
// Stacks along the token axis; rank-1 inputs count as one row.
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <typename T> Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end);
template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <typename T> Var<T> reshape(Var<T> x, Shape shape);

// Forward identity, backward zero.
template <typename T> Var<T> stop_gradient(Var<T> x);

template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> mean(Var<T> x);

// x[L×d] with row r multiplied by s[r].
template <typename T> Var<T> scale_rows(Var<T> x, Var<T> s);

// Row lookup into a parameter table; backward adds into touched rows only.
template <typename T>
Var<T> embedding_lookup(Tape<T>& tape, const ParameterStore<T>& store, std::size_t table,
                        std::span<const std::int32_t> ids);

// a_j = (cos(f, s_j) + 1) / 2 for valid rows, -1 for invalid ones. The
// cosine denominator is floored at kCosineFloor; inside the floor the score
// is treated as a constant.
template <typename T> Var<T> cosine_scores(Var<T> f, Var<T> s, const Mask& mask);

// Per-token affine map: y[t] = x[t] · w[t] + b[t], with w[T×in×out], b[T×out].
template <typename T> Var<T> token_linear(Var<T> x, Var<T> w, Var<T> b);

// Mean binary cross-entropy over a batch of probabilities; predictions are
// clamped to [kProbClamp, 1 - kProbClamp] and clamped entries get no gradient.
template <typename T> Var<T> bce_loss(Var<T> probs, std::span<const T> labels);

}  // namespace cdnet::ops

#endif  // CDNET_OPS_HPP_
