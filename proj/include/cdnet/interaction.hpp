#ifndef CDNET_INTERACTION_HPP_
#define CDNET_INTERACTION_HPP_

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cdnet/core_behaviors.hpp"
#include "cdnet/tape.hpp"

namespace cdnet {

// Token matrix fed to the interaction stack; mask[t] == 0 marks padded core
// slots, which are excluded as attention keys and zeroed after each block.
template <typename T>
struct TokenMatrix {
  Var<T> x;  // [T×d]
  Mask mask;

  std::size_t tokens() const { return mask.size(); }
};

// Order: [core_1..core_k, gid, ctx_1..ctx_Nf]; either of the first two
// groups may be absent (ablation variants).
template <typename T>
TokenMatrix<T> build_tokens(const std::optional<CoreBehaviors<T>>& core, std::optional<Var<T>> gid,
                            Var<T> context);

// One transformer block with per-token feed-forward networks:
//   X' = LN(MHA(X) + X),  X_out = LN(PFFN(X') + X')
template <typename T>
class InteractionBlock {
 public:
  InteractionBlock() = default;
  InteractionBlock(ParameterStore<T>& store, const std::string& prefix, std::size_t tokens, std::size_t dim,
                   std::size_t heads, std::size_t expansion, std::mt19937_64& rng);

  // `attention`, when given, receives each head's [T×T] weight matrix.
  Var<T> forward(Tape<T>& tape, const ParameterStore<T>& store, Var<T> x, const Mask& mask,
                 std::vector<Tensor<T>>* attention = nullptr) const;

  std::size_t heads() const { return heads_; }

 private:
  std::size_t tokens_ = 0, dim_ = 0, heads_ = 1;
  std::size_t wq_ = 0, wk_ = 0, wv_ = 0, wo_ = 0;
  std::size_t ffn_w1_ = 0, ffn_b1_ = 0, ffn_w2_ = 0, ffn_b2_ = 0;
  std::size_t ln1_gain_ = 0, ln1_bias_ = 0, ln2_gain_ = 0, ln2_bias_ = 0;
};

// MLP over the flattened [1×T·d] representation, sigmoid output.
template <typename T>
class PredictionHead {
 public:
  PredictionHead() = default;
  PredictionHead(ParameterStore<T>& store, std::size_t in_width, const std::vector<std::size_t>& hidden,
                 std::mt19937_64& rng);

  // Probability, shape [1].
  Var<T> forward(Tape<T>& tape, const ParameterStore<T>& store, Var<T> tokens) const;

  std::size_t weight(std::size_t layer) const { return weights_.at(layer); }
  std::size_t bias(std::size_t layer) const { return biases_.at(layer); }
  std::size_t layers() const { return weights_.size(); }

 private:
  std::vector<std::size_t> weights_, biases_;
};

}  // namespace cdnet

#endif  // CDNET_INTERACTION_HPP_
