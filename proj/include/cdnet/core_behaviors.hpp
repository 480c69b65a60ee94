#ifndef CDNET_CORE_BEHAVIORS_HPP_
#define CDNET_CORE_BEHAVIORS_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "cdnet/tape.hpp"

namespace cdnet {

// Importance scores a_j in [0, 1] for valid behaviors, -1 elsewhere.
template <typename T>
struct ScoreVector {
  Var<T> a;  // [L]
  Mask mask;
};

struct CoreSelection {
  std::vector<std::size_t> indices;  // ascending position order, length k_eff
  Mask selected;                     // M: one flag per sequence position
  std::size_t k = 0;                 // requested slots

  std::size_t k_eff() const { return indices.size(); }
};

template <typename T>
struct CoreBehaviors {
  Var<T> rows;     // [k×d]; rows past k_eff are zero
  Mask core_mask;  // [k]
};

template <typename T>
ScoreVector<T> score_sequence(Var<T> target, Var<T> behaviors, const Mask& mask);

// Indices of the min(k, valid) largest valid scores. Ties go to the smaller
// index; the result is returned in ascending position order.
template <typename T>
CoreSelection top_k_select(std::span<const T> scores, const Mask& mask, std::size_t k);

// Gather(S ⊙ (sg[M - A] + A), I_k), zero-padded to k rows. The forward
// value equals the hard gather bit for bit; the +A term routes gradient into
// the scores of selected positions.
template <typename T>
CoreBehaviors<T> ste_gather(Var<T> behaviors, Var<T> scores, const CoreSelection& selection);

}  // namespace cdnet

#endif  // CDNET_CORE_BEHAVIORS_HPP_
