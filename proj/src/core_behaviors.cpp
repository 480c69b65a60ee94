#include "cdnet/core_behaviors.hpp"

#include <algorithm>
#include <numeric>

#include "cdnet/ops.hpp"

namespace cdnet {

template <typename T>
ScoreVector<T> score_sequence(Var<T> target, Var<T> behaviors, const Mask& mask) {
  return {ops::cosine_scores(target, behaviors, mask), mask};
}

template <typename T>
CoreSelection top_k_select(std::span<const T> scores, const Mask& mask, std::size_t k) {
  if (k < 1) throw ConfigError("top-k selection needs k >= 1");
  if (mask.size() != scores.size()) {
    throw DimensionError("top_k_select: " + std::to_string(scores.size()) + " scores with mask of " +
                         std::to_string(mask.size()));
  }
  std::vector<std::size_t> valid;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (mask[j]) valid.push_back(j);
  }
  const std::size_t keep = std::min(k, valid.size());
  std::partial_sort(valid.begin(), valid.begin() + static_cast<std::ptrdiff_t>(keep), valid.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; });
  CoreSelection sel;
  sel.k = k;
  sel.indices.assign(valid.begin(), valid.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(sel.indices.begin(), sel.indices.end());
  sel.selected.assign(scores.size(), 0);
  for (std::size_t j : sel.indices) sel.selected[j] = 1;
  return sel;
}

template <typename T>
CoreBehaviors<T> ste_gather(Var<T> behaviors, Var<T> scores, const CoreSelection& selection) {
  Tape<T>& tape = *behaviors.tape;
  const std::size_t len = behaviors.value().rows();
  const std::size_t d = behaviors.value().cols();
  if (selection.selected.size() != len || scores.value().size() != len) {
    throw DimensionError("ste_gather: selection over " + std::to_string(selection.selected.size()) +
                         " positions for " + std::to_string(len) + " behaviors");
  }
  CoreBehaviors<T> out;
  out.core_mask.assign(selection.k, 0);
  std::fill_n(out.core_mask.begin(), selection.k_eff(), std::uint8_t{1});
  if (selection.k_eff() == 0) {
    out.rows = tape.constant(Tensor<T>::zeros({selection.k, d}));
    return out;
  }

  Tensor<T> m({len});
  for (std::size_t j = 0; j < len; ++j) m[j] = selection.selected[j] ? T(1) : T(0);
  Var<T> hard = tape.constant(std::move(m));
  // sg[M - A] + A: numerically M, differentiably A.
  Var<T> multiplier = ops::add(ops::stop_gradient(ops::sub(hard, scores)), scores);
  Var<T> gathered = ops::gather_rows(ops::scale_rows(behaviors, multiplier),
                                     std::span<const std::size_t>(selection.indices));
  if (selection.k_eff() < selection.k) {
    gathered = ops::concat_rows<T>({gathered, tape.constant(Tensor<T>::zeros({selection.k - selection.k_eff(), d}))});
  }
  out.rows = gathered;
  return out;
}

template ScoreVector<float> score_sequence<float>(Var<float>, Var<float>, const Mask&);
template ScoreVector<double> score_sequence<double>(Var<double>, Var<double>, const Mask&);
template CoreSelection top_k_select<float>(std::span<const float>, const Mask&, std::size_t);
template CoreSelection top_k_select<double>(std::span<const double>, const Mask&, std::size_t);
template CoreBehaviors<float> ste_gather<float>(Var<float>, Var<float>, const CoreSelection&);
template CoreBehaviors<double> ste_gather<double>(Var<double>, Var<double>, const CoreSelection&);

}  // namespace cdnet
