#include "cdnet/interest.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "cdnet/embeddings.hpp"
#include "cdnet/ops.hpp"

namespace cdnet {

template <typename T>
std::size_t score_bin(T score, std::size_t n) {
  // Start from ceil(a*n) and correct against the exact edges j/n so that a
  // boundary value lands in the lower bin whatever the rounding of a*n.
  const T scaled = score * T(n);
  long b = static_cast<long>(std::ceil(scaled));
  b = std::clamp(b, 1L, static_cast<long>(n));
  while (b > 1 && score <= T(b - 1) / T(n)) --b;
  while (b < static_cast<long>(n) && score > T(b) / T(n)) ++b;
  return static_cast<std::size_t>(b - 1);
}

template <typename T>
std::vector<std::size_t> histogram(std::span<const T> scores, const Mask& mask, std::size_t n) {
  if (n < 1) throw ConfigError("histogram needs n >= 1 bins");
  if (mask.size() != scores.size()) {
    throw DimensionError("histogram: " + std::to_string(scores.size()) + " scores with mask of " +
                         std::to_string(mask.size()));
  }
  std::vector<std::size_t> counts(n, 0);
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (mask[j]) ++counts[score_bin(scores[j], n)];
  }
  return counts;
}

std::size_t count_bucket(std::size_t count, std::size_t buckets) {
  const auto b = static_cast<std::size_t>(std::bit_width(count + 1)) - 1;
  return std::min(b, buckets - 1);
}

template <typename T>
CountEmbedder<T>::CountEmbedder(ParameterStore<T>& store, std::size_t bins, std::size_t buckets,
                                std::size_t dim, std::mt19937_64& rng)
    : buckets_(buckets), dim_(dim) {
  if (bins < 1) throw ConfigError("interest distribution needs n >= 1");
  if (buckets < 1) throw ConfigError("count embedding needs at least one bucket");
  for (std::size_t j = 0; j < bins; ++j) {
    Tensor<T> table({buckets, dim});
    init_uniform(table, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
    tables_.push_back(store.add("gid.bin" + std::to_string(j), std::move(table)));
  }
}

template <typename T>
Var<T> CountEmbedder<T>::embed(Tape<T>& tape, const ParameterStore<T>& store,
                               std::span<const std::size_t> counts) const {
  if (counts.size() != tables_.size()) {
    throw DimensionError("interest embedding: " + std::to_string(counts.size()) + " counts for " +
                         std::to_string(tables_.size()) + " bins");
  }
  Var<T> total;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    const auto bucket = static_cast<std::int32_t>(count_bucket(counts[j], buckets_));
    Var<T> row = ops::embedding_lookup(tape, store, tables_[j], std::span<const std::int32_t>(&bucket, 1));
    total = j == 0 ? row : ops::add(total, row);
  }
  return ops::reshape(ops::scale(total, T(1) / T(counts.size())), {dim_});
}

template std::size_t score_bin<float>(float, std::size_t);
template std::size_t score_bin<double>(double, std::size_t);
template std::vector<std::size_t> histogram<float>(std::span<const float>, const Mask&, std::size_t);
template std::vector<std::size_t> histogram<double>(std::span<const double>, const Mask&, std::size_t);
template class CountEmbedder<float>;
template class CountEmbedder<double>;

}  // namespace cdnet
