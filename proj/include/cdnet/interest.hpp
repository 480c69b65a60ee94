#ifndef CDNET_INTEREST_HPP_
#define CDNET_INTEREST_HPP_

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "cdnet/tape.hpp"

namespace cdnet {

inline constexpr std::size_t kDefaultCountBuckets = 17;

// Bin of a score in [0, 1] among n equal intervals: bin 0 is [0, 1/n], bin
// j > 0 is (j/n, (j+1)/n]. Returned 0-based.
template <typename T>
std::size_t score_bin(T score, std::size_t n);

// Counts of valid scores per bin.
template <typename T>
std::vector<std::size_t> histogram(std::span<const T> scores, const Mask& mask, std::size_t n);

// floor(log2(count + 1)), clamped to the last bucket.
std::size_t count_bucket(std::size_t count, std::size_t buckets);

// One count-embedding table per bin; S_gid is the mean of the n looked-up
// rows. Counts are discrete and receive no gradient.
template <typename T>
class CountEmbedder {
 public:
  CountEmbedder() = default;
  CountEmbedder(ParameterStore<T>& store, std::size_t bins, std::size_t buckets, std::size_t dim,
                std::mt19937_64& rng);

  std::size_t bins() const { return tables_.size(); }
  std::size_t buckets() const { return buckets_; }
  std::size_t table(std::size_t bin) const { return tables_.at(bin); }

  // S_gid, shape [d].
  Var<T> embed(Tape<T>& tape, const ParameterStore<T>& store, std::span<const std::size_t> counts) const;

 private:
  std::vector<std::size_t> tables_;
  std::size_t buckets_ = 0;
  std::size_t dim_ = 0;
};

}  // namespace cdnet

#endif  // CDNET_INTEREST_HPP_
