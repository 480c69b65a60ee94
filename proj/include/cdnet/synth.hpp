#ifndef CDNET_SYNTH_HPP_
#define CDNET_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cdnet/data.hpp"

namespace cdnet {

// Planted-signal generator. Every item belongs to one category and carries
// a hidden affinity q = ±1. Each sample draws a target item and a sequence
// in which r behaviors (uniform on [0, max_relevant]) come from the
// target's category and the rest from other categories. The click logit is
//
//   core_weight * Σ_{same-category j} q(item_j)
//     + distribution_weight * 1[r >= k_true] + bias + noise_std * N(0, 1)
//
// The first term needs the identities of the relevant behaviors; the second
// only needs how many behaviors resemble the target.
struct SynthConfig {
  std::size_t n_users = 100;
  std::size_t n_items = 200;
  std::size_t n_categories = 50;
  std::size_t seq_len = 32;
  std::size_t min_len = 0;  // 0 = always seq_len
  std::size_t max_relevant = 14;
  std::size_t k_true = 7;
  double core_weight = 1.0;
  double distribution_weight = 3.0;
  double noise_std = 0.0;
  std::size_t n_train = 50000;
  std::size_t n_valid = 5000;
  std::size_t n_test = 10000;

  void validate() const;
};

struct SynthResult {
  std::vector<Sample> samples;
  // Positions (into each sample's sequence) of the same-category behaviors.
  std::vector<std::vector<std::size_t>> relevant_positions;
  std::vector<double> logits;
};

// Flat `key = value` text with the field names above; '#' starts a comment.
void apply_synth_setting(SynthConfig& config, const std::string& key, const std::string& value);
SynthConfig parse_synth_text(const std::string& text, SynthConfig base = {});

DatasetSchema synth_schema(const SynthConfig& config);

// `count` samples from the world fixed by `seed`.
SynthResult synth_generate(const SynthConfig& config, std::size_t count, std::uint64_t seed);

// Train / valid / test splits drawn from one world.
Dataset synth_dataset(const SynthConfig& config, std::uint64_t seed);

// Interaction log in the public behavior-log format. Each user prefers a few
// categories and most clicks land in them; buy/cart/fav events are mixed in.
struct SynthLogConfig {
  std::size_t n_users = 1000;
  std::size_t n_items = 5000;
  std::size_t n_categories = 100;
  std::size_t n_interactions = 100000;
  std::size_t preferred_categories = 3;
  double preferred_share = 0.8;
};

std::vector<InteractionRecord> synth_log(const SynthLogConfig& config, std::uint64_t seed);
void write_log_csv(std::ostream& out, std::span<const InteractionRecord> records);

}  // namespace cdnet

#endif  // CDNET_SYNTH_HPP_
