#ifndef CDNET_BENCH_HPP_
#define CDNET_BENCH_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdnet/config.hpp"

namespace cdnet {

// Multiply-adds of one multi-head attention layer over T tokens of width d:
// Q/K/V/output projections (4·T·d²) plus scores and weighted sum (2·T²·d).
// Head count does not change the total.
std::uint64_t attention_macs(std::size_t tokens, std::size_t d);
std::uint64_t attention_quadratic_macs(std::size_t tokens, std::size_t d);

struct AttentionCost {
  std::uint64_t total_macs = 0;      // counted by the kernels
  std::uint64_t quadratic_macs = 0;  // scores + weighted sum only
  double seconds = 0.0;              // best of the timed repetitions
  double quadratic_seconds = 0.0;
};

// Runs one attention layer on a random [tokens×d] input and counts the
// multiply-adds the kernels actually perform.
AttentionCost run_attention(std::size_t tokens, std::size_t d, std::size_t heads, ExecMode mode,
                            double min_seconds = 0.02, std::uint64_t seed = 1);

struct BenchRow {
  std::size_t L = 0, k = 0, n_fields = 0, d = 0;
  std::size_t tokens_cdnet = 0;  // k + 1 + N_f
  std::size_t tokens_full = 0;   // L + N_f
  AttentionCost cdnet, full;
  double predicted_ratio = 0.0;  // (tokens_cdnet / tokens_full)²
  double counted_ratio = 0.0;    // quadratic multiply-adds, cdnet / full
  double wall_ratio = 0.0;       // whole layer, cdnet / full
};

struct BenchReport {
  std::vector<BenchRow> rows;
};

BenchReport run_bench(std::span<const std::size_t> lengths, std::size_t k, std::size_t n_fields, std::size_t d,
                      std::size_t heads = 2, ExecMode mode = ExecMode::kSerial, double min_seconds = 0.02);

// Tab-separated with a header line.
std::string to_table(const BenchReport& report);

}  // namespace cdnet

#endif  // CDNET_BENCH_HPP_
