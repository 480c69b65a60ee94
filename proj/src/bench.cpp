#include "cdnet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "cdnet/errors.hpp"
#include "cdnet/kernels.hpp"

namespace cdnet {
namespace {

using Clock = std::chrono::steady_clock;

struct Layer {
  std::size_t tokens, d, heads;
  std::vector<float> x, wq, wk, wv, wo;
  std::vector<float> q, k, v, qh, kh, vh, scores, probs, oh, merged, out;
};

Layer make_layer(std::size_t tokens, std::size_t d, std::size_t heads, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  auto fill = [&](std::size_t n) {
    std::vector<float> v(n);
    for (float& x : v) x = u(rng);
    return v;
  };
  Layer l{tokens, d, heads, fill(tokens * d), fill(d * d), fill(d * d), fill(d * d), fill(d * d),
          {}, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}};
  const std::size_t dh = d / heads;
  l.q.resize(tokens * d);
  l.k.resize(tokens * d);
  l.v.resize(tokens * d);
  l.qh.resize(tokens * dh);
  l.kh.resize(tokens * dh);
  l.vh.resize(tokens * dh);
  l.scores.resize(tokens * tokens);
  l.probs.resize(tokens * tokens);
  l.oh.resize(tokens * dh);
  l.merged.resize(tokens * d);
  l.out.resize(tokens * d);
  return l;
}

void slice(const std::vector<float>& src, std::vector<float>& dst, std::size_t rows, std::size_t d, std::size_t begin,
           std::size_t width) {
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(src.data() + r * d + begin, width, dst.data() + r * width);
  }
}

// Returns seconds spent in the quadratic part. When `quad` is given, the
// score and weighted-sum kernels count into it instead of the caller's
// counter.
template <bool kOmp>
double forward(Layer& l, kernels::MacCounter* quad = nullptr) {
  const std::size_t t = l.tokens, d = l.d, dh = d / l.heads;
  auto nn = [](const float* a, const float* b, float* c, std::size_t m, std::size_t p, std::size_t q) {
    if constexpr (kOmp) {
      kernels::omp::gemm_nn(a, b, c, m, p, q, false);
    } else {
      kernels::gemm_nn(a, b, c, m, p, q, false);
    }
  };
  nn(l.x.data(), l.wq.data(), l.q.data(), t, d, d);
  nn(l.x.data(), l.wk.data(), l.k.data(), t, d, d);
  nn(l.x.data(), l.wv.data(), l.v.data(), t, d, d);
  double seconds = 0.0;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  for (std::size_t h = 0; h < l.heads; ++h) {
    slice(l.q, l.qh, t, d, h * dh, dh);
    slice(l.k, l.kh, t, d, h * dh, dh);
    slice(l.v, l.vh, t, d, h * dh, dh);
    const auto start = Clock::now();
    kernels::MacCounter* outer = kernels::active_counter();
    if (quad) kernels::active_counter() = quad;
    if constexpr (kOmp) {
      kernels::omp::gemm_nt(l.qh.data(), l.kh.data(), l.scores.data(), t, dh, t, false);
    } else {
      kernels::gemm_nt(l.qh.data(), l.kh.data(), l.scores.data(), t, dh, t, false);
    }
    for (float& s : l.scores) s *= scale;
    if constexpr (kOmp) {
      kernels::omp::softmax_rows(l.scores.data(), l.probs.data(), t, t, {});
    } else {
      kernels::softmax_rows(l.scores.data(), l.probs.data(), t, t, {});
    }
    nn(l.probs.data(), l.vh.data(), l.oh.data(), t, t, dh);
    kernels::active_counter() = outer;
    seconds += std::chrono::duration<double>(Clock::now() - start).count();
    for (std::size_t r = 0; r < t; ++r) std::copy_n(l.oh.data() + r * dh, dh, l.merged.data() + r * d + h * dh);
  }
  nn(l.merged.data(), l.wo.data(), l.out.data(), t, d, d);
  return seconds;
}

}  // namespace

std::uint64_t attention_macs(std::size_t tokens, std::size_t d) {
  return attention_quadratic_macs(tokens, d) + 4ull * tokens * d * d;
}

std::uint64_t attention_quadratic_macs(std::size_t tokens, std::size_t d) { return 2ull * tokens * tokens * d; }

AttentionCost run_attention(std::size_t tokens, std::size_t d, std::size_t heads, ExecMode mode, double min_seconds,
                            std::uint64_t seed) {
  if (tokens < 1 || d < 1 || heads < 1 || d % heads != 0) {
    throw ConfigError("attention bench needs tokens >= 1 and heads dividing d");
  }
  Layer layer = make_layer(tokens, d, heads, seed);
  auto run = [&] { return mode == ExecMode::kParallel ? forward<true>(layer) : forward<false>(layer); };

  AttentionCost cost;
  {
    kernels::MacCounter linear, quad;
    kernels::ScopedMacCount scope(linear);
    if (mode == ExecMode::kParallel) {
      forward<true>(layer, &quad);
    } else {
      forward<false>(layer, &quad);
    }
    cost.quadratic_macs = quad.macs;
    cost.total_macs = linear.macs + quad.macs;
  }

  cost.seconds = std::numeric_limits<double>::infinity();
  cost.quadratic_seconds = std::numeric_limits<double>::infinity();
  double spent = 0.0;
  for (int rep = 0; rep < 3 || spent < min_seconds; ++rep) {
    const auto start = Clock::now();
    const double quad = run();
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    cost.seconds = std::min(cost.seconds, secs);
    cost.quadratic_seconds = std::min(cost.quadratic_seconds, quad);
    spent += secs;
    if (rep > 100000) break;
  }
  return cost;
}

BenchReport run_bench(std::span<const std::size_t> lengths, std::size_t k, std::size_t n_fields, std::size_t d,
                      std::size_t heads, ExecMode mode, double min_seconds) {
  BenchReport report;
  for (std::size_t L : lengths) {
    if (L < 1 || k < 1) throw ConfigError("bench lengths and k must be positive");
    BenchRow row;
    row.L = L;
    row.k = k;
    row.n_fields = n_fields;
    row.d = d;
    row.tokens_cdnet = k + 1 + n_fields;
    row.tokens_full = L + n_fields;
    row.cdnet = run_attention(row.tokens_cdnet, d, heads, mode, min_seconds);
    row.full = run_attention(row.tokens_full, d, heads, mode, min_seconds);
    const double r = static_cast<double>(row.tokens_cdnet) / static_cast<double>(row.tokens_full);
    row.predicted_ratio = r * r;
    row.counted_ratio =
        static_cast<double>(row.cdnet.quadratic_macs) / static_cast<double>(row.full.quadratic_macs);
    row.wall_ratio = row.cdnet.seconds / row.full.seconds;
    report.rows.push_back(row);
  }
  return report;
}

std::string to_table(const BenchReport& report) {
  std::ostringstream out;
  out << "L\tk\tN_f\td\tT_cdnet\tT_full\tmacs_cdnet\tmacs_full\tquad_macs_cdnet\tquad_macs_full\t"
         "predicted_ratio\tcounted_ratio\tsec_cdnet\tsec_full\twall_ratio\n";
  char buf[64];
  for (const BenchRow& r : report.rows) {
    out << r.L << '\t' << r.k << '\t' << r.n_fields << '\t' << r.d << '\t' << r.tokens_cdnet << '\t'
        << r.tokens_full << '\t' << r.cdnet.total_macs << '\t' << r.full.total_macs << '\t'
        << r.cdnet.quadratic_macs << '\t' << r.full.quadratic_macs << '\t';
    std::snprintf(buf, sizeof(buf), "%.6f\t%.6f\t", r.predicted_ratio, r.counted_ratio);
    out << buf;
    std::snprintf(buf, sizeof(buf), "%.6g\t%.6g\t%.6f\n", r.cdnet.seconds, r.full.seconds, r.wall_ratio);
    out << buf;
  }
  return out.str();
}

}  // namespace cdnet
