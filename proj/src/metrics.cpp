#include "cdnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "cdnet/errors.hpp"
#include "cdnet/ops.hpp"

namespace cdnet {

double auc(std::span<const EvalRecord> records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return records[a].score < records[b].score; });

  double pos = 0, neg = 0, rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && records[order[j]].score == records[order[i]].score) ++j;
    // Ranks i+1..j share their mean.
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (records[order[t]].label != 0) {
        pos += 1;
        rank_sum += mid;
      } else {
        neg += 1;
      }
    }
    i = j;
  }
  if (pos == 0 || neg == 0) {
    throw MetricError("AUC is undefined with " + std::to_string(static_cast<long long>(pos)) +
                      " positives and " + std::to_string(static_cast<long long>(neg)) + " negatives");
  }
  return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

double gauc(std::span<const EvalRecord> records) {
  std::map<std::int32_t, std::vector<EvalRecord>> by_user;
  for (const EvalRecord& r : records) by_user[r.user].push_back(r);
  double num = 0, weight = 0;
  for (const auto& [user, group] : by_user) {
    const bool has_pos = std::any_of(group.begin(), group.end(), [](const EvalRecord& r) { return r.label != 0; });
    const bool has_neg = std::any_of(group.begin(), group.end(), [](const EvalRecord& r) { return r.label == 0; });
    if (!has_pos || !has_neg) continue;
    const double w = static_cast<double>(group.size());
    num += w * auc(group);
    weight += w;
  }
  if (weight == 0) throw MetricError("GAUC is undefined: no user has both positive and negative records");
  return num / weight;
}

double logloss(std::span<const EvalRecord> records) {
  if (records.empty()) throw MetricError("LogLoss of an empty record set");
  const double lo = ops::kProbClamp, hi = 1.0 - ops::kProbClamp;
  double total = 0;
  for (const EvalRecord& r : records) {
    const double p = std::clamp(r.score, lo, hi);
    total -= r.label != 0 ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(records.size());
}

MetricSet evaluate_records(std::span<const EvalRecord> records) {
  MetricSet m;
  m.auc = auc(records);
  try {
    m.gauc = gauc(records);
  } catch (const MetricError&) {
    m.gauc = std::numeric_limits<double>::quiet_NaN();
  }
  m.logloss = logloss(records);
  return m;
}

}  // namespace cdnet
