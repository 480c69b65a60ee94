#ifndef CDNET_METRICS_HPP_
#define CDNET_METRICS_HPP_

#include <cstdint>
#include <span>
#include <vector>

namespace cdnet {

struct EvalRecord {
  std::int32_t user = 0;
  double score = 0.0;
  std::int32_t label = 0;
};

// Rank-sum AUC with tied scores sharing credit 0.5. Throws MetricError when
// either class is missing.
double auc(std::span<const EvalRecord> records);

// Per-user AUC averaged with impression-count weights over users that have
// both classes. Throws MetricError when no user qualifies.
double gauc(std::span<const EvalRecord> records);

// Mean binary cross-entropy, scores clamped to [1e-7, 1 - 1e-7].
double logloss(std::span<const EvalRecord> records);

struct MetricSet {
  double auc = 0.0;
  double gauc = 0.0;
  double logloss = 0.0;
};

// gauc is NaN when no user has both classes.
MetricSet evaluate_records(std::span<const EvalRecord> records);

}  // namespace cdnet

#endif  // CDNET_METRICS_HPP_
