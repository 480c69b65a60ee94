#ifndef CDNET_TRAINER_HPP_
#define CDNET_TRAINER_HPP_

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cdnet/config.hpp"
#include "cdnet/data.hpp"
#include "cdnet/metrics.hpp"
#include "cdnet/model.hpp"
#include "cdnet/optimizer.hpp"

namespace cdnet {

// Mean-BCE gradient of a batch. Samples are split into fixed chunks of
// `chunk_size`; each chunk accumulates into its own buffer and the buffers
// are reduced in chunk order, so the result does not depend on how many
// threads ran the chunks. kSerial runs the same chunks on one thread.
template <typename T>
class BatchEngine {
 public:
  BatchEngine(const ParameterStore<T>& store, std::size_t chunk_size);

  // Returns the batch loss; gradients are left in grads().
  double compute(const CdnetModel<T>& model, std::span<const Sample> samples, std::span<const std::size_t> batch,
                 ExecMode mode = ExecMode::kParallel);

  const Gradients<T>& grads() const { return total_; }

 private:
  std::size_t chunk_size_;
  std::vector<Gradients<T>> chunks_;
  std::vector<double> chunk_loss_;
  Gradients<T> total_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;
  MetricSet metrics;
  double train_loss = 0.0;  // mean batch loss over the epoch
};

// One line-delimited JSON record.
std::string to_jsonl(const EpochRecord& r);

struct TrainOptions {
  ExecMode mode = ExecMode::kParallel;
  std::ostream* trace = nullptr;  // receives one JSON line per validation pass
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<double> batch_losses;
  std::vector<EpochRecord> trace;
  std::optional<std::size_t> best_epoch;  // empty without a validation set
  std::size_t epochs_run = 0;
  bool stopped_early = false;
};

// Trains in place. With a validation set the parameters of the epoch with
// the best validation AUC are restored before returning; training stops
// after `patience` epochs without improvement. Throws TrainingError on a
// non-finite batch loss.
TrainResult train(CdnetModel<float>& model, Adam<float>& optimizer, const TrainConfig& cfg,
                  std::span<const Sample> train_set, std::span<const Sample> valid_set,
                  const TrainOptions& options = {});

AdamOptions adam_options(const TrainConfig& cfg);

struct Evaluation {
  std::vector<EvalRecord> records;
  MetricSet metrics;
};

Evaluation evaluate(const CdnetModel<float>& model, std::span<const Sample> samples);

enum class SweepAxis { kKRatio, kN };

SweepAxis parse_sweep_axis(const std::string& name);

struct SweepRow {
  double value = 0.0;
  std::size_t k = 0;
  std::size_t n = 0;
  MetricSet test;
  bool ok = false;
  std::string error;
};

// One model per value, identical seed and data. A cell that fails records
// its error and the sweep continues.
std::vector<SweepRow> sweep(SweepAxis axis, std::span<const double> values, const TrainConfig& base,
                            const Dataset& data, const TrainOptions& options = {});

}  // namespace cdnet

#endif  // CDNET_TRAINER_HPP_
