#include "cdnet/trainer.hpp"

#include <cmath>
#include <cstdint>
#include <json.hpp>

#include "cdnet/ops.hpp"

namespace cdnet {
namespace {

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch);
}

double json_number(double v) { return std::isfinite(v) ? v : std::nan(""); }

}  // namespace

template <typename T>
BatchEngine<T>::BatchEngine(const ParameterStore<T>& store, std::size_t chunk_size)
    : chunk_size_(chunk_size), total_(store) {
  if (chunk_size < 1) throw ConfigError("config key 'chunk_size' must be >= 1");
}

template <typename T>
double BatchEngine<T>::compute(const CdnetModel<T>& model, std::span<const Sample> samples,
                               std::span<const std::size_t> batch, ExecMode mode) {
  if (batch.empty()) throw ContractError("empty batch");
  const std::size_t n_chunks = (batch.size() + chunk_size_ - 1) / chunk_size_;
  while (chunks_.size() < n_chunks) chunks_.emplace_back(model.params());
  chunk_loss_.assign(n_chunks, 0.0);
  const T inv_batch = T(1) / T(batch.size());

  auto run_chunk = [&](std::size_t c) {
    Gradients<T>& g = chunks_[c];
    g.zero();
    double loss = 0.0;
    const std::size_t end = std::min(batch.size(), (c + 1) * chunk_size_);
    for (std::size_t i = c * chunk_size_; i < end; ++i) {
      const Sample& s = samples[batch[i]];
      Tape<T> tape;
      ForwardPass<T> fp = model.forward(tape, s);
      const T label = T(s.label);
      Var<T> l = ops::scale(ops::bce_loss(fp.prob, std::span<const T>(&label, 1)), inv_batch);
      loss += static_cast<double>(l.value()[0]);
      tape.backward(l, g);
    }
    chunk_loss_[c] = loss;
  };

  if (mode == ExecMode::kParallel) {
    const auto nc = static_cast<std::int64_t>(n_chunks);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t c = 0; c < nc; ++c) run_chunk(static_cast<std::size_t>(c));
  } else {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
  }

  total_.zero();
  double loss = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    chunks_[c].add_to(total_);
    loss += chunk_loss_[c];
  }
  return loss;
}

template class BatchEngine<float>;
template class BatchEngine<double>;

std::string to_jsonl(const EpochRecord& r) {
  nlohmann::json j;
  j["epoch"] = r.epoch;
  j["split"] = r.split;
  j["auc"] = json_number(r.metrics.auc);
  j["gauc"] = json_number(r.metrics.gauc);
  j["logloss"] = json_number(r.metrics.logloss);
  j["train_loss"] = json_number(r.train_loss);
  return j.dump();
}

AdamOptions adam_options(const TrainConfig& cfg) {
  AdamOptions o;
  o.lr = cfg.lr;
  o.beta1 = cfg.beta1;
  o.beta2 = cfg.beta2;
  o.eps = cfg.adam_eps;
  o.weight_decay = cfg.weight_decay;
  return o;
}

TrainResult train(CdnetModel<float>& model, Adam<float>& optimizer, const TrainConfig& cfg,
                  std::span<const Sample> train_set, std::span<const Sample> valid_set,
                  const TrainOptions& options) {
  if (train_set.empty()) throw TrainingError("training set is empty");
  TrainResult result;
  BatchEngine<float> engine(model.params(), cfg.chunk_size);
  std::vector<Tensor<float>> best;
  double best_auc = -1.0;
  std::size_t since_best = 0;
  std::size_t global_batch = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches =
        make_batches(train_set, cfg.batch_size, epoch_seed(cfg.seed, epoch), PadMode::kMaxLen, model.config().max_len);
    double epoch_loss = 0.0;
    for (const Batch& b : batches) {
      const double loss = engine.compute(model, train_set, b.indices, options.mode);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss " + std::to_string(loss) + " at batch " + std::to_string(global_batch) +
                            " (epoch " + std::to_string(epoch) + ")");
      }
      result.batch_losses.push_back(loss);
      epoch_loss += loss;
      optimizer.step(model.params(), engine.grads());
      ++global_batch;
    }
    result.epochs_run = epoch;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(batches.size());
    if (valid_set.empty()) {
      rec.split = "train";
      rec.metrics = {std::nan(""), std::nan(""), std::nan("")};
    } else {
      rec.split = "valid";
      rec.metrics = evaluate(model, valid_set).metrics;
    }
    result.trace.push_back(rec);
    if (options.trace) *options.trace << to_jsonl(rec) << '\n';
    if (options.on_epoch) options.on_epoch(rec);

    if (valid_set.empty()) continue;
    if (rec.metrics.auc > best_auc) {
      best_auc = rec.metrics.auc;
      result.best_epoch = epoch;
      best.clear();
      for (const auto& p : model.params()) best.push_back(p.value);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = epoch < cfg.epochs;
      break;
    }
  }

  if (!best.empty()) {
    std::size_t id = 0;
    for (auto& p : model.params()) p.value = best[id++];
  }
  return result;
}

Evaluation evaluate(const CdnetModel<float>& model, std::span<const Sample> samples) {
  Evaluation ev;
  const std::vector<float> probs = model.predict_all(samples);
  ev.records.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ev.records.push_back({samples[i].user, static_cast<double>(probs[i]), samples[i].label});
  }
  ev.metrics = evaluate_records(ev.records);
  return ev;
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "k_ratio" || name == "k") return SweepAxis::kKRatio;
  if (name == "n") return SweepAxis::kN;
  throw ConfigError("unknown sweep axis '" + name + "' (expected k_ratio or n)");
}

std::vector<SweepRow> sweep(SweepAxis axis, std::span<const double> values, const TrainConfig& base,
                            const Dataset& data, const TrainOptions& options) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  const std::size_t max_len = base.L_max ? base.L_max : data.schema.max_len;
  std::vector<SweepRow> rows;
  for (double value : values) {
    SweepRow row;
    row.value = value;
    TrainConfig cfg = base;
    try {
      if (axis == SweepAxis::kKRatio) {
        if (!(value > 0.0 && value <= 1.0)) throw ConfigError("k ratio must be in (0, 1]");
        cfg.k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(value * static_cast<double>(max_len))));
      } else {
        if (!(value >= 1.0) || value != std::floor(value)) throw ConfigError("n must be a positive integer");
        cfg.n = static_cast<std::size_t>(value);
      }
      row.k = cfg.k;
      row.n = cfg.n;
      CdnetModel<float> model = build_variant<float>(cfg, data.schema);
      Adam<float> opt(model.params(), adam_options(cfg));
      train(model, opt, cfg, data.train, data.valid, options);
      row.test = evaluate(model, data.test.empty() ? std::span<const Sample>(data.valid) : data.test).metrics;
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace cdnet
