#include "cdnet/model.hpp"

#include <cstdint>
#include <random>

#include "cdnet/ops.hpp"

namespace cdnet {
namespace {

bool uses_core(Variant v) { return v == Variant::kCdnet || v == Variant::kRGid; }
bool uses_gid(Variant v) { return v == Variant::kCdnet || v == Variant::kRCore; }

}  // namespace

std::size_t ModelConfig::token_count() const {
  const std::size_t nf = num_fields();
  switch (variant) {
    case Variant::kCdnet: return k + 1 + nf;
    case Variant::kRCore: return 1 + nf;
    case Variant::kRGid: return k + nf;
    case Variant::kMeanPool: return 1 + nf;
  }
  return k + 1 + nf;
}

ModelConfig make_model_config(const TrainConfig& cfg, const DatasetSchema& schema) {
  cfg.validate();
  ModelConfig m;
  m.d = cfg.d;
  m.k = cfg.k;
  m.n = cfg.n;
  m.blocks = cfg.H;
  m.heads = cfg.heads;
  m.ffn_expansion = cfg.ffn_expansion;
  m.head_hidden = cfg.head_hidden;
  m.count_buckets = cfg.count_buckets;
  m.variant = cfg.variant;
  m.schema = schema;
  m.seed = cfg.seed;
  m.max_len = cfg.L_max ? cfg.L_max : schema.max_len;
  if (m.max_len < 1) throw ConfigError("config key 'L_max' must be >= 1 (data does not fix it)");
  if (m.k > m.max_len) {
    throw ConfigError("config key 'k' (" + std::to_string(m.k) + ") exceeds L_max (" + std::to_string(m.max_len) + ")");
  }
  if (cfg.N_f && cfg.N_f != schema.num_fields()) {
    throw ConfigError("config key 'N_f' is " + std::to_string(cfg.N_f) + " but the data has " +
                      std::to_string(schema.num_fields()) + " contextual fields");
  }
  return m;
}

template <typename T>
CdnetModel<T>::CdnetModel(ModelConfig config) : config_(std::move(config)) {
  if (config_.heads < 1 || config_.d % config_.heads != 0) {
    throw ConfigError("config key 'heads' must divide d");
  }
  std::mt19937_64 rng(config_.seed);
  encoder_ = FeatureEncoder<T>(params_, config_.schema, config_.d, rng);
  if (uses_gid(config_.variant)) {
    interest_ = CountEmbedder<T>(params_, config_.n, config_.count_buckets, config_.d, rng);
  }
  const std::size_t tokens = config_.token_count();
  for (std::size_t h = 0; h < config_.blocks; ++h) {
    blocks_.emplace_back(params_, "block" + std::to_string(h), tokens, config_.d, config_.heads,
                         config_.ffn_expansion, rng);
  }
  head_ = PredictionHead<T>(params_, tokens * config_.d, config_.head_hidden, rng);
}

template <typename T>
ForwardPass<T> CdnetModel<T>::forward(Tape<T>& tape, const Sample& s) const {
  ForwardPass<T> fp;
  fp.context = encoder_.encode_context(tape, params_, s);
  fp.behaviors = encoder_.encode_behaviors(tape, params_, s, config_.max_len);
  const Variant v = config_.variant;

  if (v == Variant::kMeanPool) {
    const std::size_t len = config_.max_len;
    const std::size_t valid = std::min(len, s.valid_len());
    Tensor<T> w({1, len});
    for (std::size_t j = 0; j < valid; ++j) w[j] = T(1) / T(valid);
    fp.gid = ops::reshape(ops::matmul(tape.constant(std::move(w)), fp.behaviors->rows), {config_.d});
  } else {
    fp.target = encoder_.encode_target(tape, params_, s);
    fp.scores = score_sequence(fp.target, fp.behaviors->rows, fp.behaviors->mask);
    const Tensor<T>& a = fp.scores->a.value();
    if (uses_core(v)) {
      fp.selection = top_k_select<T>(a.values(), fp.behaviors->mask, config_.k);
      fp.core = ste_gather(fp.behaviors->rows, fp.scores->a, *fp.selection);
    }
    if (uses_gid(v)) {
      fp.counts = histogram<T>(a.values(), fp.behaviors->mask, config_.n);
      fp.gid = interest_.embed(tape, params_, fp.counts);
    }
  }

  fp.tokens = build_tokens(fp.core, fp.gid, fp.context);
  Var<T> x = fp.tokens.x;
  for (const auto& block : blocks_) x = block.forward(tape, params_, x, fp.tokens.mask);
  fp.prob = head_.forward(tape, params_, x);
  return fp;
}

template <typename T>
T CdnetModel<T>::predict(const Sample& s) const {
  Tape<T> tape(false);
  return forward(tape, s).prob.value()[0];
}

template <typename T>
std::vector<T> CdnetModel<T>::predict_all(std::span<const Sample> samples) const {
  std::vector<T> out(samples.size());
  const auto n = static_cast<std::int64_t>(samples.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = predict(samples[static_cast<std::size_t>(i)]);
  }
  return out;
}

template <typename T>
CdnetModel<T> build_variant(const TrainConfig& cfg, const DatasetSchema& schema) {
  return CdnetModel<T>(make_model_config(cfg, schema));
}

template class CdnetModel<float>;
template class CdnetModel<double>;
template CdnetModel<float> build_variant<float>(const TrainConfig&, const DatasetSchema&);
template CdnetModel<double> build_variant<double>(const TrainConfig&, const DatasetSchema&);

}  // namespace cdnet
