#ifndef CDNET_MODEL_HPP_
#define CDNET_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cdnet/config.hpp"
#include "cdnet/core_behaviors.hpp"
#include "cdnet/data.hpp"
#include "cdnet/embeddings.hpp"
#include "cdnet/interaction.hpp"
#include "cdnet/interest.hpp"

namespace cdnet {

struct ModelConfig {
  std::size_t d = 32;
  std::size_t k = 16;
  std::size_t n = 5;
  std::size_t blocks = 2;
  std::size_t heads = 2;
  std::size_t ffn_expansion = 2;
  std::vector<std::size_t> head_hidden{128, 64};
  std::size_t count_buckets = kDefaultCountBuckets;
  std::size_t max_len = 50;
  Variant variant = Variant::kCdnet;
  DatasetSchema schema;
  std::uint64_t seed = 1;

  std::size_t num_fields() const { return schema.num_fields(); }
  // k+1+N_f for cdnet, 1+N_f for rcore and meanpool, k+N_f for rgid.
  std::size_t token_count() const;
};

ModelConfig make_model_config(const TrainConfig& cfg, const DatasetSchema& schema);

// Intermediate values of one forward pass, exposed for tests and tooling.
template <typename T>
struct ForwardPass {
  Var<T> prob;  // [1]
  Var<T> target;
  std::optional<BehaviorEncoding<T>> behaviors;
  std::optional<ScoreVector<T>> scores;
  std::optional<CoreSelection> selection;
  std::optional<CoreBehaviors<T>> core;
  std::vector<std::size_t> counts;
  std::optional<Var<T>> gid;
  Var<T> context;
  TokenMatrix<T> tokens;
};

template <typename T>
class CdnetModel {
 public:
  explicit CdnetModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }
  const FeatureEncoder<T>& encoder() const { return encoder_; }
  const CountEmbedder<T>& interest() const { return interest_; }
  const std::vector<InteractionBlock<T>>& blocks() const { return blocks_; }
  const PredictionHead<T>& head() const { return head_; }

  ForwardPass<T> forward(Tape<T>& tape, const Sample& s) const;

  // Click probability without recording gradients.
  T predict(const Sample& s) const;
  // One prediction per sample; evaluated in parallel, results in input order.
  std::vector<T> predict_all(std::span<const Sample> samples) const;

 private:
  ModelConfig config_;
  ParameterStore<T> params_;
  FeatureEncoder<T> encoder_;
  CountEmbedder<T> interest_;
  std::vector<InteractionBlock<T>> blocks_;
  PredictionHead<T> head_;
};

// Builds the model for cfg.variant over the given schema.
template <typename T>
CdnetModel<T> build_variant(const TrainConfig& cfg, const DatasetSchema& schema);

}  // namespace cdnet

#endif  // CDNET_MODEL_HPP_
