#ifndef CDNET_CHECKPOINT_HPP_
#define CDNET_CHECKPOINT_HPP_

#include <cstdint>
#include <optional>
#include <string>

#include "cdnet/config.hpp"
#include "cdnet/data.hpp"
#include "cdnet/model.hpp"
#include "cdnet/optimizer.hpp"

namespace cdnet {

// Layout (little-endian):
//   "CDNT" | u32 version | config text | schema
//   u32 count, then per parameter: name | u32 rank | u64 dims[rank] | f32 values
//   u32 has_optimizer [ | u64 step | f32 m values | f32 v values, per parameter ]
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const CdnetModel<float>& model, const TrainConfig& cfg,
                     const Adam<float>* optimizer = nullptr);

struct LoadedCheckpoint {
  TrainConfig config;
  CdnetModel<float> model;
  std::optional<Adam<float>> optimizer;
};

// Rebuilds the model from the stored config and schema.
LoadedCheckpoint load_checkpoint(const std::string& path);

// Loads tensors into an existing model. A missing tensor or a shape
// mismatch throws naming the tensor.
void load_parameters(const std::string& path, CdnetModel<float>& model, Adam<float>* optimizer = nullptr);

}  // namespace cdnet

#endif  // CDNET_CHECKPOINT_HPP_
