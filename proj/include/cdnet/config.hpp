#ifndef CDNET_CONFIG_HPP_
#define CDNET_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace cdnet {

// Serial reference or OpenMP execution of the data-parallel loops.
enum class ExecMode { kSerial, kParallel };

enum class Variant { kCdnet, kRCore, kRGid, kMeanPool };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

struct TrainConfig {
  // Model shape.
  std::size_t d = 32;
  std::size_t k = 16;
  std::size_t n = 5;
  std::size_t H = 2;
  std::size_t heads = 2;
  std::size_t L_max = 0;  // 0 = take the sequence length from the data
  std::size_t N_f = 0;    // 0 = take the field count from the data
  std::size_t ffn_expansion = 2;
  std::vector<std::size_t> head_hidden{128, 64};
  std::size_t count_buckets = 17;
  Variant variant = Variant::kCdnet;

  // Optimization.
  double lr = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 5;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  std::size_t patience = 2;
  std::size_t chunk_size = 32;  // samples per gradient-accumulation chunk

  void validate() const;
};

// Sets one field from its textual value; unknown keys and unparsable values
// throw ConfigError naming the key.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

// Flat `key = value` text; '#' starts a comment.
TrainConfig parse_config_text(const std::string& text, TrainConfig base = {});
TrainConfig load_config_file(const std::string& path, TrainConfig base = {});
std::string config_to_text(const TrainConfig& cfg);

}  // namespace cdnet

#endif  // CDNET_CONFIG_HPP_
