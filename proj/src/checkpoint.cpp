#include "cdnet/checkpoint.hpp"

#include <fstream>

#include "cdnet/binary_io.hpp"
#include "cdnet/errors.hpp"
#include "cdnet/trainer.hpp"

namespace cdnet {
namespace {

struct Header {
  TrainConfig config;
  DatasetSchema schema;
};

Header read_header(std::istream& in, const std::string& path) {
  binio::check_magic(in, "CDNT", path);
  const std::uint32_t version = binio::get_u32(in, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint " + path + " has version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Header h;
  h.config = parse_config_text(binio::get_string(in, "config"));
  h.schema = read_schema(in);
  return h;
}

void read_values(std::istream& in, Tensor<float>& t, const char* what) {
  for (float& v : t.values()) v = binio::get_f32(in, what);
}

void read_body(std::istream& in, CdnetModel<float>& model, Adam<float>* optimizer) {
  ParameterStore<float>& store = model.params();
  const std::uint32_t count = binio::get_u32(in, "parameter count");
  if (count != store.size()) {
    throw DimensionError("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                         std::to_string(store.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = binio::get_string(in, "parameter name");
    const auto id = store.find(name);
    if (!id) throw DimensionError("checkpoint tensor '" + name + "' does not exist in the model");
    const std::uint32_t rank = binio::get_u32(in, "tensor rank");
    if (rank > 8) throw FormatError("tensor '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = binio::get_u64(in, "tensor dims");
    Tensor<float>& value = store[*id].value;
    if (shape != value.shape()) {
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) + " but the model expects " +
                           shape_str(value.shape()));
    }
    read_values(in, value, "tensor values");
  }
  const std::uint32_t has_opt = binio::get_u32(in, "optimizer flag");
  if (has_opt == 0 || optimizer == nullptr) return;
  *optimizer = Adam<float>(store, optimizer->options());
  optimizer->set_steps(binio::get_u64(in, "optimizer step"));
  for (std::size_t id = 0; id < store.size(); ++id) {
    read_values(in, optimizer->first_moments()[id], "optimizer moments");
    read_values(in, optimizer->second_moments()[id], "optimizer moments");
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const CdnetModel<float>& model, const TrainConfig& cfg,
                     const Adam<float>* optimizer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write("CDNT", 4);
  binio::put_u32(out, kCheckpointVersion);
  binio::put_string(out, config_to_text(cfg));
  write_schema(out, model.config().schema);
  const ParameterStore<float>& store = model.params();
  binio::put_u32(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& p : store) {
    binio::put_string(out, p.name);
    binio::put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) binio::put_u64(out, d);
    for (float v : p.value.values()) binio::put_f32(out, v);
  }
  binio::put_u32(out, optimizer ? 1u : 0u);
  if (optimizer) {
    binio::put_u64(out, optimizer->steps());
    for (std::size_t id = 0; id < store.size(); ++id) {
      for (float v : optimizer->first_moments()[id].values()) binio::put_f32(out, v);
      for (float v : optimizer->second_moments()[id].values()) binio::put_f32(out, v);
    }
  }
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  Header h = read_header(in, path);
  LoadedCheckpoint out{h.config, build_variant<float>(h.config, h.schema), std::nullopt};
  Adam<float> opt(out.model.params(), adam_options(h.config));
  read_body(in, out.model, &opt);
  if (opt.steps() > 0) out.optimizer = std::move(opt);
  return out;
}

void load_parameters(const std::string& path, CdnetModel<float>& model, Adam<float>* optimizer) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  read_header(in, path);
  read_body(in, model, optimizer);
}

}  // namespace cdnet
