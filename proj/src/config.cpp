#include "cdnet/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "cdnet/errors.hpp"

namespace cdnet {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_size(key, item));
  }
  return out;
}

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "cdnet") return Variant::kCdnet;
  if (name == "rcore") return Variant::kRCore;
  if (name == "rgid") return Variant::kRGid;
  if (name == "meanpool") return Variant::kMeanPool;
  throw ConfigError("unknown variant '" + name + "' (expected cdnet, rcore, rgid or meanpool)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kCdnet: return "cdnet";
    case Variant::kRCore: return "rcore";
    case Variant::kRGid: return "rgid";
    case Variant::kMeanPool: return "meanpool";
  }
  return "cdnet";
}

void TrainConfig::validate() const {
  if (d < 1) throw ConfigError("config key 'd' must be >= 1");
  if (k < 1) throw ConfigError("config key 'k' must be >= 1");
  if (L_max && k > L_max) throw ConfigError("config key 'k' exceeds L_max");
  if (n < 1) throw ConfigError("config key 'n' must be >= 1");
  if (H < 1) throw ConfigError("config key 'H' must be >= 1");
  if (heads < 1 || d % heads != 0) throw ConfigError("config key 'heads' must divide d");
  if (batch_size < 1) throw ConfigError("config key 'batch_size' must be >= 1");
  if (chunk_size < 1) throw ConfigError("config key 'chunk_size' must be >= 1");
  if (count_buckets < 1) throw ConfigError("config key 'count_buckets' must be >= 1");
  if (!(lr >= 0)) throw ConfigError("config key 'lr' must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("config key 'beta1' must be in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("config key 'beta2' must be in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("config key 'adam_eps' must be positive");
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "d") cfg.d = to_size(key, v);
  else if (key == "k") cfg.k = to_size(key, v);
  else if (key == "n") cfg.n = to_size(key, v);
  else if (key == "H") cfg.H = to_size(key, v);
  else if (key == "heads") cfg.heads = to_size(key, v);
  else if (key == "L_max" || key == "L") cfg.L_max = to_size(key, v);
  else if (key == "N_f") cfg.N_f = to_size(key, v);
  else if (key == "ffn_expansion") cfg.ffn_expansion = to_size(key, v);
  else if (key == "head_hidden") cfg.head_hidden = to_list(key, v);
  else if (key == "count_buckets") cfg.count_buckets = to_size(key, v);
  else if (key == "variant") cfg.variant = parse_variant(v);
  else if (key == "lr") cfg.lr = to_real(key, v);
  else if (key == "batch_size" || key == "B") cfg.batch_size = to_size(key, v);
  else if (key == "epochs") cfg.epochs = to_size(key, v);
  else if (key == "seed") cfg.seed = to_size(key, v);
  else if (key == "beta1") cfg.beta1 = to_real(key, v);
  else if (key == "beta2") cfg.beta2 = to_real(key, v);
  else if (key == "adam_eps") cfg.adam_eps = to_real(key, v);
  else if (key == "weight_decay") cfg.weight_decay = to_real(key, v);
  else if (key == "patience") cfg.patience = to_size(key, v);
  else if (key == "chunk_size") cfg.chunk_size = to_size(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig parse_config_text(const std::string& text, TrainConfig base) {
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    apply_setting(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

TrainConfig load_config_file(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

std::string config_to_text(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  std::string hidden;
  for (std::size_t i = 0; i < c.head_hidden.size(); ++i) hidden += (i ? "," : "") + std::to_string(c.head_hidden[i]);
  out << "d = " << c.d << "\nk = " << c.k << "\nn = " << c.n << "\nH = " << c.H << "\nheads = " << c.heads
      << "\nL_max = " << c.L_max << "\nN_f = " << c.N_f << "\nffn_expansion = " << c.ffn_expansion
      << "\nhead_hidden = " << hidden << "\ncount_buckets = " << c.count_buckets
      << "\nvariant = " << variant_name(c.variant) << "\nlr = " << c.lr << "\nbatch_size = " << c.batch_size
      << "\nepochs = " << c.epochs << "\nseed = " << c.seed << "\nbeta1 = " << c.beta1 << "\nbeta2 = " << c.beta2
      << "\nadam_eps = " << c.adam_eps << "\nweight_decay = " << c.weight_decay << "\npatience = " << c.patience
      << "\nchunk_size = " << c.chunk_size << "\n";
  return out.str();
}

}  // namespace cdnet
