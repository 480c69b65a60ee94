#include "cdnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "cdnet/errors.hpp"

namespace cdnet {

void SynthConfig::validate() const {
  if (n_users < 1) throw ConfigError("synth: n_users must be >= 1");
  if (n_categories < 2) throw ConfigError("synth: n_categories must be >= 2");
  if (n_items < n_categories) throw ConfigError("synth: n_items must be >= n_categories");
  if (seq_len < 1) throw ConfigError("synth: seq_len must be >= 1");
  if (min_len > seq_len) throw ConfigError("synth: min_len exceeds seq_len");
  if (max_relevant > (min_len ? min_len : seq_len)) throw ConfigError("synth: max_relevant exceeds sequence length");
  if (!std::isfinite(core_weight) || !std::isfinite(distribution_weight) || !(noise_std >= 0)) {
    throw ConfigError("synth: weights must be finite and noise_std >= 0");
  }
}

void apply_synth_setting(SynthConfig& c, const std::string& key, const std::string& raw) {
  const auto b = raw.find_first_not_of(" \t\r");
  const auto e = raw.find_last_not_of(" \t\r");
  const std::string v = b == std::string::npos ? std::string() : raw.substr(b, e - b + 1);
  auto size = [&]() -> std::size_t {
    try {
      std::size_t used = 0;
      const unsigned long long out = std::stoull(v, &used);
      if (used != v.size() || v.front() == '-') throw std::invalid_argument(v);
      return static_cast<std::size_t>(out);
    } catch (const std::exception&) {
      throw ConfigError("synth key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
  };
  auto real = [&]() -> double {
    try {
      std::size_t used = 0;
      const double out = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError("synth key '" + key + "': expected a number, got '" + v + "'");
    }
  };
  if (key == "n_users") c.n_users = size();
  else if (key == "n_items") c.n_items = size();
  else if (key == "n_categories") c.n_categories = size();
  else if (key == "seq_len") c.seq_len = size();
  else if (key == "min_len") c.min_len = size();
  else if (key == "max_relevant") c.max_relevant = size();
  else if (key == "k_true") c.k_true = size();
  else if (key == "core_weight") c.core_weight = real();
  else if (key == "distribution_weight") c.distribution_weight = real();
  else if (key == "noise_std") c.noise_std = real();
  else if (key == "n_train") c.n_train = size();
  else if (key == "n_valid") c.n_valid = size();
  else if (key == "n_test") c.n_test = size();
  else throw ConfigError("unknown synth key '" + key + "'");
}

SynthConfig parse_synth_text(const std::string& text, SynthConfig base) {
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("synth config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = line.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    apply_synth_setting(base, key, line.substr(eq + 1));
  }
  return base;
}

DatasetSchema synth_schema(const SynthConfig& config) {
  DatasetSchema s;
  s.item_vocab = config.n_items + 2;
  s.category_vocab = config.n_categories + 2;
  s.max_len = config.seq_len;
  s.fields = {{"user_id", FieldKind::kOwn, config.n_users + 2},
              {"target_item_id", FieldKind::kItem, 0},
              {"target_category_id", FieldKind::kCategory, 0}};
  return s;
}

namespace {

struct World {
  std::vector<std::int32_t> category;  // by item id
  std::vector<int> affinity;           // by item id
  std::vector<std::vector<std::int32_t>> items_of;  // by category id
};

World make_world(const SynthConfig& c, std::mt19937_64& rng) {
  World w;
  const std::size_t vocab = c.n_items + 2;
  w.category.assign(vocab, kPaddingId);
  w.affinity.assign(vocab, 0);
  w.items_of.resize(c.n_categories + 2);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 2; i < vocab; ++i) {
    const auto cat = static_cast<std::int32_t>(2 + (i - 2) % c.n_categories);
    w.category[i] = cat;
    w.affinity[i] = coin(rng) ? 1 : -1;
    w.items_of[static_cast<std::size_t>(cat)].push_back(static_cast<std::int32_t>(i));
  }
  return w;
}

void draw(const SynthConfig& c, const World& w, std::size_t count, std::mt19937_64& rng, SynthResult& out) {
  std::uniform_int_distribution<std::int32_t> user_pick(2, static_cast<std::int32_t>(c.n_users + 1));
  std::uniform_int_distribution<std::int32_t> item_pick(2, static_cast<std::int32_t>(c.n_items + 1));
  std::uniform_int_distribution<std::size_t> len_pick(c.min_len ? c.min_len : c.seq_len, c.seq_len);
  std::uniform_int_distribution<std::size_t> rel_pick(0, c.max_relevant);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const double p_dist = static_cast<double>(c.max_relevant + 1 - std::min(c.k_true, c.max_relevant + 1)) /
                        static_cast<double>(c.max_relevant + 1);
  const double bias = -c.distribution_weight * p_dist;

  for (std::size_t n = 0; n < count; ++n) {
    Sample s;
    s.user = user_pick(rng);
    const std::int32_t target = item_pick(rng);
    const std::int32_t cat = w.category[static_cast<std::size_t>(target)];
    const auto& same = w.items_of[static_cast<std::size_t>(cat)];

    const std::size_t len = len_pick(rng);
    const std::size_t r = rel_pick(rng);
    std::vector<std::size_t> positions(len);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    std::shuffle(positions.begin(), positions.end(), rng);
    positions.resize(r);
    std::sort(positions.begin(), positions.end());

    s.items.resize(len);
    s.categories.resize(len);
    int signed_count = 0;
    std::size_t next = 0;
    for (std::size_t j = 0; j < len; ++j) {
      std::int32_t item = 0;
      if (next < positions.size() && positions[next] == j) {
        ++next;
        std::uniform_int_distribution<std::size_t> pick(0, same.size() - 1);
        item = same[pick(rng)];
        signed_count += w.affinity[static_cast<std::size_t>(item)];
      } else {
        do {
          item = item_pick(rng);
        } while (w.category[static_cast<std::size_t>(item)] == cat);
      }
      s.items[j] = item;
      s.categories[j] = w.category[static_cast<std::size_t>(item)];
    }
    s.context = {s.user, target, cat};

    double logit = c.core_weight * signed_count + c.distribution_weight * (r >= c.k_true ? 1.0 : 0.0) + bias;
    if (c.noise_std > 0) logit += c.noise_std * noise(rng);
    const double p = 1.0 / (1.0 + std::exp(-logit));
    s.label = unif(rng) < p ? 1 : 0;

    out.samples.push_back(std::move(s));
    out.relevant_positions.push_back(std::move(positions));
    out.logits.push_back(logit);
  }
}

}  // namespace

SynthResult synth_generate(const SynthConfig& config, std::size_t count, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const World w = make_world(config, rng);
  SynthResult out;
  draw(config, w, count, rng, out);
  return out;
}

Dataset synth_dataset(const SynthConfig& config, std::uint64_t seed) {
  SynthResult all = synth_generate(config, config.n_train + config.n_valid + config.n_test, seed);
  Dataset data;
  data.schema = synth_schema(config);
  auto it = std::make_move_iterator(all.samples.begin());
  const auto a = static_cast<std::ptrdiff_t>(config.n_train);
  const auto b = static_cast<std::ptrdiff_t>(config.n_valid);
  data.train.assign(it, it + a);
  data.valid.assign(it + a, it + a + b);
  data.test.assign(it + a + b, std::make_move_iterator(all.samples.end()));
  return data;
}

std::vector<InteractionRecord> synth_log(const SynthLogConfig& c, std::uint64_t seed) {
  if (c.n_users < 1 || c.n_categories < 1 || c.n_items < c.n_categories || c.preferred_categories < 1) {
    throw ConfigError("synth log: need users >= 1 and items >= categories >= 1");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> cat_pick(0, c.n_categories - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto item_in = [&](std::size_t cat) {
    // Items are dealt to categories round-robin.
    const std::size_t per = (c.n_items - cat + c.n_categories - 1) / c.n_categories;
    std::uniform_int_distribution<std::size_t> pick(0, per - 1);
    return cat + pick(rng) * c.n_categories;
  };

  std::vector<std::vector<std::size_t>> prefs(c.n_users);
  for (auto& p : prefs) {
    for (std::size_t i = 0; i < c.preferred_categories; ++i) p.push_back(cat_pick(rng));
  }
  std::vector<std::int64_t> clock(c.n_users);
  const std::int64_t start = 1511539200;  // 2017-11-25 00:00:00 UTC
  for (auto& t : clock) t = start + static_cast<std::int64_t>(unif(rng) * 86400.0);

  std::vector<InteractionRecord> out;
  out.reserve(c.n_interactions);
  std::uniform_int_distribution<std::size_t> user_pick(0, c.n_users - 1);
  for (std::size_t n = 0; n < c.n_interactions; ++n) {
    const std::size_t u = user_pick(rng);
    std::size_t cat = cat_pick(rng);
    if (unif(rng) < c.preferred_share) {
      std::uniform_int_distribution<std::size_t> which(0, prefs[u].size() - 1);
      cat = prefs[u][which(rng)];
    }
    const std::size_t item = item_in(cat);
    clock[u] += 30 + static_cast<std::int64_t>(unif(rng) * 3600.0);
    InteractionRecord r;
    r.user_id = std::to_string(100000 + u);
    r.item_id = std::to_string(2000000 + item);
    r.category_id = std::to_string(4000000 + cat);
    const double b = unif(rng);
    r.behavior = b < 0.9 ? BehaviorType::kPv : b < 0.94 ? BehaviorType::kCart : b < 0.97 ? BehaviorType::kFav
                                                                                        : BehaviorType::kBuy;
    r.timestamp = clock[u];
    out.push_back(std::move(r));
  }
  return out;
}

void write_log_csv(std::ostream& out, std::span<const InteractionRecord> records) {
  static constexpr const char* kNames[] = {"pv", "buy", "cart", "fav"};
  for (const InteractionRecord& r : records) {
    out << r.user_id << ',' << r.item_id << ',' << r.category_id << ',' << kNames[static_cast<int>(r.behavior)] << ','
        << r.timestamp << '\n';
  }
}

}  // namespace cdnet
