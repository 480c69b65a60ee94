#include "cdnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string_view>
#include <unordered_set>

#include "cdnet/binary_io.hpp"
#include "cdnet/errors.hpp"

namespace cdnet {
namespace {

bool parse_behavior(std::string_view s, BehaviorType& out) {
  if (s == "pv") {
    out = BehaviorType::kPv;
  } else if (s == "buy") {
    out = BehaviorType::kBuy;
  } else if (s == "cart") {
    out = BehaviorType::kCart;
  } else if (s == "fav") {
    out = BehaviorType::kFav;
  } else {
    return false;
  }
  return true;
}

bool parse_line(std::string_view line, InteractionRecord& rec) {
  std::string_view fields[5];
  std::size_t n = 0, start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      if (n == 5) return false;
      fields[n++] = line.substr(start, i - start);
      start = i + 1;
    }
  }
  if (n != 5) return false;
  for (const auto& f : fields) {
    if (f.empty()) return false;
  }
  if (!parse_behavior(fields[3], rec.behavior)) return false;
  std::int64_t ts = 0;
  const auto* end = fields[4].data() + fields[4].size();
  auto [ptr, ec] = std::from_chars(fields[4].data(), end, ts);
  if (ec != std::errc() || ptr != end || ts < 0) return false;
  rec.user_id.assign(fields[0]);
  rec.item_id.assign(fields[1]);
  rec.category_id.assign(fields[2]);
  rec.timestamp = ts;
  return true;
}

constexpr std::int32_t kHourOffset = 2;

}  // namespace

ParseResult parse_log(std::istream& in, const ParseLimits& limits) {
  ParseResult result;
  std::string line;
  InteractionRecord rec;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++result.lines;
    if (parse_line(line, rec)) {
      result.records.push_back(rec);
      if (limits.max_records && result.records.size() >= limits.max_records) break;
    } else {
      ++result.malformed;
    }
  }
  if (result.lines > 0 &&
      static_cast<double>(result.malformed) > limits.max_malformed_fraction * static_cast<double>(result.lines)) {
    throw DataQualityError(std::to_string(result.malformed) + " of " + std::to_string(result.lines) +
                           " lines are malformed");
  }
  return result;
}

ParseResult parse_log(const std::string& path, const ParseLimits& limits) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open behavior log '" + path + "'");
  return parse_log(in, limits);
}

Vocabulary::Vocabulary() : by_index_{"<pad>", "<oov>"} {}

std::int32_t Vocabulary::add(const std::string& raw) {
  auto [it, inserted] = by_raw_.emplace(raw, static_cast<std::int32_t>(by_index_.size()));
  if (inserted) by_index_.push_back(raw);
  return it->second;
}

std::int32_t Vocabulary::encode(const std::string& raw) const {
  auto it = by_raw_.find(raw);
  return it == by_raw_.end() ? kOovId : it->second;
}

const std::string& Vocabulary::decode(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= by_index_.size()) {
    throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
  }
  return by_index_[static_cast<std::size_t>(id)];
}

std::size_t DatasetSchema::target_item_field() const {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].kind == FieldKind::kItem) return i;
  }
  throw ConfigError("schema has no target item field");
}

std::size_t DatasetSchema::target_category_field() const {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].kind == FieldKind::kCategory) return i;
  }
  throw ConfigError("schema has no target category field");
}

std::vector<std::int32_t> padded(std::span<const std::int32_t> ids, std::size_t len) {
  std::vector<std::int32_t> out(len, kPaddingId);
  const std::size_t keep = std::min(len, ids.size());
  std::copy(ids.end() - static_cast<std::ptrdiff_t>(keep), ids.end(), out.begin());
  return out;
}

Mask sequence_mask(const Sample& s, std::size_t len) {
  Mask m(len, 0);
  std::fill_n(m.begin(), std::min(len, s.valid_len()), std::uint8_t{1});
  return m;
}

SampleBuild build_samples(std::span<const InteractionRecord> records, const SampleOptions& options) {
  if (options.max_len < 1) throw ConfigError("max_len must be >= 1");
  if (options.neg_ratio < 1) throw ConfigError("neg_ratio must be >= 1");

  SampleBuild out;
  struct Event {
    std::int64_t ts;
    std::size_t pos;
    std::int32_t item;
    std::int32_t category;
  };
  std::vector<std::vector<Event>> by_user;
  std::vector<std::int32_t> item_category{kPaddingId, kOovId};
  for (std::size_t pos = 0; pos < records.size(); ++pos) {
    const InteractionRecord& r = records[pos];
    if (r.behavior != BehaviorType::kPv) continue;
    const std::int32_t u = out.users.add(r.user_id);
    const std::int32_t it = out.items.add(r.item_id);
    const std::int32_t c = out.categories.add(r.category_id);
    if (static_cast<std::size_t>(it) == item_category.size()) item_category.push_back(c);
    if (static_cast<std::size_t>(u) >= by_user.size()) by_user.resize(static_cast<std::size_t>(u) + 1);
    by_user[static_cast<std::size_t>(u)].push_back({r.timestamp, pos, it, c});
  }

  const auto n_items = static_cast<std::int32_t>(out.items.size());
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::int32_t> pick(2, std::max(2, n_items - 1));

  for (std::size_t u = 2; u < by_user.size(); ++u) {
    auto& events = by_user[u];
    if (events.size() <= options.warmup) continue;
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
      return a.ts != b.ts ? a.ts < b.ts : a.pos < b.pos;
    });
    std::unordered_set<std::int32_t> history;
    for (const Event& e : events) history.insert(e.item);
    const bool can_sample = static_cast<std::size_t>(n_items - 2) > history.size();

    for (std::size_t p = options.warmup; p < events.size(); ++p) {
      const std::size_t begin = p > options.max_len ? p - options.max_len : 0;
      Sample pos;
      pos.user = static_cast<std::int32_t>(u);
      for (std::size_t j = begin; j < p; ++j) {
        pos.items.push_back(events[j].item);
        pos.categories.push_back(events[j].category);
      }
      const std::int64_t ts = events[p].ts;
      const auto hour = static_cast<std::int32_t>((ts / 3600) % 24);
      // 1970-01-01 was a Thursday; 0 = Monday.
      const auto dow = static_cast<std::int32_t>((ts / 86400 + 3) % 7);
      pos.context = {static_cast<std::int32_t>(u), events[p].item, events[p].category, kHourOffset + hour,
                     kHourOffset + dow};
      pos.label = 1;
      out.samples.push_back(pos);
      ++out.positives;

      if (!can_sample) {
        throw DataQualityError("user '" + out.users.decode(static_cast<std::int32_t>(u)) +
                               "' has clicked every item; no negative can be drawn");
      }
      for (std::size_t r = 0; r < options.neg_ratio; ++r) {
        std::int32_t item = pick(rng);
        while (history.count(item)) item = pick(rng);
        Sample neg = pos;
        neg.context[1] = item;
        neg.context[2] = item_category[static_cast<std::size_t>(item)];
        neg.label = 0;
        out.samples.push_back(std::move(neg));
        ++out.negatives;
      }
    }
  }

  out.schema.item_vocab = out.items.size();
  out.schema.category_vocab = out.categories.size();
  out.schema.max_len = options.max_len;
  out.schema.fields = {{"user_id", FieldKind::kOwn, out.users.size()},
                       {"target_item_id", FieldKind::kItem, 0},
                       {"target_category_id", FieldKind::kCategory, 0},
                       {"hour_of_day", FieldKind::kOwn, 24 + kHourOffset},
                       {"day_of_week", FieldKind::kOwn, 7 + kHourOffset}};
  return out;
}

Dataset temporal_split(std::vector<Sample> samples, DatasetSchema schema) {
  Dataset data;
  data.schema = std::move(schema);
  std::size_t i = 0;
  while (i < samples.size()) {
    std::size_t j = i;
    while (j < samples.size() && samples[j].user == samples[i].user) ++j;
    // Group starts: a positive opens an impression group.
    std::vector<std::size_t> starts;
    for (std::size_t s = i; s < j; ++s) {
      if (s == i || samples[s].label == 1) starts.push_back(s);
    }
    const std::size_t groups = starts.size();
    const auto tenth = static_cast<std::size_t>(std::floor(static_cast<double>(groups) / 10.0 + 0.5));
    const std::size_t test_begin = groups - tenth;
    const std::size_t valid_begin = test_begin - std::min(tenth, test_begin);
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t end = g + 1 < groups ? starts[g + 1] : j;
      auto& dst = g >= test_begin ? data.test : g >= valid_begin ? data.valid : data.train;
      for (std::size_t s = starts[g]; s < end; ++s) dst.push_back(std::move(samples[s]));
    }
    i = j;
  }
  return data;
}

std::vector<Batch> make_batches(std::span<const Sample> samples, std::size_t batch_size, std::uint64_t seed,
                                PadMode mode, std::size_t max_len) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    Batch b;
    b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
    if (mode == PadMode::kMaxLen) {
      b.padded_len = max_len;
    } else {
      for (std::size_t idx : b.indices) b.padded_len = std::max(b.padded_len, samples[idx].valid_len());
      if (max_len) b.padded_len = std::min(b.padded_len, max_len);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

void write_schema(std::ostream& out, const DatasetSchema& s) {
  binio::put_u32(out, static_cast<std::uint32_t>(s.max_len));
  binio::put_u64(out, s.item_vocab);
  binio::put_u64(out, s.category_vocab);
  binio::put_u32(out, static_cast<std::uint32_t>(s.fields.size()));
  for (const ContextField& f : s.fields) {
    binio::put_string(out, f.name);
    binio::put_u32(out, static_cast<std::uint32_t>(f.kind));
    binio::put_u64(out, f.vocab);
  }
}

DatasetSchema read_schema(std::istream& in) {
  DatasetSchema s;
  s.max_len = binio::get_u32(in, "max_len");
  s.item_vocab = binio::get_u64(in, "item_vocab");
  s.category_vocab = binio::get_u64(in, "category_vocab");
  const std::uint32_t n_fields = binio::get_u32(in, "field count");
  if (n_fields > 4096) throw FormatError("implausible field count " + std::to_string(n_fields));
  for (std::uint32_t i = 0; i < n_fields; ++i) {
    ContextField f;
    f.name = binio::get_string(in, "field name");
    const std::uint32_t kind = binio::get_u32(in, "field kind");
    if (kind > 2) throw FormatError("unknown field kind " + std::to_string(kind));
    f.kind = static_cast<FieldKind>(kind);
    f.vocab = binio::get_u64(in, "field vocab");
    s.fields.push_back(std::move(f));
  }
  return s;
}

void write_sample_cache(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write sample cache '" + path + "'");
  out.write("CDNS", 4);
  binio::put_u32(out, kSampleCacheVersion);
  write_schema(out, data.schema);
  binio::put_u64(out, data.train.size() + data.valid.size() + data.test.size());
  auto write_split = [&](const std::vector<Sample>& samples, Split split) {
    for (const Sample& x : samples) {
      const std::size_t n = 5 + x.context.size() + 2 * x.items.size();
      binio::put_u32(out, static_cast<std::uint32_t>(n));
      binio::put_i32(out, static_cast<std::int32_t>(split));
      binio::put_i32(out, x.label);
      binio::put_i32(out, x.user);
      binio::put_i32(out, static_cast<std::int32_t>(x.context.size()));
      for (std::int32_t v : x.context) binio::put_i32(out, v);
      binio::put_i32(out, static_cast<std::int32_t>(x.items.size()));
      for (std::int32_t v : x.items) binio::put_i32(out, v);
      for (std::int32_t v : x.categories) binio::put_i32(out, v);
    }
  };
  write_split(data.train, Split::kTrain);
  write_split(data.valid, Split::kValid);
  write_split(data.test, Split::kTest);
  if (!out) throw IoError("failed writing sample cache '" + path + "'");
}

Dataset read_sample_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open sample cache '" + path + "'");
  binio::check_magic(in, "CDNS", path);
  const std::uint32_t version = binio::get_u32(in, "version");
  if (version != kSampleCacheVersion) {
    throw FormatError("sample cache version " + std::to_string(version) + " (expected " +
                      std::to_string(kSampleCacheVersion) + ")");
  }
  Dataset data;
  data.schema = read_schema(in);
  const std::uint64_t count = binio::get_u64(in, "record count");
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::uint32_t n = binio::get_u32(in, "record length");
    if (n < 5) throw FormatError("record " + std::to_string(r) + " too short");
    std::vector<std::int32_t> v(n);
    for (auto& x : v) x = binio::get_i32(in, "record values");
    Sample smp;
    const std::int32_t split = v[0];
    smp.label = v[1];
    smp.user = v[2];
    const auto n_ctx = static_cast<std::size_t>(v[3]);
    if (4 + n_ctx >= n) throw FormatError("record " + std::to_string(r) + " context overruns record");
    smp.context.assign(v.begin() + 4, v.begin() + 4 + static_cast<std::ptrdiff_t>(n_ctx));
    const auto len = static_cast<std::size_t>(v[4 + n_ctx]);
    if (5 + n_ctx + 2 * len != n) throw FormatError("record " + std::to_string(r) + " length mismatch");
    const auto seq = v.begin() + 5 + static_cast<std::ptrdiff_t>(n_ctx);
    smp.items.assign(seq, seq + static_cast<std::ptrdiff_t>(len));
    smp.categories.assign(seq + static_cast<std::ptrdiff_t>(len), seq + static_cast<std::ptrdiff_t>(2 * len));
    if (split == static_cast<std::int32_t>(Split::kTrain)) {
      data.train.push_back(std::move(smp));
    } else if (split == static_cast<std::int32_t>(Split::kValid)) {
      data.valid.push_back(std::move(smp));
    } else if (split == static_cast<std::int32_t>(Split::kTest)) {
      data.test.push_back(std::move(smp));
    } else {
      throw FormatError("record " + std::to_string(r) + " has unknown split " + std::to_string(split));
    }
  }
  return data;
}

}  // namespace cdnet
