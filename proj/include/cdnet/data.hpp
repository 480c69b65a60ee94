#ifndef CDNET_DATA_HPP_
#define CDNET_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cdnet/tensor.hpp"

namespace cdnet {

inline constexpr std::int32_t kPaddingId = 0;
inline constexpr std::int32_t kOovId = 1;

enum class BehaviorType { kPv, kBuy, kCart, kFav };

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  std::string category_id;
  BehaviorType behavior = BehaviorType::kPv;
  std::int64_t timestamp = 0;
};

struct ParseLimits {
  std::size_t max_records = 0;            // 0 = no limit
  double max_malformed_fraction = 0.01;   // above this the log is rejected
};

struct ParseResult {
  std::vector<InteractionRecord> records;
  std::size_t lines = 0;
  std::size_t malformed = 0;
};

// Reads `user_id,item_id,category_id,behavior_type,timestamp` lines.
// Malformed lines are skipped and counted.
ParseResult parse_log(std::istream& in, const ParseLimits& limits = {});
ParseResult parse_log(const std::string& path, const ParseLimits& limits = {});

// Raw string id -> dense index. 0 is padding, 1 is out-of-vocabulary, real
// ids start at 2.
class Vocabulary {
 public:
  Vocabulary();
  std::int32_t add(const std::string& raw);
  std::int32_t encode(const std::string& raw) const;
  const std::string& decode(std::int32_t id) const;
  // Table size including the two reserved rows.
  std::size_t size() const { return by_index_.size(); }

 private:
  std::unordered_map<std::string, std::int32_t> by_raw_;
  std::vector<std::string> by_index_;
};

// How a contextual field is embedded: its own table, or the shared item /
// category table.
enum class FieldKind : std::uint32_t { kOwn = 0, kItem = 1, kCategory = 2 };

struct ContextField {
  std::string name;
  FieldKind kind = FieldKind::kOwn;
  std::size_t vocab = 0;  // only meaningful for kOwn
};

struct DatasetSchema {
  std::size_t item_vocab = 0;
  std::size_t category_vocab = 0;
  std::vector<ContextField> fields;
  std::size_t max_len = 0;

  std::size_t num_fields() const { return fields.size(); }
  // Index of the field carrying the target item / category (throws if absent).
  std::size_t target_item_field() const;
  std::size_t target_category_field() const;
};

// One labeled impression. Behaviors are stored unpadded, oldest first.
struct Sample {
  std::vector<std::int32_t> context;
  std::vector<std::int32_t> items;
  std::vector<std::int32_t> categories;
  std::int32_t label = 0;
  std::int32_t user = 0;

  std::size_t valid_len() const { return items.size(); }
};

// Behavior ids padded (or truncated to the most recent) to `len` positions.
std::vector<std::int32_t> padded(std::span<const std::int32_t> ids, std::size_t len);
Mask sequence_mask(const Sample& s, std::size_t len);

enum class Split : std::int32_t { kTrain = 0, kValid = 1, kTest = 2 };

struct Dataset {
  DatasetSchema schema;
  std::vector<Sample> train;
  std::vector<Sample> valid;
  std::vector<Sample> test;
};

struct SampleOptions {
  std::size_t max_len = 50;
  std::size_t neg_ratio = 1;
  std::size_t warmup = 5;  // prior clicks required before a click becomes a positive
  std::uint64_t seed = 1;
};

// Builds next-click samples from a parsed log. Vocabularies are filled from
// the click events. Output is ordered by (user, time), each positive
// followed by its negatives.
struct SampleBuild {
  std::vector<Sample> samples;
  DatasetSchema schema;
  Vocabulary users;
  Vocabulary items;
  Vocabulary categories;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};
SampleBuild build_samples(std::span<const InteractionRecord> records, const SampleOptions& options);

// Per user, the last 10% of impression groups go to test and the 10%
// before them to validation. Expects build_samples ordering.
Dataset temporal_split(std::vector<Sample> samples, DatasetSchema schema);

struct Batch {
  std::vector<std::size_t> indices;
  std::size_t padded_len = 0;
};

enum class PadMode { kMaxLen, kBatchMax };

// Deterministic shuffle under `seed`; the last batch may be partial.
std::vector<Batch> make_batches(std::span<const Sample> samples, std::size_t batch_size, std::uint64_t seed,
                                PadMode mode = PadMode::kMaxLen, std::size_t max_len = 0);

// Binary sample cache: "CDNS", u32 version, schema, then length-prefixed
// little-endian int32 records.
inline constexpr std::uint32_t kSampleCacheVersion = 1;
void write_schema(std::ostream& out, const DatasetSchema& schema);
DatasetSchema read_schema(std::istream& in);
void write_sample_cache(const std::string& path, const Dataset& data);
Dataset read_sample_cache(const std::string& path);

}  // namespace cdnet

#endif  // CDNET_DATA_HPP_
