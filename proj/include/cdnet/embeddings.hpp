#ifndef CDNET_EMBEDDINGS_HPP_
#define CDNET_EMBEDDINGS_HPP_

#include <cstddef>
#include <random>
#include <vector>

#include "cdnet/data.hpp"
#include "cdnet/tape.hpp"

namespace cdnet {

template <typename T>
void init_uniform(Tensor<T>& t, double bound, std::mt19937_64& rng);

template <typename T>
struct BehaviorEncoding {
  Var<T> rows;  // [L×d]
  Mask mask;    // [L]
};

// One table per field. Target-side and sequence-side item attributes share
// the item and category tables; row 0 (padding) is zero and frozen.
template <typename T>
class FeatureEncoder {
 public:
  FeatureEncoder() = default;
  FeatureEncoder(ParameterStore<T>& store, const DatasetSchema& schema, std::size_t dim, std::mt19937_64& rng);

  std::size_t dim() const { return dim_; }
  std::size_t item_table() const { return item_table_; }
  std::size_t category_table() const { return category_table_; }
  std::size_t field_table(std::size_t field) const { return field_tables_.at(field); }

  // [N_f×d], one row per contextual field.
  Var<T> encode_context(Tape<T>& tape, const ParameterStore<T>& store, const Sample& s) const;
  // s_j = item_j + category_j, padded to `len` rows.
  BehaviorEncoding<T> encode_behaviors(Tape<T>& tape, const ParameterStore<T>& store, const Sample& s,
                                       std::size_t len) const;
  // f_i = item + category of the target, shape [d].
  Var<T> encode_target(Tape<T>& tape, const ParameterStore<T>& store, const Sample& s) const;

 private:
  std::size_t dim_ = 0;
  std::size_t item_table_ = 0;
  std::size_t category_table_ = 0;
  std::size_t target_item_field_ = 0;
  std::size_t target_category_field_ = 0;
  std::vector<std::size_t> field_tables_;
};

}  // namespace cdnet

#endif  // CDNET_EMBEDDINGS_HPP_
