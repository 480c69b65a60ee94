#include "cdnet/embeddings.hpp"

#include <cmath>
#include <string>

#include "cdnet/ops.hpp"

namespace cdnet {

template <typename T>
void init_uniform(Tensor<T>& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (T& v : t.values()) v = static_cast<T>(u(rng));
}

namespace {

template <typename T>
std::size_t add_table(ParameterStore<T>& store, const std::string& name, std::size_t rows, std::size_t dim,
                      std::mt19937_64& rng) {
  if (rows < 2) throw ConfigError("embedding table '" + name + "' needs at least the two reserved rows");
  Tensor<T> table({rows, dim});
  init_uniform(table, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
  auto pad = table.row(kPaddingId);
  std::fill(pad.begin(), pad.end(), T(0));
  const std::size_t id = store.add(name, std::move(table));
  store[id].frozen_rows = {static_cast<std::size_t>(kPaddingId)};
  return id;
}

}  // namespace

template <typename T>
FeatureEncoder<T>::FeatureEncoder(ParameterStore<T>& store, const DatasetSchema& schema, std::size_t dim,
                                  std::mt19937_64& rng)
    : dim_(dim) {
  if (dim < 1) throw ConfigError("embedding width d must be >= 1");
  item_table_ = add_table(store, "emb.item", schema.item_vocab, dim, rng);
  category_table_ = add_table(store, "emb.category", schema.category_vocab, dim, rng);
  target_item_field_ = schema.target_item_field();
  target_category_field_ = schema.target_category_field();
  for (std::size_t f = 0; f < schema.fields.size(); ++f) {
    const ContextField& field = schema.fields[f];
    switch (field.kind) {
      case FieldKind::kItem:
        field_tables_.push_back(item_table_);
        break;
      case FieldKind::kCategory:
        field_tables_.push_back(category_table_);
        break;
      case FieldKind::kOwn:
        field_tables_.push_back(add_table(store, "emb.ctx." + field.name, field.vocab, dim, rng));
        break;
    }
  }
}

template <typename T>
Var<T> FeatureEncoder<T>::encode_context(Tape<T>& tape, const ParameterStore<T>& store, const Sample& s) const {
  if (s.context.size() != field_tables_.size()) {
    throw DimensionError("sample has " + std::to_string(s.context.size()) + " contextual ids, schema has " +
                         std::to_string(field_tables_.size()));
  }
  // Consecutive fields that share a table are looked up together.
  std::vector<Var<T>> parts;
  std::size_t f = 0;
  while (f < field_tables_.size()) {
    std::size_t g = f + 1;
    while (g < field_tables_.size() && field_tables_[g] == field_tables_[f]) ++g;
    parts.push_back(ops::embedding_lookup(
        tape, store, field_tables_[f],
        std::span<const std::int32_t>(s.context.data() + f, g - f)));
    f = g;
  }
  return parts.size() == 1 ? parts.front() : ops::concat_rows(parts);
}

template <typename T>
BehaviorEncoding<T> FeatureEncoder<T>::encode_behaviors(Tape<T>& tape, const ParameterStore<T>& store,
                                                        const Sample& s, std::size_t len) const {
  const auto items = padded(s.items, len);
  const auto cats = padded(s.categories, len);
  Var<T> rows = ops::add(ops::embedding_lookup<T>(tape, store, item_table_, items),
                         ops::embedding_lookup<T>(tape, store, category_table_, cats));
  return {rows, sequence_mask(s, len)};
}

template <typename T>
Var<T> FeatureEncoder<T>::encode_target(Tape<T>& tape, const ParameterStore<T>& store, const Sample& s) const {
  const std::int32_t item = s.context.at(target_item_field_);
  const std::int32_t cat = s.context.at(target_category_field_);
  Var<T> f = ops::add(ops::embedding_lookup<T>(tape, store, item_table_, std::span<const std::int32_t>(&item, 1)),
                      ops::embedding_lookup<T>(tape, store, category_table_, std::span<const std::int32_t>(&cat, 1)));
  return ops::reshape(f, {dim_});
}

template void init_uniform<float>(Tensor<float>&, double, std::mt19937_64&);
template void init_uniform<double>(Tensor<double>&, double, std::mt19937_64&);
template class FeatureEncoder<float>;
template class FeatureEncoder<double>;

}  // namespace cdnet
