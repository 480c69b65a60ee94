#include "cdnet/interaction.hpp"

#include <algorithm>
#include <cmath>

#include "cdnet/embeddings.hpp"
#include "cdnet/ops.hpp"

namespace cdnet {
namespace {

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <typename T>
std::size_t add_weight(ParameterStore<T>& store, const std::string& name, Shape shape, std::size_t fan_in,
                       std::size_t fan_out, std::mt19937_64& rng) {
  Tensor<T> w(std::move(shape));
  init_uniform(w, xavier_bound(fan_in, fan_out), rng);
  return store.add(name, std::move(w));
}

template <typename T>
std::size_t add_filled(ParameterStore<T>& store, const std::string& name, Shape shape, T value) {
  Tensor<T> t(std::move(shape));
  t.fill(value);
  return store.add(name, std::move(t));
}

bool all_live(const Mask& m) {
  return std::all_of(m.begin(), m.end(), [](std::uint8_t v) { return v != 0; });
}

}  // namespace

template <typename T>
TokenMatrix<T> build_tokens(const std::optional<CoreBehaviors<T>>& core, std::optional<Var<T>> gid,
                            Var<T> context) {
  const std::size_t d = context.value().cols();
  std::vector<Var<T>> parts;
  TokenMatrix<T> out;
  if (core) {
    if (core->rows.value().cols() != d) {
      throw DimensionError("build_tokens: core width " + std::to_string(core->rows.value().cols()) +
                           " vs context width " + std::to_string(d));
    }
    parts.push_back(core->rows);
    out.mask.insert(out.mask.end(), core->core_mask.begin(), core->core_mask.end());
  }
  if (gid) {
    if (gid->value().size() != d) {
      throw DimensionError("build_tokens: interest width " + std::to_string(gid->value().size()) +
                           " vs context width " + std::to_string(d));
    }
    parts.push_back(*gid);
    out.mask.push_back(1);
  }
  parts.push_back(context);
  out.mask.insert(out.mask.end(), context.value().rows(), std::uint8_t{1});
  out.x = ops::concat_rows(parts);
  return out;
}

template <typename T>
InteractionBlock<T>::InteractionBlock(ParameterStore<T>& store, const std::string& prefix, std::size_t tokens,
                                      std::size_t dim, std::size_t heads, std::size_t expansion,
                                      std::mt19937_64& rng)
    : tokens_(tokens), dim_(dim), heads_(heads) {
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("d=" + std::to_string(dim) + " is not divisible by heads=" + std::to_string(heads));
  }
  if (expansion < 1) throw ConfigError("ffn expansion must be >= 1");
  const std::size_t hidden = expansion * dim;
  wq_ = add_weight<T>(store, prefix + ".attn.wq", {dim, dim}, dim, dim, rng);
  wk_ = add_weight<T>(store, prefix + ".attn.wk", {dim, dim}, dim, dim, rng);
  wv_ = add_weight<T>(store, prefix + ".attn.wv", {dim, dim}, dim, dim, rng);
  wo_ = add_weight<T>(store, prefix + ".attn.wo", {dim, dim}, dim, dim, rng);
  ln1_gain_ = add_filled<T>(store, prefix + ".ln1.gain", {dim}, T(1));
  ln1_bias_ = add_filled<T>(store, prefix + ".ln1.bias", {dim}, T(0));
  ffn_w1_ = add_weight<T>(store, prefix + ".ffn.w1", {tokens, dim, hidden}, dim, hidden, rng);
  ffn_b1_ = add_filled<T>(store, prefix + ".ffn.b1", {tokens, hidden}, T(0));
  ffn_w2_ = add_weight<T>(store, prefix + ".ffn.w2", {tokens, hidden, dim}, hidden, dim, rng);
  ffn_b2_ = add_filled<T>(store, prefix + ".ffn.b2", {tokens, dim}, T(0));
  ln2_gain_ = add_filled<T>(store, prefix + ".ln2.gain", {dim}, T(1));
  ln2_bias_ = add_filled<T>(store, prefix + ".ln2.bias", {dim}, T(0));
}

template <typename T>
Var<T> InteractionBlock<T>::forward(Tape<T>& tape, const ParameterStore<T>& store, Var<T> x, const Mask& mask,
                                    std::vector<Tensor<T>>* attention) const {
  if (x.value().rows() != tokens_ || x.value().cols() != dim_) {
    throw DimensionError("interaction block expects [" + std::to_string(tokens_) + "x" + std::to_string(dim_) +
                         "], got " + shape_str(x.value().shape()));
  }
  auto p = [&](std::size_t id) { return tape.parameter(store, id); };
  const std::size_t dh = dim_ / heads_;
  const T inv_sqrt = T(1) / std::sqrt(T(dh));
  const Mask& keys = all_live(mask) ? Mask{} : mask;

  Var<T> q = ops::matmul(x, p(wq_));
  Var<T> k = ops::matmul(x, p(wk_));
  Var<T> v = ops::matmul(x, p(wv_));
  std::vector<Var<T>> outs;
  for (std::size_t h = 0; h < heads_; ++h) {
    Var<T> qh = heads_ == 1 ? q : ops::slice_cols(q, h * dh, (h + 1) * dh);
    Var<T> kh = heads_ == 1 ? k : ops::slice_cols(k, h * dh, (h + 1) * dh);
    Var<T> vh = heads_ == 1 ? v : ops::slice_cols(v, h * dh, (h + 1) * dh);
    Var<T> weights = ops::softmax_rows(ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt), keys);
    if (attention) attention->push_back(weights.value());
    outs.push_back(ops::matmul(weights, vh));
  }
  Var<T> merged = heads_ == 1 ? outs.front() : ops::concat_cols(outs);
  Var<T> attended = ops::matmul(merged, p(wo_));
  Var<T> x1 = ops::layer_norm(ops::add(attended, x), p(ln1_gain_), p(ln1_bias_));

  Var<T> hidden = ops::relu(ops::token_linear(x1, p(ffn_w1_), p(ffn_b1_)));
  Var<T> ffn = ops::token_linear(hidden, p(ffn_w2_), p(ffn_b2_));
  Var<T> x2 = ops::layer_norm(ops::add(ffn, x1), p(ln2_gain_), p(ln2_bias_));
  if (!keys.empty()) {
    Tensor<T> live({mask.size()});
    for (std::size_t t = 0; t < mask.size(); ++t) live[t] = mask[t] ? T(1) : T(0);
    x2 = ops::scale_rows(x2, tape.constant(std::move(live)));
  }
  return x2;
}

template <typename T>
PredictionHead<T>::PredictionHead(ParameterStore<T>& store, std::size_t in_width,
                                  const std::vector<std::size_t>& hidden, std::mt19937_64& rng) {
  std::size_t width = in_width;
  for (std::size_t l = 0; l <= hidden.size(); ++l) {
    const std::size_t out = l < hidden.size() ? hidden[l] : 1;
    if (out < 1) throw ConfigError("head hidden widths must be >= 1");
    const std::string name = l < hidden.size() ? "head.fc" + std::to_string(l) : std::string("head.out");
    weights_.push_back(add_weight<T>(store, name + ".w", {width, out}, width, out, rng));
    biases_.push_back(add_filled<T>(store, name + ".b", {out}, T(0)));
    width = out;
  }
}

template <typename T>
Var<T> PredictionHead<T>::forward(Tape<T>& tape, const ParameterStore<T>& store, Var<T> tokens) const {
  Var<T> h = ops::reshape(tokens, {1, tokens.value().size()});
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = ops::add_bias(ops::matmul(h, tape.parameter(store, weights_[l])), tape.parameter(store, biases_[l]));
    if (l + 1 < weights_.size()) h = ops::relu(h);
  }
  return ops::reshape(ops::sigmoid(h), {1});
}

template TokenMatrix<float> build_tokens<float>(const std::optional<CoreBehaviors<float>>&, std::optional<Var<float>>,
                                                Var<float>);
template TokenMatrix<double> build_tokens<double>(const std::optional<CoreBehaviors<double>>&,
                                                  std::optional<Var<double>>, Var<double>);
template class InteractionBlock<float>;
template class InteractionBlock<double>;
template class PredictionHead<float>;
template class PredictionHead<double>;

}  // namespace cdnet
