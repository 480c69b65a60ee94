#include "cdnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cdnet/kernels.hpp"

namespace cdnet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace kernels {
MacCounter*& active_counter() {
  thread_local MacCounter* counter = nullptr;
  return counter;
}
}  // namespace kernels

namespace ops {
namespace {

template <typename T>
void require_same(Var<T> a, Var<T> b, const char* op) {
  if (a.tape != b.tape) throw ContractError(std::string(op) + ": operands on different tapes");
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T>
void accumulate_into(Tape<T>& t, int id, const Tensor<T>& g) {
  if (!t.requires_grad(id)) return;
  Tensor<T>& acc = t.accumulator(id);
  for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same(a, b, "add");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
    const Tensor<T>& g = t.out_grad(self);
    accumulate_into(t, ia, g);
    accumulate_into(t, ib, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same(a, b, "sub");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
    const Tensor<T>& g = t.out_grad(self);
    accumulate_into(t, ia, g);
    if (t.requires_grad(ib)) {
      Tensor<T>& acc = t.accumulator(ib);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same(a, b, "mul");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
    const Tensor<T>& g = t.out_grad(self);
    if (t.requires_grad(ia)) {
      const Tensor<T>& bv = t.value(ib);
      Tensor<T>& acc = t.accumulator(ia);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      const Tensor<T>& av = t.value(ia);
      Tensor<T>& acc = t.accumulator(ib);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T c) {
  Tensor<T> out = x.value();
  for (T& v : out.values()) v *= c;
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix, c](Tape<T>& t, int self) {
    const Tensor<T>& g = t.out_grad(self);
    Tensor<T>& acc = t.accumulator(ix);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * c;
  });
}

template <typename T>
Var<T> add_scalar(Var<T> x, T c) {
  Tensor<T> out = x.value();
  for (T& v : out.values()) v += c;
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix](Tape<T>& t, int self) {
    accumulate_into(t, ix, t.out_grad(self));
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> out = x.value();
  for (T& v : out.values()) {
    // Split by sign so exp never overflows.
    v = v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix](Tape<T>& t, int self) {
    const Tensor<T>& g = t.out_grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& acc = t.accumulator(ix);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (T& v : out.values()) v = v > 0 ? v : T(0);
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix](Tape<T>& t, int self) {
    const Tensor<T>& g = t.out_grad(self);
    const Tensor<T>& xv = t.value(ix);
    Tensor<T>& acc = t.accumulator(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0) acc[i] += g[i];
    }
  });
}

template <typename T>
Var<T> add_bias(Var<T> x, Var<T> b) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& bv = b.value();
  if (bv.size() != xv.cols()) {
    throw DimensionError("add_bias: input " + shape_str(xv.shape()) + " with bias " +
                         shape_str(bv.shape()));
  }
  Tensor<T> out = xv;
  const std::size_t m = xv.rows(), n = xv.cols();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
  }
  const int ix = x.id, ib = b.id;
  return x.tape->record(std::move(out), {ix, ib}, [ix, ib, m, n](Tape<T>& t, int self) {
    const Tensor<T>& g = t.out_grad(self);
    accumulate_into(t, ix, g);
    if (t.requires_grad(ib)) {
      Tensor<T>& acc = t.accumulator(ib);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) acc[c] += g[r * n + c];
      }
    }
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() > 2 || bv.rank() > 2 || av.cols() != bv.rows() || bv.rank() < 2) {
    throw DimensionError("matmul: cannot multiply " + shape_str(av.shape()) + " by " +
                         shape_str(bv.shape()));
  }
  const std::size_t m = av.rows(), p = av.cols(), q = bv.cols();
  Tensor<T> out({m, q});
  kernels::gemm_nn(av.data(), bv.data(), out.data(), m, p, q, false);
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib, m, p, q](Tape<T>& t, int self) {
    const Tensor<T>& g = t.out_grad(self);
    if (t.requires_grad(ia)) {
      // dA = G · Bᵀ
      kernels::gemm_nt(g.data(), t.value(ib).data(), t.accumulator(ia).data(), m, q, p, true);
    }
    if (t.requires_grad(ib)) {
      // dB = Aᵀ · G
      kernels::gemm_tn(t.value(ia).data(), g.data(), t.accumulator(ib).data(), p, m, q, true);
    }
  });
}

template <typename T>
Var<T> transpose(Var<T> x) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("transpose: expected a matrix, got " + shape_str(xv.shape()));
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor<T> out({n, m});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[c * m + r] = xv[r * n + c];
  }
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix, m, n](Tape<T>& t, int self) {
    const Tensor<T>& g = t.out_grad(self);
    Tensor<T>& acc = t.accumulator(ix);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) acc[r * n + c] += g[c * m + r];
    }
  });
}

template <typename T>
Var<T> softmax_rows(Var<T> x, const Mask& col_mask) {
  const Tensor<T>& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (!col_mask.empty() && col_mask.size() != n) {
    throw DimensionError("softmax_rows: mask of length " + std::to_string(col_mask.size()) +
                         " for " + std::to_string(n) + " columns");
  }
  Tensor<T> out(xv.shape());
  kernels::softmax_rows(xv.data(), out.data(), m, n, std::span<const std::uint8_t>(col_mask));
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix, m, n](Tape<T>& t, int self) {
    const Tensor<T>& g = t.out_grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& acc = t.accumulator(ix);
    for (std::size_t r = 0; r < m; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
      for (std::size_t c = 0; c < n; ++c) acc[r * n + c] += y[r * n + c] * (g[r * n + c] - dot);
    }
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  const Tensor<T>& xv = x.value();
  const std::size_t m = xv.rows(), d = xv.cols();
  if (d == 0) throw DimensionError("layer_norm: zero-width input");
  if (gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("layer_norm: input " + shape_str(xv.shape()) + " with gain " +
                         shape_str(gain.value().shape()) + " and bias " + shape_str(bias.value().shape()));
  }
  if (!(eps > 0)) throw ContractError("layer_norm: eps must be positive");
  const Tensor<T>& gv = gain.value();
  const Tensor<T>& bv = bias.value();
  Tensor<T> out(xv.shape());
  // Normalized rows and per-row inverse std are needed by backward.
  Tensor<T> xhat(xv.shape());
  std::vector<T> rstd(m);
  for (std::size_t r = 0; r < m; ++r) {
    T mu = 0;
    for (std::size_t c = 0; c < d; ++c) mu += xv[r * d + c];
    mu /= T(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const T z = xv[r * d + c] - mu;
      var += z * z;
    }
    var /= T(d);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const T h = (xv[r * d + c] - mu) * rstd[r];
      xhat[r * d + c] = h;
      out[r * d + c] = h * gv[c] + bv[c];
    }
  }
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return x.tape->record(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, m, d, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<T>& t, int self) {
        const Tensor<T>& g = t.out_grad(self);
        if (t.requires_grad(ig)) {
          Tensor<T>& acc = t.accumulator(ig);
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < d; ++c) acc[c] += g[r * d + c] * xhat[r * d + c];
          }
        }
        if (t.requires_grad(ib)) {
          Tensor<T>& acc = t.accumulator(ib);
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < d; ++c) acc[c] += g[r * d + c];
          }
        }
        if (t.requires_grad(ix)) {
          const Tensor<T>& gv = t.value(ig);
          Tensor<T>& acc = t.accumulator(ix);
          for (std::size_t r = 0; r < m; ++r) {
            T sum_dh = 0, sum_dh_h = 0;
            for (std::size_t c = 0; c < d; ++c) {
              const T dh = g[r * d + c] * gv[c];
              sum_dh += dh;
              sum_dh_h += dh * xhat[r * d + c];
            }
            const T inv_d = T(1) / T(d);
            for (std::size_t c = 0; c < d; ++c) {
              const T dh = g[r * d + c] * gv[c];
              acc[r * d + c] += rstd[r] * (dh - inv_d * sum_dh - xhat[r * d + c] * inv_d * sum_dh_h);
            }
          }
        }
      });
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const std::size_t> idx) {
  const Tensor<T>& xv = x.value();
  const std::size_t rows = xv.rows(), d = xv.cols();
  Tensor<T> out({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) {
      throw IndexError("gather_rows: index " + std::to_string(idx[r]) + " outside [0, " +
                       std::to_string(rows) + ")");
    }
    std::copy_n(xv.data() + idx[r] * d, d, out.data() + r * d);
  }
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix},
                        [ix, d, index = std::vector<std::size_t>(idx.begin(), idx.end())](Tape<T>& t,
                                                                                          int self) {
                          const Tensor<T>& g = t.out_grad(self);
                          Tensor<T>& acc = t.accumulator(ix);
                          for (std::size_t r = 0; r < index.size(); ++r) {
                            for (std::size_t c = 0; c < d; ++c) acc[index[r] * d + c] += g[r * d + c];
                          }
                        });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t d = parts.front().value().cols();
  std::size_t rows = 0;
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  for (const Var<T>& p : parts) {
    if (p.value().cols() != d || p.value().rank() > 2) {
      throw DimensionError("concat_rows: width " + std::to_string(d) + " vs part " +
                           shape_str(p.value().shape()));
    }
    offsets.push_back(rows * d);
    rows += p.value().rows();
    ids.push_back(p.id);
  }
  Tensor<T> out({rows, d});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor<T>& v = parts[i].value();
    std::copy(v.data(), v.data() + v.size(), out.data() + offsets[i]);
  }
  return parts.front().tape->record(std::move(out), ids,
                                    [ids, offsets](Tape<T>& t, int self) {
                                      const Tensor<T>& g = t.out_grad(self);
                                      for (std::size_t i = 0; i < ids.size(); ++i) {
                                        if (!t.requires_grad(ids[i])) continue;
                                        Tensor<T>& acc = t.accumulator(ids[i]);
                                        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[offsets[i] + j];
                                      }
                                    });
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end) {
  const Tensor<T>& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (begin > end || end > n) {
    throw IndexError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") of " + std::to_string(n) + " columns");
  }
  const std::size_t w = end - begin;
  Tensor<T> out({m, w});
  for (std::size_t r = 0; r < m; ++r) std::copy_n(xv.data() + r * n + begin, w, out.data() + r * w);
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix, m, n, w, begin](Tape<T>& t, int self) {
    const Tensor<T>& g = t.out_grad(self);
    Tensor<T>& acc = t.accumulator(ix);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < w; ++c) acc[r * n + begin + c] += g[r * w + c];
    }
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts.front().value().rows();
  std::size_t n = 0;
  std::vector<int> ids;
  std::vector<std::size_t> offsets, widths;
  for (const Var<T>& p : parts) {
    if (p.value().rows() != m) {
      throw DimensionError("concat_cols: " + std::to_string(m) + " rows vs part " +
                           shape_str(p.value().shape()));
    }
    offsets.push_back(n);
    widths.push_back(p.value().cols());
    n += p.value().cols();
    ids.push_back(p.id);
  }
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor<T>& v = parts[i].value();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(v.data() + r * widths[i], widths[i], out.data() + r * n + offsets[i]);
    }
  }
  return parts.front().tape->record(std::move(out), ids, [ids, offsets, widths, m, n](Tape<T>& t, int self) {
    const Tensor<T>& g = t.out_grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.requires_grad(ids[i])) continue;
      Tensor<T>& acc = t.accumulator(ids[i]);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < widths[i]; ++c) acc[r * widths[i] + c] += g[r * n + offsets[i] + c];
      }
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value();
  out.reshape(std::move(shape));
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix](Tape<T>& t, int self) {
    accumulate_into(t, ix, t.out_grad(self));
  });
}

template <typename T>
Var<T> stop_gradient(Var<T> x) {
  return x.tape->constant(x.tape->stopped_value(x.value()));
}

template <typename T>
Var<T> sum(Var<T> x) {
  T total = 0;
  for (T v : x.value().values()) total += v;
  const int ix = x.id;
  return x.tape->record(Tensor<T>::scalar(total), {ix}, [ix](Tape<T>& t, int self) {
    const T g = t.out_grad(self)[0];
    Tensor<T>& acc = t.accumulator(ix);
    for (T& a : acc.values()) a += g;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(x), T(1) / T(n));
}

template <typename T>
Var<T> scale_rows(Var<T> x, Var<T> s) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& sv = s.value();
  const std::size_t m = xv.rows(), d = xv.cols();
  if (sv.size() != m) {
    throw DimensionError("scale_rows: " + shape_str(xv.shape()) + " with scales " + shape_str(sv.shape()));
  }
  Tensor<T> out = xv;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] *= sv[r];
  }
  const int ix = x.id, is = s.id;
  return x.tape->record(std::move(out), {ix, is}, [ix, is, m, d](Tape<T>& t, int self) {
    const Tensor<T>& g = t.out_grad(self);
    if (t.requires_grad(ix)) {
      const Tensor<T>& sv = t.value(is);
      Tensor<T>& acc = t.accumulator(ix);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < d; ++c) acc[r * d + c] += g[r * d + c] * sv[r];
      }
    }
    if (t.requires_grad(is)) {
      const Tensor<T>& xv = t.value(ix);
      Tensor<T>& acc = t.accumulator(is);
      for (std::size_t r = 0; r < m; ++r) {
        T dot = 0;
        for (std::size_t c = 0; c < d; ++c) dot += g[r * d + c] * xv[r * d + c];
        acc[r] += dot;
      }
    }
  });
}

template <typename T>
Var<T> embedding_lookup(Tape<T>& tape, const ParameterStore<T>& store, std::size_t table,
                        std::span<const std::int32_t> ids) {
  const Parameter<T>& p = store[table];
  const Tensor<T>& tv = p.value;
  const std::size_t vocab = tv.rows(), d = tv.cols();
  Tensor<T> out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
      throw IndexError("embedding_lookup: id " + std::to_string(ids[r]) + " outside table '" + p.name +
                       "' of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[r]) * d, d, out.data() + r * d);
  }
  tape.bind(store);
  return tape.record_with(std::move(out), p.trainable,
                          [table, d, rows = std::vector<std::int32_t>(ids.begin(), ids.end())](Tape<T>& t,
                                                                                             int self) {
                            const Tensor<T>& g = t.out_grad(self);
                            Gradients<T>* sink = t.sink();
                            for (std::size_t r = 0; r < rows.size(); ++r) {
                              sink->add_row(table, static_cast<std::size_t>(rows[r]),
                                            std::span<const T>(g.data() + r * d, d));
                            }
                          });
}

template <typename T>
Var<T> cosine_scores(Var<T> f, Var<T> s, const Mask& mask) {
  const Tensor<T>& fv = f.value();
  const Tensor<T>& sv = s.value();
  const std::size_t d = fv.size(), len = sv.rows();
  if (sv.cols() != d || fv.rows() != 1) {
    throw DimensionError("cosine_scores: target " + shape_str(fv.shape()) + " with sequence " +
                         shape_str(sv.shape()));
  }
  if (mask.size() != len) {
    throw DimensionError("cosine_scores: mask of length " + std::to_string(mask.size()) + " for " +
                         std::to_string(len) + " behaviors");
  }
  T fn2 = 0;
  for (std::size_t c = 0; c < d; ++c) fn2 += fv[c] * fv[c];
  const T fn = std::sqrt(fn2);
  Tensor<T> out({len});
  // Per-row cosine and norm, kept for backward; a negative norm marks rows
  // with no gradient (invalid or inside the denominator floor).
  std::vector<T> cosv(len, T(0)), snorm(len, T(-1));
  for (std::size_t j = 0; j < len; ++j) {
    if (!mask[j]) {
      out[j] = T(-1);
      continue;
    }
    T dot = 0, sn2 = 0;
    for (std::size_t c = 0; c < d; ++c) {
      dot += fv[c] * sv[j * d + c];
      sn2 += sv[j * d + c] * sv[j * d + c];
    }
    const T sn = std::sqrt(sn2);
    const T den = fn * sn;
    const T floor = T(kCosineFloor);
    const T cosine = dot / std::max(den, floor);
    cosv[j] = cosine;
    if (den > floor) snorm[j] = sn;
    out[j] = (cosine + T(1)) / T(2);
  }
  const int i_f = f.id, i_s = s.id;
  return f.tape->record(
      std::move(out), {i_f, i_s},
      [i_f, i_s, d, len, fn, cosv = std::move(cosv), snorm = std::move(snorm)](Tape<T>& t, int self) {
        const Tensor<T>& g = t.out_grad(self);
        const Tensor<T>& fv = t.value(i_f);
        const Tensor<T>& sv = t.value(i_s);
        const bool want_f = t.requires_grad(i_f), want_s = t.requires_grad(i_s);
        Tensor<T>* df = want_f ? &t.accumulator(i_f) : nullptr;
        Tensor<T>* ds = want_s ? &t.accumulator(i_s) : nullptr;
        for (std::size_t j = 0; j < len; ++j) {
          if (snorm[j] < 0) continue;
          const T gc = g[j] / T(2);
          if (gc == T(0)) continue;
          const T sn = snorm[j];
          const T inv_den = T(1) / (fn * sn);
          for (std::size_t c = 0; c < d; ++c) {
            const T fc = fv[c], sc = sv[j * d + c];
            if (df) (*df)[c] += gc * (sc * inv_den - cosv[j] * fc / (fn * fn));
            if (ds) (*ds)[j * d + c] += gc * (fc * inv_den - cosv[j] * sc / (sn * sn));
          }
        }
      });
}

template <typename T>
Var<T> token_linear(Var<T> x, Var<T> w, Var<T> b) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const Tensor<T>& bv = b.value();
  if (wv.rank() != 3 || xv.rows() != wv.dim(0) || xv.cols() != wv.dim(1) || bv.size() != wv.dim(0) * wv.dim(2)) {
    throw DimensionError("token_linear: input " + shape_str(xv.shape()) + ", weights " +
                         shape_str(wv.shape()) + ", bias " + shape_str(bv.shape()));
  }
  const std::size_t tokens = wv.dim(0), in = wv.dim(1), outw = wv.dim(2);
  Tensor<T> out({tokens, outw});
  for (std::size_t k = 0; k < tokens; ++k) {
    T* o = out.data() + k * outw;
    std::copy_n(bv.data() + k * outw, outw, o);
    kernels::gemm_nn(xv.data() + k * in, wv.data() + k * in * outw, o, 1, in, outw, true);
  }
  const int ix = x.id, iw = w.id, ib = b.id;
  return x.tape->record(std::move(out), {ix, iw, ib}, [ix, iw, ib, tokens, in, outw](Tape<T>& t, int self) {
    const Tensor<T>& g = t.out_grad(self);
    if (t.requires_grad(ib)) accumulate_into(t, ib, g);
    if (t.requires_grad(iw)) {
      const Tensor<T>& xv = t.value(ix);
      Tensor<T>& acc = t.accumulator(iw);
      for (std::size_t k = 0; k < tokens; ++k) {
        kernels::gemm_tn(xv.data() + k * in, g.data() + k * outw, acc.data() + k * in * outw, in, 1, outw, true);
      }
    }
    if (t.requires_grad(ix)) {
      const Tensor<T>& wv = t.value(iw);
      Tensor<T>& acc = t.accumulator(ix);
      for (std::size_t k = 0; k < tokens; ++k) {
        kernels::gemm_nt(g.data() + k * outw, wv.data() + k * in * outw, acc.data() + k * in, 1, outw, in, true);
      }
    }
  });
}

template <typename T>
Var<T> bce_loss(Var<T> probs, std::span<const T> labels) {
  const Tensor<T>& pv = probs.value();
  const std::size_t n = pv.size();
  if (labels.size() != n) {
    throw DimensionError("bce_loss: " + std::to_string(n) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
  }
  if (n == 0) throw ContractError("bce_loss: empty batch");
  const T lo = T(kProbClamp), hi = T(1) - T(kProbClamp);
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T p = std::clamp(pv[i], lo, hi);
    total += labels[i] * std::log(p) + (T(1) - labels[i]) * std::log(T(1) - p);
  }
  const int ip = probs.id;
  return probs.tape->record(
      Tensor<T>::scalar(-total / T(n)), {ip},
      [ip, n, lo, hi, y = std::vector<T>(labels.begin(), labels.end())](Tape<T>& t, int self) {
        const T g = t.out_grad(self)[0];
        const Tensor<T>& pv = t.value(ip);
        Tensor<T>& acc = t.accumulator(ip);
        for (std::size_t i = 0; i < n; ++i) {
          const T p = pv[i];
          if (p < lo || p > hi) continue;
          acc[i] += -g * (y[i] / p - (T(1) - y[i]) / (T(1) - p)) / T(n);
        }
      });
}

#define CDNET_INSTANTIATE_OPS(T)                                                                  \
  template Var<T> add<T>(Var<T>, Var<T>);                                                         \
  template Var<T> sub<T>(Var<T>, Var<T>);                                                         \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                         \
  template Var<T> scale<T>(Var<T>, T);                                                            \
  template Var<T> add_scalar<T>(Var<T>, T);                                                       \
  template Var<T> sigmoid<T>(Var<T>);                                                             \
  template Var<T> relu<T>(Var<T>);                                                                \
  template Var<T> add_bias<T>(Var<T>, Var<T>);                                                    \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                      \
  template Var<T> transpose<T>(Var<T>);                                                           \
  template Var<T> softmax_rows<T>(Var<T>, const Mask&);                                           \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                       \
  template Var<T> gather_rows<T>(Var<T>, std::span<const std::size_t>);                           \
  template Var<T> concat_rows<T>(const std::vector<Var<T>>&);                                     \
  template Var<T> slice_cols<T>(Var<T>, std::size_t, std::size_t);                                \
  template Var<T> concat_cols<T>(const std::vector<Var<T>>&);                                     \
  template Var<T> reshape<T>(Var<T>, Shape);                                                      \
  template Var<T> stop_gradient<T>(Var<T>);                                                       \
  template Var<T> sum<T>(Var<T>);                                                                 \
  template Var<T> mean<T>(Var<T>);                                                                \
  template Var<T> scale_rows<T>(Var<T>, Var<T>);                                                  \
  template Var<T> embedding_lookup<T>(Tape<T>&, const ParameterStore<T>&, std::size_t,            \
                                      std::span<const std::int32_t>);                             \
  template Var<T> cosine_scores<T>(Var<T>, Var<T>, const Mask&);                                  \
  template Var<T> token_linear<T>(Var<T>, Var<T>, Var<T>);                                        \
  template Var<T> bce_loss<T>(Var<T>, std::span<const T>);

CDNET_INSTANTIATE_OPS(float)
CDNET_INSTANTIATE_OPS(double)

#undef CDNET_INSTANTIATE_OPS

}  // namespace ops
}  // namespace cdnet
