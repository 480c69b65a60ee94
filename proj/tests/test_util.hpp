#ifndef CDNET_TESTS_TEST_UTIL_HPP_
#define CDNET_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cdnet/data.hpp"
#include "cdnet/model.hpp"
#include "cdnet/ops.hpp"
#include "cdnet/tape.hpp"

namespace cdnet::testing {

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline constexpr double kFdStep = 1e-5;

// |a - n| / max(|a|, |n|, floor). Central differences at step 1e-5 carry
// roughly 1e-11 of rounding noise, so the floor stops gradients that are
// zero up to rounding from reading as large relative errors.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

using Builder = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct GradReport {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

// Central differences over every element of every input. The builder maps
// the input leaves to a scalar; stop-gradient values seen at the base point
// are replayed while perturbing.
inline GradReport check_inputs(std::vector<Tensor<double>> inputs, const Builder& build, double h = kFdStep) {
  std::vector<Tensor<double>> stops;
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    tape.capture_stops(&stops);
    std::vector<Var<double>> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
    Var<double> loss = build(tape, leaves);
    tape.backward(loss);
    for (const auto& v : leaves) analytic.push_back(tape.grad(v));
  }
  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> tape(false);
    tape.replay_stops(&stops);
    std::vector<Var<double>> leaves;
    for (const auto& t : xs) leaves.push_back(tape.constant(t));
    return build(tape, leaves).value()[0];
  };
  GradReport rep;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t e = 0; e < inputs[i].size(); ++e) {
      const double x0 = inputs[i][e];
      inputs[i][e] = x0 + h;
      const double fp = eval(inputs);
      inputs[i][e] = x0 - h;
      const double fm = eval(inputs);
      inputs[i][e] = x0;
      const double num = (fp - fm) / (2 * h);
      const double err = rel_error(analytic[i][e], num);
      ++rep.checked;
      if (err > rep.max_rel) {
        rep.max_rel = err;
        rep.worst = "input " + std::to_string(i) + "[" + std::to_string(e) + "] analytic=" +
                    std::to_string(analytic[i][e]) + " numeric=" + std::to_string(num);
      }
    }
  }
  return rep;
}

// Same check over every entry of every parameter in `store`.
inline GradReport check_params(ParameterStore<double>& store, const std::function<Var<double>(Tape<double>&)>& build,
                               double h = kFdStep) {
  std::vector<Tensor<double>> stops;
  Gradients<double> grads(store);
  {
    Tape<double> tape;
    tape.capture_stops(&stops);
    Var<double> loss = build(tape);
    tape.backward(loss, grads);
  }
  auto eval = [&] {
    Tape<double> tape(false);
    tape.replay_stops(&stops);
    return build(tape).value()[0];
  };
  GradReport rep;
  for (std::size_t id = 0; id < store.size(); ++id) {
    Parameter<double>& p = store[id];
    const Tensor<double>* g = grads.get(id);
    for (std::size_t e = 0; e < p.value.size(); ++e) {
      const double x0 = p.value[e];
      p.value[e] = x0 + h;
      const double fp = eval();
      p.value[e] = x0 - h;
      const double fm = eval();
      p.value[e] = x0;
      const double num = (fp - fm) / (2 * h);
      const double ana = g ? (*g)[e] : 0.0;
      const double err = rel_error(ana, num);
      ++rep.checked;
      if (err > rep.max_rel) {
        rep.max_rel = err;
        rep.worst = p.name + "[" + std::to_string(e) + "] analytic=" + std::to_string(ana) +
                    " numeric=" + std::to_string(num);
      }
    }
  }
  return rep;
}

// Schema with the target item and category as the only contextual fields.
inline DatasetSchema tiny_schema(std::size_t items, std::size_t categories, std::size_t max_len) {
  DatasetSchema s;
  s.item_vocab = items;
  s.category_vocab = categories;
  s.max_len = max_len;
  s.fields = {{"target_item_id", FieldKind::kItem, 0}, {"target_category_id", FieldKind::kCategory, 0}};
  return s;
}

inline Sample random_sample(const DatasetSchema& s, std::size_t len, std::mt19937_64& rng) {
  auto id = [&](std::size_t vocab) {
    return static_cast<std::int32_t>(std::uniform_int_distribution<std::size_t>(2, vocab - 1)(rng));
  };
  Sample x;
  for (const ContextField& f : s.fields) {
    if (f.kind == FieldKind::kItem) {
      x.context.push_back(id(s.item_vocab));
    } else if (f.kind == FieldKind::kCategory) {
      x.context.push_back(id(s.category_vocab));
    } else {
      x.context.push_back(id(f.vocab));
    }
  }
  for (std::size_t j = 0; j < len; ++j) {
    x.items.push_back(id(s.item_vocab));
    x.categories.push_back(id(s.category_vocab));
  }
  x.label = static_cast<std::int32_t>(rng() & 1u);
  return x;
}

// Scalar loss over a non-scalar output: Σ out ⊙ R for a fixed random R.
inline Var<double> project(Var<double> out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<double> r = random_tensor(out.value().shape(), rng);
  return ops::sum(ops::mul(out, out.tape->constant(std::move(r))));
}

}  // namespace cdnet::testing

#endif  // CDNET_TESTS_TEST_UTIL_HPP_
