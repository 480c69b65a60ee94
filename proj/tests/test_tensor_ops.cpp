#include <doctest.h>

#include <cmath>
#include <random>

#include "cdnet/kernels.hpp"
#include "cdnet/ops.hpp"
#include "cdnet/tape.hpp"
#include "test_util.hpp"

namespace cdnet {
namespace {

using testing::random_tensor;

TEST_CASE("tensor shape bookkeeping") {
  Tensor<float> t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  t.at(1, 2) = 5.0f;
  CHECK(t[5] == 5.0f);
  CHECK(Tensor<float>({4}).rows() == 1);
  CHECK_THROWS_AS(t.reshape({4, 2}), DimensionError);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, {1.0f, 2.0f}), DimensionError);
  t.reshape({3, 2});
  CHECK(t.shape() == Shape{3, 2});
  CHECK(shape_str({3, 2}) == "[3x2]");
}

TEST_CASE("shape mismatches raise dimension errors") {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2, 3}));
  auto b = tape.constant(Tensor<double>({2, 2}));
  CHECK_THROWS_AS(ops::matmul(a, b), DimensionError);
  CHECK_THROWS_AS(ops::add(a, b), DimensionError);
  CHECK_THROWS_AS(ops::add_bias(a, tape.constant(Tensor<double>({2}))), DimensionError);
  CHECK_THROWS_AS(ops::slice_cols(a, 2, 5), IndexError);
  CHECK_THROWS_AS(ops::concat_rows<double>({a, b}), DimensionError);
}

TEST_CASE("backward needs a scalar loss") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::vector({1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(ops::scale(x, 2.0)), ContractError);
}

TEST_CASE("gradients accumulate across uses of a node") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::vector({3.0}));
  auto y = ops::add(ops::mul(x, x), x);  // x² + x
  tape.backward(ops::sum(y));
  CHECK(tape.grad(x)[0] == doctest::Approx(7.0));
}

TEST_CASE("no-grad tapes record values only") {
  Tape<double> tape(false);
  auto x = tape.leaf(Tensor<double>::vector({1.0, -2.0}));
  auto y = ops::relu(x);
  CHECK_FALSE(tape.requires_grad(y.id));
  CHECK(y.value()[0] == 1.0);
  CHECK(y.value()[1] == 0.0);
}

TEST_CASE("masked softmax gives masked columns exactly zero") {
  std::mt19937_64 rng(1);
  Tape<double> tape;
  auto x = tape.constant(random_tensor({4, 6}, rng, -5, 5));
  const Mask mask{1, 0, 1, 0, 1, 1};
  const Tensor<double>& y = ops::softmax_rows(x, mask).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 6; ++c) {
      if (!mask[c]) CHECK(y.at(r, c) == 0.0);
      total += y.at(r, c);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("layer norm standardizes rows before gain and bias") {
  std::mt19937_64 rng(2);
  Tape<double> tape;
  auto x = tape.constant(random_tensor({3, 8}, rng, -3, 3));
  Tensor<double> g({8}), b({8});
  g.fill(1.0);
  const Tensor<double>& y = ops::layer_norm(x, tape.constant(g), tape.constant(b)).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 8; ++c) mean += y.at(r, c) / 8;
    for (std::size_t c = 0; c < 8; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean) / 8;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("cosine scores map similarity to [0, 1]") {
  Tape<double> tape;
  auto f = tape.constant(Tensor<double>::vector({1.0, 2.0, 0.0}));
  auto s = tape.constant(Tensor<double>::matrix(5, 3,
                                                {1.0, 2.0, 0.0,     // same direction
                                                 -2.0, 1.0, 0.0,    // orthogonal
                                                 -1.0, -2.0, 0.0,   // opposite
                                                 0.0, 0.0, 0.0,     // zero vector
                                                 4.0, 4.0, 4.0}));  // masked
  const Tensor<double>& a = ops::cosine_scores(f, s, Mask{1, 1, 1, 1, 0}).value();
  CHECK(a[0] == doctest::Approx(1.0));
  CHECK(a[1] == doctest::Approx(0.5));
  CHECK(a[2] == doctest::Approx(0.0));
  CHECK(a[3] == 0.5);
  CHECK(a[4] == -1.0);
}

TEST_CASE("scaling the target leaves cosine scores unchanged") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    Tape<double> tape;
    const Tensor<double> f = random_tensor({6}, rng);
    auto s = tape.constant(random_tensor({10, 6}, rng));
    Tensor<double> fc = f;
    const double c = std::exp(std::uniform_real_distribution<double>(-5, 5)(rng));
    for (double& v : fc.values()) v *= c;
    const Mask mask(10, 1);
    const Tensor<double> a = ops::cosine_scores(tape.constant(f), s, mask).value();
    const Tensor<double> b = ops::cosine_scores(tape.constant(fc), s, mask).value();
    for (std::size_t j = 0; j < 10; ++j) CHECK(std::abs(a[j] - b[j]) < 1e-12);
  }
}

TEST_CASE("binary cross-entropy") {
  Tape<double> tape;
  SUBCASE("half probability") {
    const std::vector<double> y{1.0};
    CHECK(ops::bce_loss(tape.constant(Tensor<double>::vector({0.5})), std::span<const double>(y)).value()[0] ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("exact predictions are clamped") {
    const std::vector<double> y{1.0, 0.0};
    const double l = ops::bce_loss(tape.constant(Tensor<double>::vector({1.0, 0.0})), std::span<const double>(y))
                         .value()[0];
    CHECK(l > 0.0);
    CHECK(l < 2e-7);
  }
  SUBCASE("mean over the batch") {
    const std::vector<double> y{1.0, 0.0};
    const double l = ops::bce_loss(tape.constant(Tensor<double>::vector({0.8, 0.2})), std::span<const double>(y))
                         .value()[0];
    CHECK(l == doctest::Approx(-std::log(0.8)).epsilon(1e-14));
  }
  SUBCASE("label count must match") {
    const std::vector<double> y{1.0};
    CHECK_THROWS_AS(ops::bce_loss(tape.constant(Tensor<double>::vector({0.5, 0.5})), std::span<const double>(y)),
                    DimensionError);
  }
}

TEST_CASE("token_linear applies one weight matrix per token") {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>::matrix(2, 2, {1, 2, 3, 4}));
  auto w = tape.constant(Tensor<double>({2, 2, 1}, {1, 0, 0, 1}));  // token 0 picks col 0, token 1 col 1
  auto b = tape.constant(Tensor<double>({2, 1}, {10, 20}));
  const Tensor<double>& y = ops::token_linear(x, w, b).value();
  CHECK(y.shape() == Shape{2, 1});
  CHECK(y[0] == 11.0);
  CHECK(y[1] == 24.0);
}

TEST_CASE("serial and OpenMP kernels agree bit for bit") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(-1, 1);
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 1 + rng() % 40, p = 1 + rng() % 40, q = 1 + rng() % 40;
    std::vector<float> a(m * p), b(p * q), bt(q * p), c1(m * q), c2(m * q);
    for (float& v : a) v = u(rng);
    for (float& v : b) v = u(rng);
    for (float& v : bt) v = u(rng);
    kernels::gemm_nn(a.data(), b.data(), c1.data(), m, p, q, false);
    kernels::omp::gemm_nn(a.data(), b.data(), c2.data(), m, p, q, false);
    CHECK(c1 == c2);
    kernels::gemm_nt(a.data(), bt.data(), c1.data(), m, p, q, false);
    kernels::omp::gemm_nt(a.data(), bt.data(), c2.data(), m, p, q, false);
    CHECK(c1 == c2);
    Mask mask(q);
    for (auto& v : mask) v = static_cast<std::uint8_t>(rng() % 3 != 0);
    std::vector<float> y1(m * q), y2(m * q);
    kernels::softmax_rows(c1.data(), y1.data(), m, q, mask);
    kernels::omp::softmax_rows(c1.data(), y2.data(), m, q, mask);
    CHECK(y1 == y2);
  }
}

TEST_CASE("matmul multiply-adds are counted exactly") {
  kernels::MacCounter counter;
  {
    kernels::ScopedMacCount scope(counter);
    Tape<float> tape(false);
    auto a = tape.constant(Tensor<float>({3, 5}));
    auto b = tape.constant(Tensor<float>({5, 7}));
    ops::matmul(a, b);
  }
  CHECK(counter.macs == 3u * 5u * 7u);
  // Uninstalled: nothing is counted.
  Tape<float> tape(false);
  ops::matmul(tape.constant(Tensor<float>({2, 2})), tape.constant(Tensor<float>({2, 2})));
  CHECK(counter.macs == 105u);
}

TEST_CASE("sparse gradient rows are tracked and cleared") {
  ParameterStore<double> store;
  const std::size_t id = store.add("emb", Tensor<double>({5, 2}));
  Gradients<double> g(store);
  const std::vector<double> row{1.0, 2.0};
  g.add_row(id, 3, row);
  g.add_row(id, 1, row);
  g.add_row(id, 3, row);
  CHECK(g.is_sparse(id));
  CHECK(g.touched_rows(id) == std::vector<std::size_t>{3, 1});
  CHECK(g.get(id)->at(3, 1) == 4.0);
  Gradients<double> total(store);
  g.add_to(total);
  CHECK(total.get(id)->at(1, 0) == 1.0);
  g.zero();
  CHECK_FALSE(g.touched(id));
  g.add_row(id, 0, row);
  CHECK(g.get(id)->at(3, 1) == 0.0);
}

TEST_CASE("embedding lookup routes gradients to the looked-up rows only") {
  ParameterStore<double> store;
  std::mt19937_64 rng(5);
  const std::size_t id = store.add("emb", random_tensor({6, 3}, rng));
  Tape<double> tape;
  const std::vector<std::int32_t> ids{4, 2, 4};
  auto rows = ops::embedding_lookup(tape, store, id, std::span<const std::int32_t>(ids));
  CHECK(rows.value().at(0, 1) == store[id].value.at(4, 1));
  Gradients<double> g = tape.backward(ops::sum(rows));
  std::vector<std::size_t> touched = g.touched_rows(id);
  std::sort(touched.begin(), touched.end());
  CHECK(touched == std::vector<std::size_t>{2, 4});
  CHECK(g.get(id)->at(4, 0) == 2.0);
  CHECK(g.get(id)->at(0, 0) == 0.0);
  const std::vector<std::int32_t> bad{6};
  CHECK_THROWS_AS(ops::embedding_lookup(tape, store, id, std::span<const std::int32_t>(bad)), IndexError);
}

}  // namespace
}  // namespace cdnet
