#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "cdnet/interaction.hpp"
#include "cdnet/ops.hpp"
#include "test_util.hpp"

namespace cdnet {
namespace {

using testing::random_tensor;

TEST_CASE("token assembly order and mask") {
  std::mt19937_64 rng(41);
  Tape<double> tape;
  CoreBehaviors<double> core{tape.constant(random_tensor({16, 4}, rng)), Mask(16, 0)};
  std::fill_n(core.core_mask.begin(), 3, std::uint8_t{1});
  auto gid = tape.constant(random_tensor({4}, rng));
  auto ctx = tape.constant(random_tensor({5, 4}, rng));

  const TokenMatrix<double> full = build_tokens<double>(core, gid, ctx);
  CHECK(full.tokens() == 22);
  CHECK(full.x.value().shape() == Shape{22, 4});
  CHECK(std::count(full.mask.begin(), full.mask.end(), 0) == 13);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(full.x.value().at(16, c) == gid.value()[c]);
    CHECK(full.x.value().at(17, c) == ctx.value().at(0, c));
    CHECK(full.x.value().at(2, c) == core.rows.value().at(2, c));
  }

  CHECK(build_tokens<double>(std::nullopt, gid, ctx).tokens() == 6);
  CHECK(build_tokens<double>(core, std::nullopt, ctx).tokens() == 21);

  auto narrow = tape.constant(random_tensor({3}, rng));
  CHECK_THROWS_AS(build_tokens<double>(core, narrow, ctx), DimensionError);
  CoreBehaviors<double> wide{tape.constant(random_tensor({2, 5}, rng)), Mask{1, 1}};
  CHECK_THROWS_AS(build_tokens<double>(wide, gid, ctx), DimensionError);
}

struct Stack {
  ParameterStore<double> store;
  std::mt19937_64 rng{42};
  InteractionBlock<double> block;
  PredictionHead<double> head;
  Stack(std::size_t tokens, std::size_t d, std::size_t heads)
      : block(store, "block0", tokens, d, heads, 2, rng), head(store, tokens * d, {6}, rng) {
    // Non-trivial layer-norm parameters and biases.
    for (auto& p : store) {
      if (p.name.find(".b") != std::string::npos || p.name.find("ln") != std::string::npos) {
        for (double& v : p.value.values()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
      }
    }
  }
  double predict(const Tensor<double>& x, const Mask& mask, std::vector<Tensor<double>>* attn = nullptr) const {
    Tape<double> tape(false);
    Var<double> h = block.forward(tape, store, tape.constant(x), mask, attn);
    return head.forward(tape, store, h).value()[0];
  }
};

TEST_CASE("attention rows sum to one and skip masked keys") {
  std::mt19937_64 rng(43);
  Stack s(6, 8, 2);
  const Mask mask{1, 0, 1, 1, 0, 1};
  std::vector<Tensor<double>> attn;
  s.predict(random_tensor({6, 8}, rng), mask, &attn);
  REQUIRE(attn.size() == 2);
  for (const auto& w : attn) {
    CHECK(w.shape() == Shape{6, 6});
    for (std::size_t r = 0; r < 6; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 6; ++c) {
        if (!mask[c]) CHECK(w.at(r, c) == 0.0);
        total += w.at(r, c);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("masked slot content does not reach the prediction") {
  std::mt19937_64 rng(44);
  Stack s(5, 4, 2);
  const Mask mask{1, 0, 0, 1, 1};
  for (int t = 0; t < 20; ++t) {
    Tensor<double> x = random_tensor({5, 4}, rng);
    const double base = s.predict(x, mask);
    for (std::size_t c = 0; c < 4; ++c) {
      x.at(1, c) = std::uniform_real_distribution<double>(-50, 50)(rng);
      x.at(2, c) = std::uniform_real_distribution<double>(-50, 50)(rng);
    }
    CHECK(s.predict(x, mask) == base);
  }
}

TEST_CASE("permuting tokens with their feed-forward weights leaves the output unchanged") {
  std::mt19937_64 rng(45);
  for (std::size_t tokens = 2; tokens <= 6; ++tokens) {
    const std::size_t d = 4;
    Stack s(tokens, d, 2);
    const Tensor<double> x = random_tensor({tokens, d}, rng);
    const Mask mask(tokens, 1);
    const double base = s.predict(x, mask);

    std::vector<std::size_t> perm(tokens);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    // New token t is old token perm[t]; every per-token tensor follows.
    auto permute_blocks = [&](Tensor<double>& t) {
      const std::size_t block = t.size() / tokens;
      const Tensor<double> old = t;
      for (std::size_t i = 0; i < tokens; ++i) {
        std::copy_n(old.data() + perm[i] * block, block, t.data() + i * block);
      }
    };
    Stack p(tokens, d, 2);
    for (const char* name : {"block0.ffn.w1", "block0.ffn.b1", "block0.ffn.w2", "block0.ffn.b2", "head.fc0.w"}) {
      permute_blocks(p.store[*p.store.find(name)].value);
    }
    Tensor<double> px = x;
    permute_blocks(px);
    CHECK(p.predict(px, mask) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("prediction head output") {
  std::mt19937_64 rng(46);
  SUBCASE("zero weights give one half") {
    ParameterStore<double> store;
    PredictionHead<double> head(store, 12, {5, 3}, rng);
    for (auto& p : store) p.value.fill(0.0);
    Tape<double> tape(false);
    CHECK(head.forward(tape, store, tape.constant(random_tensor({3, 4}, rng))).value()[0] == 0.5);
  }
  SUBCASE("strictly inside (0, 1)") {
    ParameterStore<double> store;
    PredictionHead<double> head(store, 8, {4}, rng);
    for (int t = 0; t < 50; ++t) {
      Tape<double> tape(false);
      const double y = head.forward(tape, store, tape.constant(random_tensor({2, 4}, rng, -3, 3))).value()[0];
      CHECK(y > 0.0);
      CHECK(y < 1.0);
    }
  }
}

TEST_CASE("block configuration errors") {
  ParameterStore<double> store;
  std::mt19937_64 rng(47);
  CHECK_THROWS_AS(InteractionBlock<double>(store, "a", 3, 6, 4, 2, rng), ConfigError);
  CHECK_THROWS_AS(InteractionBlock<double>(store, "b", 3, 6, 2, 0, rng), ConfigError);
  InteractionBlock<double> ok(store, "c", 3, 6, 2, 2, rng);
  Tape<double> tape(false);
  CHECK_THROWS_AS(ok.forward(tape, store, tape.constant(Tensor<double>({4, 6})), Mask(4, 1)), DimensionError);
}

}  // namespace
}  // namespace cdnet
