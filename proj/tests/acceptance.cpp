// End-to-end acceptance checks. Prints one line per criterion:
//   [PASS|FAIL|SKIP|N/A] <id> <title>: <details>
// Pass criterion ids as arguments to run a subset. Exit status is nonzero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cdnet/bench.hpp"
#include "cdnet/checkpoint.hpp"
#include "cdnet/core_behaviors.hpp"
#include "cdnet/interest.hpp"
#include "cdnet/metrics.hpp"
#include "cdnet/synth.hpp"
#include "cdnet/trainer.hpp"
#include "gradient_suite.hpp"

namespace cdnet::acceptance {
namespace {

using Clock = std::chrono::steady_clock;

enum class Status { kPass, kFail, kSkip, kNotApplicable };

struct Outcome {
  Status status;
  std::string details;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

void log_progress(const std::string& msg) { std::cerr << "  .. " << msg << std::endl; }

// ---------------------------------------------------------------------------

Outcome full_scale() {
  return {Status::kNotApplicable,
          "reported Taobao/industrial figures need the full 89M-record log and an unreported protocol; "
          "documentation targets only, replaced by the property checks below"};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_case;
  std::size_t entries = 0, cases = 0;
  for (const auto& c : testing::gradient_cases()) {
    // The ablation variants share every op with the full model.
    if (c.name.rfind("tiny_model_", 0) == 0 && c.name != "tiny_model_cdnet") continue;
    ++cases;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const testing::GradReport r = c.run(seed);
      entries += r.checked;
      if (r.max_rel > worst) {
        worst = r.max_rel;
        worst_case = c.name + " seed " + std::to_string(seed) + " (" + r.worst + ")";
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = worst <= 1e-4 && secs < 60.0;
  return {ok ? Status::kPass : Status::kFail,
          std::to_string(cases) + " cases x 20 seeds, " + std::to_string(entries) + " entries, max rel err " +
              fmt("%.2e", worst) + (worst_case.empty() ? "" : " at " + worst_case) + ", " + fmt("%.1f", secs) +
              " s (limit 60 s)"};
}

Outcome ste_contract() {
  std::mt19937_64 rng(2024);
  std::size_t forward_mismatch = 0, zero_violations = 0;
  double worst_grad = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = 1 + rng() % 24;
    const std::size_t d = 1 + rng() % 8;
    const std::size_t k = 1 + rng() % 12;
    Mask mask(len);
    for (auto& m : mask) m = static_cast<std::uint8_t>(rng() % 5 != 0);
    const Tensor<double> s = testing::random_tensor({len, d}, rng);
    Tensor<double> a = testing::random_tensor({len}, rng, 0.0, 1.0);
    if (trial % 3 == 0) {
      // Repeated values exercise the tie-break.
      for (std::size_t j = 1; j < len; j += 2) a[j] = a[j - 1];
    }
    for (std::size_t j = 0; j < len; ++j) {
      if (!mask[j]) a[j] = -1.0;
    }
    const Tensor<double> g = testing::random_tensor({k, d}, rng);

    Tape<double> tape;
    Var<double> sv = tape.leaf(s);
    Var<double> av = tape.leaf(a);
    const CoreSelection sel = top_k_select<double>(a.values(), mask, k);
    CoreBehaviors<double> core = ste_gather(sv, av, sel);

    // Forward: bit-identical to the hard gather, zero rows past k_eff.
    const Tensor<double>& out = core.rows.value();
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        const double want = r < sel.k_eff() ? s.at(sel.indices[r], c) : 0.0;
        if (std::memcmp(&want, &out.at(r, c), sizeof(double)) != 0) ++forward_mismatch;
      }
    }

    Var<double> loss = ops::sum(ops::mul(core.rows, tape.constant(g)));
    tape.backward(loss);
    const Tensor<double> ga = tape.grad(av);
    // Oracle: Gather(S ⊙ A, I_k) with I_k frozen has dL/da_j = <g_r, s_j>
    // for j = I_k[r] and zero elsewhere.
    std::vector<double> want(len, 0.0);
    for (std::size_t r = 0; r < sel.k_eff(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += g.at(r, c) * s.at(sel.indices[r], c);
      want[sel.indices[r]] = dot;
    }
    for (std::size_t j = 0; j < len; ++j) {
      if (sel.selected[j]) {
        worst_grad = std::max(worst_grad, std::abs(ga[j] - want[j]));
      } else if (ga[j] != 0.0) {
        ++zero_violations;
      }
    }
  }
  const bool ok = forward_mismatch == 0 && zero_violations == 0 && worst_grad <= 1e-10;
  return {ok ? Status::kPass : Status::kFail,
          "1000 inputs: " + std::to_string(forward_mismatch) + " forward bit mismatches, max |grad - relaxed| " +
              fmt("%.2e", worst_grad) + " (limit 1e-10), " + std::to_string(zero_violations) +
              " nonzero grads at unselected positions"};
}

Outcome histogram_properties() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  std::size_t sum_fail = 0, bin_fail = 0, boundary_values = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 1 + rng() % 10;
    const std::size_t len = 1 + rng() % 64;
    std::vector<double> a(len);
    Mask mask(len);
    std::size_t valid = 0;
    for (std::size_t j = 0; j < len; ++j) {
      mask[j] = static_cast<std::uint8_t>(rng() % 6 != 0);
      if (rng() % 3 == 0) {
        a[j] = static_cast<double>(rng() % (n + 1)) / static_cast<double>(n);
        ++boundary_values;
      } else {
        a[j] = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      }
      if (!mask[j]) a[j] = -1.0;
      valid += mask[j];
    }
    const auto counts = histogram<double>(a, mask, n);
    if (std::accumulate(counts.begin(), counts.end(), std::size_t{0}) != valid) ++sum_fail;
    // Oracle: linear scan over the bin definitions.
    std::vector<std::size_t> want(n, 0);
    for (std::size_t j = 0; j < len; ++j) {
      if (!mask[j]) continue;
      for (std::size_t b = 1; b <= n; ++b) {
        const double lo = static_cast<double>(b - 1) / static_cast<double>(n);
        const double hi = static_cast<double>(b) / static_cast<double>(n);
        const bool in = b == 1 ? (a[j] >= 0.0 && a[j] <= hi) : (a[j] > lo && a[j] <= hi);
        if (in) {
          ++want[b - 1];
          break;
        }
      }
    }
    if (want != counts) ++bin_fail;
  }
  const double secs = seconds_since(t0);
  const bool ok = sum_fail == 0 && bin_fail == 0 && secs < 5.0;
  return {ok ? Status::kPass : Status::kFail,
          "10000 vectors (" + std::to_string(boundary_values) + " exact j/n values): " + std::to_string(sum_fail) +
              " count-sum failures, " + std::to_string(bin_fail) + " bin mismatches, " + fmt("%.2f", secs) +
              " s (limit 5 s)"};
}

double brute_auc(const std::vector<EvalRecord>& r) {
  double wins = 0, pairs = 0;
  for (const auto& p : r) {
    if (!p.label) continue;
    for (const auto& q : r) {
      if (q.label) continue;
      pairs += 1;
      wins += p.score > q.score ? 1.0 : p.score == q.score ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

Outcome metric_oracles() {
  std::mt19937_64 rng(5);
  double auc_err = 0, gauc_err = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng() % 999;
    const std::size_t users = 1 + rng() % 20;
    const int levels = t % 2 ? 20 : 1000000;  // coarse scores give many ties
    std::vector<EvalRecord> recs(n);
    for (auto& r : recs) {
      r.user = static_cast<std::int32_t>(rng() % users);
      r.score = static_cast<double>(rng() % levels) / levels;
      r.label = static_cast<std::int32_t>(rng() % 3 == 0);
    }
    recs[0].label = 1;
    recs[1].label = 0;
    auc_err = std::max(auc_err, std::abs(auc(recs) - brute_auc(recs)));
    std::map<std::int32_t, std::vector<EvalRecord>> by_user;
    for (const auto& r : recs) by_user[r.user].push_back(r);
    double num = 0, den = 0;
    for (const auto& [u, g] : by_user) {
      const bool pos = std::any_of(g.begin(), g.end(), [](const EvalRecord& r) { return r.label; });
      const bool neg = std::any_of(g.begin(), g.end(), [](const EvalRecord& r) { return !r.label; });
      if (!pos || !neg) continue;
      num += static_cast<double>(g.size()) * brute_auc(g);
      den += static_cast<double>(g.size());
    }
    if (den > 0) gauc_err = std::max(gauc_err, std::abs(gauc(recs) - num / den));
  }
  const std::vector<EvalRecord> half{{1, 0.5, 1}, {1, 0.5, 0}, {2, 0.5, 0}};
  const double ll_err = std::abs(logloss(half) - std::log(2.0));
  const bool ok = auc_err <= 1e-12 && gauc_err <= 1e-12 && ll_err <= 1e-12;
  return {ok ? Status::kPass : Status::kFail,
          "200 datasets: max |AUC - brute| " + fmt("%.1e", auc_err) + ", max |GAUC - brute| " + fmt("%.1e", gauc_err) +
              ", |LogLoss(0.5) - ln 2| " + fmt("%.1e", ll_err)};
}

// ---------------------------------------------------------------------------
// Training experiments.

struct RunResult {
  MetricSet test;
  std::vector<double> losses;
};

RunResult train_and_test(const TrainConfig& cfg, const Dataset& data) {
  CdnetModel<float> model = build_variant<float>(cfg, data.schema);
  Adam<float> opt(model.params(), adam_options(cfg));
  TrainResult tr = train(model, opt, cfg, data.train, data.valid);
  return {evaluate(model, data.test).metrics, std::move(tr.batch_losses)};
}

double bayes_auc(const SynthConfig& sc, std::uint64_t seed) {
  const SynthResult all = synth_generate(sc, sc.n_train + sc.n_valid + sc.n_test, seed);
  std::vector<EvalRecord> recs;
  for (std::size_t i = sc.n_train + sc.n_valid; i < all.samples.size(); ++i) {
    recs.push_back({all.samples[i].user, all.logits[i], all.samples[i].label});
  }
  return auc(recs);
}

SynthConfig ablation_data() {
  SynthConfig sc;
  sc.n_users = 100;
  sc.n_items = 200;
  sc.n_categories = 50;
  sc.seq_len = 32;
  sc.max_relevant = 14;
  // 7 is where the log2 count bucket changes, so the threshold is visible
  // to a count embedding.
  sc.k_true = 7;
  sc.core_weight = 1.0;
  sc.distribution_weight = 3.0;
  sc.n_train = 50000;
  sc.n_valid = 5000;
  sc.n_test = 10000;
  return sc;
}

TrainConfig ablation_model() {
  TrainConfig c;
  c.d = 16;
  c.k = 4;
  c.n = 5;
  c.H = 1;
  c.heads = 2;
  c.head_hidden = {64, 32};
  c.batch_size = 256;
  c.lr = 3e-3;
  c.epochs = 4;
  c.patience = 2;
  return c;
}

Outcome ablation_ordering() {
  const auto t0 = Clock::now();
  const SynthConfig sc = ablation_data();
  const Variant variants[] = {Variant::kCdnet, Variant::kRGid, Variant::kRCore};
  double mean[3] = {0, 0, 0};
  double bayes = 0;
  constexpr int kSeeds = 5;
  for (int s = 1; s <= kSeeds; ++s) {
    const Dataset data = synth_dataset(sc, static_cast<std::uint64_t>(s));
    bayes += bayes_auc(sc, static_cast<std::uint64_t>(s)) / kSeeds;
    for (int v = 0; v < 3; ++v) {
      TrainConfig cfg = ablation_model();
      cfg.variant = variants[v];
      cfg.seed = static_cast<std::uint64_t>(s);
      const double a = train_and_test(cfg, data).test.auc;
      mean[v] += a / kSeeds;
      log_progress("ablation seed " + std::to_string(s) + " " + variant_name(variants[v]) + " auc " + fmt("%.4f", a));
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = mean[0] > mean[1] && mean[1] > mean[2] && mean[0] - mean[2] >= 0.01 && secs < 600.0;
  return {ok ? Status::kPass : Status::kFail,
          "mean test AUC over 5 seeds: cdnet " + fmt("%.4f", mean[0]) + ", rgid " + fmt("%.4f", mean[1]) + ", rcore " +
              fmt("%.4f", mean[2]) + " (cdnet - rcore " + fmt("%+.4f", mean[0] - mean[2]) +
              ", need >= 0.01); planted-logit AUC " + fmt("%.4f", bayes) + "; " + fmt("%.0f", secs) +
              " s (limit 600 s)"};
}

SynthConfig ratio_data() {
  SynthConfig sc;
  sc.n_users = 100;
  sc.n_items = 200;
  sc.n_categories = 50;
  sc.seq_len = 64;
  sc.max_relevant = 8;
  sc.k_true = 9;  // above max_relevant: the count term never fires
  sc.core_weight = 1.0;
  sc.distribution_weight = 0.0;
  sc.n_train = 20000;
  sc.n_valid = 2000;
  sc.n_test = 5000;
  return sc;
}

TrainConfig ratio_model() {
  TrainConfig c = ablation_model();
  c.L_max = 64;
  return c;
}

Outcome selection_ratio() {
  const auto t0 = Clock::now();
  const SynthConfig sc = ratio_data();
  const std::size_t ks[] = {8, 16, 32, 64};
  double mean[4] = {0, 0, 0, 0};
  constexpr int kSeeds = 5;
  for (int s = 1; s <= kSeeds; ++s) {
    const Dataset data = synth_dataset(sc, static_cast<std::uint64_t>(100 + s));
    for (int i = 0; i < 4; ++i) {
      TrainConfig cfg = ratio_model();
      cfg.k = ks[i];
      cfg.seed = static_cast<std::uint64_t>(s);
      const double a = train_and_test(cfg, data).test.auc;
      mean[i] += a / kSeeds;
      log_progress("ratio seed " + std::to_string(s) + " k/L " + std::to_string(ks[i]) + "/64 auc " + fmt("%.4f", a));
    }
  }
  const double best = std::max({mean[0], mean[1], mean[2]});
  const bool ok = best - mean[3] >= 0.005;
  return {ok ? Status::kPass : Status::kFail,
          "mean test AUC over 5 seeds at L=64: k/L 1/8 " + fmt("%.4f", mean[0]) + ", 1/4 " + fmt("%.4f", mean[1]) +
              ", 1/2 " + fmt("%.4f", mean[2]) + ", 1 " + fmt("%.4f", mean[3]) + " (best - full " +
              fmt("%+.4f", best - mean[3]) + ", need >= 0.005); " + fmt("%.0f", seconds_since(t0)) + " s"};
}

Outcome complexity() {
  const auto t0 = Clock::now();
  const std::size_t lengths[] = {600};
  const BenchReport rep = run_bench(lengths, 16, 20, 32, 2, ExecMode::kSerial, 0.2);
  const BenchRow& r = rep.rows.front();
  // Exact rational comparison: quad_cdnet / quad_full == 37² / 620².
  const bool exact = r.cdnet.quadratic_macs * 620ull * 620ull == r.full.quadratic_macs * 37ull * 37ull;
  const bool formula = r.cdnet.total_macs == attention_macs(37, 32) && r.full.total_macs == attention_macs(620, 32);
  const double secs = seconds_since(t0);
  const bool ok = exact && formula && r.wall_ratio < 0.05 && secs < 60.0;
  return {ok ? Status::kPass : Status::kFail,
          "L=600 k=16 N_f=20 d=32: counted quadratic ratio " + fmt("%.6f", r.counted_ratio) + " vs (37/620)^2 " +
              fmt("%.6f", r.predicted_ratio) + (exact ? " (exact)" : " (MISMATCH)") + ", totals " +
              (formula ? "match" : "do not match") + " 2T^2d+4Td^2, wall ratio " + fmt("%.4f", r.wall_ratio) +
              " (limit 0.05), " + fmt("%.1f", secs) + " s"};
}

Outcome determinism() {
  SynthConfig sc = ablation_data();
  sc.n_train = 4000;
  sc.n_valid = 500;
  sc.n_test = 1000;
  const Dataset data = synth_dataset(sc, 9);
  TrainConfig cfg = ablation_model();
  cfg.epochs = 2;
  cfg.seed = 11;

  auto run = [&](ExecMode mode, CdnetModel<float>* keep) {
    CdnetModel<float> model = build_variant<float>(cfg, data.schema);
    Adam<float> opt(model.params(), adam_options(cfg));
    TrainOptions o;
    o.mode = mode;
    TrainResult tr = train(model, opt, cfg, data.train, data.valid, o);
    if (keep) *keep = std::move(model);
    return tr.batch_losses;
  };
  CdnetModel<float> model = build_variant<float>(cfg, data.schema);
  const auto a = run(ExecMode::kParallel, &model);
  const auto b = run(ExecMode::kParallel, nullptr);
  const auto c = run(ExecMode::kSerial, nullptr);
  auto same = [](const std::vector<double>& x, const std::vector<double>& y) {
    return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  };

  const std::string path = (std::filesystem::temp_directory_path() / "cdnet_acceptance.ckpt").string();
  save_checkpoint(path, model, cfg);
  const LoadedCheckpoint loaded = load_checkpoint(path);
  std::filesystem::remove(path);
  const auto p0 = model.predict_all(data.test);
  const auto p1 = loaded.model.predict_all(data.test);
  const bool ckpt = p0.size() == p1.size() && std::memcmp(p0.data(), p1.data(), p0.size() * sizeof(float)) == 0;
  const bool ok = same(a, b) && same(a, c) && ckpt;
  return {ok ? Status::kPass : Status::kFail,
          std::to_string(a.size()) + "-batch loss traces: repeat run " + (same(a, b) ? "bit-identical" : "DIFFERS") +
              ", serial reference " + (same(a, c) ? "bit-identical" : "DIFFERS") + "; checkpoint round trip over " +
              std::to_string(p0.size()) + " predictions " + (ckpt ? "bit-identical" : "DIFFERS")};
}

// Train one epoch on a prepared log; returns (last-batch loss / first-batch loss, test AUC).
std::pair<double, double> smoke_on_log(const std::vector<InteractionRecord>& records) {
  SampleOptions so;
  so.max_len = 50;
  SampleBuild built = build_samples(records, so);
  const Dataset data = temporal_split(std::move(built.samples), built.schema);
  TrainConfig cfg;
  cfg.d = 16;
  cfg.k = 8;
  cfg.H = 1;
  cfg.head_hidden = {64, 32};
  cfg.batch_size = 128;
  cfg.lr = 3e-3;
  cfg.epochs = 1;
  const RunResult r = train_and_test(cfg, data);
  // Window means smooth batch noise at both ends of the epoch.
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(10, r.losses.size() / 4));
  const double first = std::accumulate(r.losses.begin(), r.losses.begin() + static_cast<std::ptrdiff_t>(w), 0.0) / w;
  const double last = std::accumulate(r.losses.end() - static_cast<std::ptrdiff_t>(w), r.losses.end(), 0.0) / w;
  return {last / first, r.test.auc};
}

Outcome taobao_smoke() {
  const char* path = std::getenv("CDNET_TAOBAO_SAMPLE");
  if (path == nullptr || !std::filesystem::exists(path)) {
    SynthLogConfig lc;
    lc.n_interactions = 100000;
    const auto [ratio, a] = smoke_on_log(synth_log(lc, 3));
    return {Status::kSkip,
            "set CDNET_TAOBAO_SAMPLE to a UserBehavior.csv subsample to run; same pipeline on a synthetic "
            "100k-interaction log: loss ratio " +
                fmt("%.3f", ratio) + ", test AUC " + fmt("%.4f", a)};
  }
  ParseLimits limits;
  limits.max_records = 100000;
  const ParseResult parsed = parse_log(std::string(path), limits);
  const auto [ratio, a] = smoke_on_log(parsed.records);
  const bool ok = ratio <= 0.8 && a > 0.55;
  return {ok ? Status::kPass : Status::kFail, std::to_string(parsed.records.size()) + " interactions: loss ratio " +
                                                  fmt("%.3f", ratio) + " (limit 0.8), test AUC " + fmt("%.4f", a) +
                                                  " (floor 0.55)"};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace cdnet::acceptance

int main(int argc, char** argv) {
  using namespace cdnet::acceptance;
  const std::vector<Criterion> criteria = {
      {1, "full-scale results", full_scale},
      {2, "gradient suite", gradient_suite},
      {3, "straight-through gather contract", ste_contract},
      {4, "histogram properties", histogram_properties},
      {5, "metric oracles", metric_oracles},
      {6, "ablation ordering", ablation_ordering},
      {7, "selection ratio direction", selection_ratio},
      {8, "attention complexity", complexity},
      {9, "determinism and persistence", determinism},
      {10, "behavior-log smoke run", taobao_smoke},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("threw: ") + e.what()};
    }
    const char* tag = o.status == Status::kPass   ? "PASS"
                      : o.status == Status::kFail ? "FAIL"
                      : o.status == Status::kSkip ? "SKIP"
                                                  : "N/A ";
    if (o.status == Status::kFail) ++failures;
    std::cout << "[" << tag << "] " << c.id << " " << c.title << ": " << o.details << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
