#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdnet/bench.hpp"
#include "cdnet/checkpoint.hpp"
#include "cdnet/config.hpp"
#include "cdnet/data.hpp"
#include "cdnet/errors.hpp"
#include "cdnet/synth.hpp"
#include "cdnet/trainer.hpp"

namespace {

using cdnet::TrainConfig;

struct CommonFlags {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::size_t> k, n, L, epochs;
  std::vector<std::string> settings;
  bool serial = false;
};

void add_model_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--variant", f.variant, "cdnet, rcore, rgid or meanpool");
  cmd->add_option("--k", f.k, "core behaviors");
  cmd->add_option("--n", f.n, "similarity bins");
  cmd->add_option("--L", f.L, "maximum sequence length");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--set", f.settings, "extra config override, key=value (repeatable)");
  cmd->add_flag("--serial", f.serial, "run the serial reference path instead of OpenMP");
}

TrainConfig resolve_config(const CommonFlags& f) {
  TrainConfig cfg = f.config.empty() ? TrainConfig{} : cdnet::load_config_file(f.config);
  for (const std::string& kv : f.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw cdnet::ConfigError("--set expects key=value, got '" + kv + "'");
    cdnet::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.variant) cfg.variant = cdnet::parse_variant(*f.variant);
  if (f.k) cfg.k = *f.k;
  if (f.n) cfg.n = *f.n;
  if (f.L) cfg.L_max = *f.L;
  if (f.epochs) cfg.epochs = *f.epochs;
  cfg.validate();
  return cfg;
}

cdnet::TrainOptions train_options(const CommonFlags& f, std::ostream* trace) {
  cdnet::TrainOptions o;
  o.mode = f.serial ? cdnet::ExecMode::kSerial : cdnet::ExecMode::kParallel;
  o.trace = trace;
  return o;
}

std::string metrics_json(const cdnet::MetricSet& m, const std::string& split) {
  nlohmann::json j;
  j["split"] = split;
  j["auc"] = m.auc;
  j["gauc"] = std::isfinite(m.gauc) ? nlohmann::json(m.gauc) : nlohmann::json(nullptr);
  j["logloss"] = m.logloss;
  return j.dump();
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw cdnet::ConfigError("expected a number in list, got '" + item + "'");
    }
  }
  if (out.empty()) throw cdnet::ConfigError("empty value list");
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

int cmd_gen(const std::string& synth_config, const std::vector<std::string>& settings, std::uint64_t seed,
            const std::string& out, const std::string& log_out, std::size_t interactions) {
  if (!log_out.empty()) {
    cdnet::SynthLogConfig lc;
    lc.n_interactions = interactions;
    const auto records = cdnet::synth_log(lc, seed);
    std::ofstream f(log_out);
    if (!f) throw cdnet::IoError("cannot write '" + log_out + "'");
    cdnet::write_log_csv(f, records);
    std::cout << "wrote " << records.size() << " interactions to " << log_out << "\n";
  }
  if (!out.empty()) {
    cdnet::SynthConfig sc;
    if (!synth_config.empty()) {
      std::ifstream f(synth_config);
      if (!f) throw cdnet::IoError("cannot open synth config '" + synth_config + "'");
      std::stringstream ss;
      ss << f.rdbuf();
      sc = cdnet::parse_synth_text(ss.str());
    }
    for (const std::string& kv : settings) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw cdnet::ConfigError("--set expects key=value, got '" + kv + "'");
      cdnet::apply_synth_setting(sc, kv.substr(0, eq), kv.substr(eq + 1));
    }
    const cdnet::Dataset data = cdnet::synth_dataset(sc, seed);
    cdnet::write_sample_cache(out, data);
    std::cout << "wrote " << data.train.size() << "/" << data.valid.size() << "/" << data.test.size()
              << " train/valid/test samples to " << out << "\n";
  }
  return 0;
}

int cmd_prepare(const std::string& log, const std::string& out, std::size_t max_len, std::size_t neg_ratio,
                std::size_t max_records, std::uint64_t seed) {
  cdnet::ParseLimits limits;
  limits.max_records = max_records;
  const cdnet::ParseResult parsed = cdnet::parse_log(log, limits);
  cdnet::SampleOptions opts;
  opts.max_len = max_len;
  opts.neg_ratio = neg_ratio;
  opts.seed = seed;
  cdnet::SampleBuild built = cdnet::build_samples(parsed.records, opts);
  const cdnet::Dataset data = cdnet::temporal_split(std::move(built.samples), built.schema);
  cdnet::write_sample_cache(out, data);
  std::cout << "parsed " << parsed.records.size() << " records (" << parsed.malformed << " malformed); "
            << built.positives << " positives, " << built.negatives << " negatives; " << data.train.size() << "/"
            << data.valid.size() << "/" << data.test.size() << " train/valid/test -> " << out << "\n";
  return 0;
}

int cmd_train(const CommonFlags& f) {
  const TrainConfig cfg = resolve_config(f);
  const cdnet::Dataset data = cdnet::read_sample_cache(f.data);
  std::filesystem::create_directories(f.out);
  std::ofstream trace(f.out + "/trace.jsonl");
  std::ofstream losses(f.out + "/losses.txt");
  if (!trace || !losses) throw cdnet::IoError("cannot write into '" + f.out + "'");

  cdnet::CdnetModel<float> model = cdnet::build_variant<float>(cfg, data.schema);
  cdnet::Adam<float> opt(model.params(), cdnet::adam_options(cfg));
  const cdnet::TrainResult r = cdnet::train(model, opt, cfg, data.train, data.valid, train_options(f, &trace));
  losses.precision(9);
  for (double l : r.batch_losses) losses << l << "\n";
  cdnet::save_checkpoint(f.out + "/model.ckpt", model, cfg, &opt);
  {
    std::ofstream c(f.out + "/config.txt");
    c << cdnet::config_to_text(cfg);
  }
  std::cout << "trained " << r.epochs_run << " epochs, " << r.batch_losses.size() << " batches";
  if (r.best_epoch) std::cout << ", best validation epoch " << *r.best_epoch;
  std::cout << "\n";
  if (!data.test.empty()) std::cout << metrics_json(cdnet::evaluate(model, data.test).metrics, "test") << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_path, const std::string& split) {
  cdnet::LoadedCheckpoint ck = cdnet::load_checkpoint(checkpoint);
  const cdnet::Dataset data = cdnet::read_sample_cache(data_path);
  const std::vector<cdnet::Sample>* samples = &data.test;
  if (split == "valid") samples = &data.valid;
  else if (split == "train") samples = &data.train;
  else if (split != "test") throw cdnet::ConfigError("unknown split '" + split + "'");
  std::cout << metrics_json(cdnet::evaluate(ck.model, *samples).metrics, split) << "\n";
  return 0;
}

int cmd_ablate(const CommonFlags& f, std::size_t seeds) {
  const TrainConfig base = resolve_config(f);
  const cdnet::Dataset data = cdnet::read_sample_cache(f.data);
  std::cout << "variant\tauc\tgauc\tlogloss\n";
  for (cdnet::Variant v : {cdnet::Variant::kCdnet, cdnet::Variant::kRCore, cdnet::Variant::kRGid}) {
    cdnet::MetricSet mean{0, 0, 0};
    for (std::size_t s = 0; s < seeds; ++s) {
      TrainConfig cfg = base;
      cfg.variant = v;
      cfg.seed = base.seed + s;
      cdnet::CdnetModel<float> model = cdnet::build_variant<float>(cfg, data.schema);
      cdnet::Adam<float> opt(model.params(), cdnet::adam_options(cfg));
      cdnet::train(model, opt, cfg, data.train, data.valid, train_options(f, nullptr));
      const cdnet::MetricSet m = cdnet::evaluate(model, data.test).metrics;
      mean.auc += m.auc / static_cast<double>(seeds);
      mean.gauc += m.gauc / static_cast<double>(seeds);
      mean.logloss += m.logloss / static_cast<double>(seeds);
    }
    std::cout << cdnet::variant_name(v) << '\t' << fmt(mean.auc) << '\t' << fmt(mean.gauc) << '\t'
              << fmt(mean.logloss) << "\n";
  }
  return 0;
}

int cmd_sweep(const CommonFlags& f, const std::string& axis, const std::string& values) {
  const TrainConfig base = resolve_config(f);
  const cdnet::Dataset data = cdnet::read_sample_cache(f.data);
  const std::vector<double> vals = parse_list(values);
  const auto rows = cdnet::sweep(cdnet::parse_sweep_axis(axis), vals, base, data, train_options(f, nullptr));
  std::cout << axis << "\tk\tn\tauc\tgauc\tlogloss\terror\n";
  for (const auto& r : rows) {
    std::cout << r.value << '\t' << r.k << '\t' << r.n << '\t';
    if (r.ok) {
      std::cout << fmt(r.test.auc) << '\t' << fmt(r.test.gauc) << '\t' << fmt(r.test.logloss) << "\t\n";
    } else {
      std::cout << "\t\t\t" << r.error << "\n";
    }
  }
  return 0;
}

int cmd_bench(const std::string& lengths, std::size_t k, std::size_t nf, std::size_t d, std::size_t heads, bool omp) {
  std::vector<std::size_t> ls;
  for (double v : parse_list(lengths)) ls.push_back(static_cast<std::size_t>(v));
  const auto report =
      cdnet::run_bench(ls, k, nf, d, heads, omp ? cdnet::ExecMode::kParallel : cdnet::ExecMode::kSerial);
  std::cout << cdnet::to_table(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CDNet click-through-rate model: data preparation, training, evaluation and benchmarks"};
  app.require_subcommand(1);
  CommonFlags f;

  std::string synth_config, log_out;
  std::vector<std::string> synth_settings;
  std::uint64_t gen_seed = 1;
  std::size_t interactions = 100000;
  auto* gen = app.add_subcommand("gen", "generate a planted-signal sample cache and/or a synthetic behavior log");
  gen->add_option("--config", synth_config, "synthetic-data config file")->check(CLI::ExistingFile);
  gen->add_option("--set", synth_settings, "synthetic-data override, key=value (repeatable)");
  gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("--out", f.out, "sample cache to write");
  gen->add_option("--log", log_out, "behavior log (csv) to write");
  gen->add_option("--interactions", interactions, "log length");

  std::size_t prep_len = 50, neg_ratio = 1, max_records = 0;
  std::uint64_t prep_seed = 1;
  auto* prep = app.add_subcommand("prepare", "turn a behavior log into a sample cache");
  prep->add_option("--data", f.data, "behavior log (csv)")->required()->check(CLI::ExistingFile);
  prep->add_option("--out", f.out, "sample cache to write")->required();
  prep->add_option("--L", prep_len, "maximum sequence length");
  prep->add_option("--neg-ratio", neg_ratio, "negatives per positive");
  prep->add_option("--max-records", max_records, "stop after this many records (0 = all)");
  prep->add_option("--seed", prep_seed, "negative-sampling seed");

  auto* train = app.add_subcommand("train", "train a model; writes checkpoint, trace and loss curve into --out");
  add_model_flags(train, f);
  train->add_option("--data", f.data, "sample cache")->required()->check(CLI::ExistingFile);
  train->add_option("--out", f.out, "output directory")->required();

  std::string checkpoint, split = "test";
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", f.data, "sample cache")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split, "train, valid or test");

  std::size_t seeds = 1;
  auto* ablate = app.add_subcommand("ablate", "cdnet vs rcore vs rgid on identical data and seeds");
  add_model_flags(ablate, f);
  ablate->add_option("--data", f.data, "sample cache")->required()->check(CLI::ExistingFile);
  ablate->add_option("--seeds", seeds, "seeds averaged per variant")->check(CLI::PositiveNumber);

  std::string axis = "k_ratio", values;
  auto* sweep = app.add_subcommand("sweep", "one model per value of k/L or n");
  add_model_flags(sweep, f);
  sweep->add_option("--data", f.data, "sample cache")->required()->check(CLI::ExistingFile);
  sweep->add_option("--axis", axis, "k_ratio or n");
  sweep->add_option("--values", values, "comma-separated values")->required();

  std::string lengths = "600,1200";
  std::size_t bk = 16, bnf = 20, bd = 32, bheads = 2;
  bool omp = false;
  auto* bench = app.add_subcommand("bench", "attention cost of the CDNet token set vs the full sequence");
  bench->add_option("--lengths", lengths, "comma-separated sequence lengths L");
  bench->add_option("--k", bk, "core behaviors");
  bench->add_option("--nf", bnf, "contextual fields");
  bench->add_option("--d", bd, "embedding width");
  bench->add_option("--heads", bheads, "attention heads");
  bench->add_flag("--omp", omp, "use the OpenMP kernels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen) {
      if (f.out.empty() && log_out.empty()) throw cdnet::ConfigError("gen needs --out and/or --log");
      return cmd_gen(synth_config, synth_settings, gen_seed, f.out, log_out, interactions);
    }
    if (*prep) return cmd_prepare(f.data, f.out, prep_len, neg_ratio, max_records, prep_seed);
    if (*train) return cmd_train(f);
    if (*eval) return cmd_eval(checkpoint, f.data, split);
    if (*ablate) return cmd_ablate(f, seeds);
    if (*sweep) return cmd_sweep(f, axis, values);
    if (*bench) return cmd_bench(lengths, bk, bnf, bd, bheads, omp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
