// Copyright 2026 The exbias Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end. Kept in a header so tests can drive commands
// in-process through run_cli().
//
// Every command writes manifest.json next to its outputs. Passing that
// manifest back through --config replays the run with the recorded config,
// seed and inputs; explicit flags still win.

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "exbias/common.hpp"
#include "exbias/estimators.hpp"
#include "exbias/evaluation.hpp"
#include "exbias/feedback.hpp"
#include "exbias/graph.hpp"
#include "exbias/models.hpp"
#include "exbias/synthesis.hpp"
#include "exbias/training.hpp"
#include "exbias/validation.hpp"

#ifndef EXBIAS_VERSION
#define EXBIAS_VERSION "0.1.0"
#endif

namespace exbias::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int {
  kOk = 0,
  kChecksFailed = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4,
};

struct Invocation {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::size_t threads = 1;
  std::string data;
  std::string checkpoint;
  std::string estimators;
};

/// Hooks for tests.
struct Overrides {
  ClosedForms closed_forms;
};

namespace detail {

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("config: cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + p.string() + " is not valid JSON (" +
                      e.what() + ")");
  }
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

inline void write_json(const fs::path& p, const json& j) {
  write_text(p, j.dump(2) + "\n");
}

inline bool is_manifest(const json& j) {
  return j.is_object() && j.contains("command") && j.contains("config") &&
         j.contains("version");
}

/// Config and inputs after applying a manifest (if given) and the flags.
struct Resolved {
  json config = json::object();
  std::optional<std::uint64_t> seed;
  std::string data;
  std::string checkpoint;
};

inline Resolved resolve(const Invocation& inv) {
  Resolved r;
  if (!inv.config_path.empty()) {
    const json j = read_json_file(inv.config_path);
    if (is_manifest(j)) {
      if (j.at("command") != inv.command) {
        throw ConfigError("config: manifest is for '" +
                          j.at("command").get<std::string>() + "', not '" +
                          inv.command + "'");
      }
      r.config = j.at("config");
      if (j.contains("seed") && j.at("seed").is_number_unsigned()) {
        r.seed = j.at("seed").get<std::uint64_t>();
      }
      const json inputs = j.value("inputs", json::object());
      r.data = inputs.value("data", "");
      r.checkpoint = inputs.value("checkpoint", "");
    } else {
      if (!j.is_object()) throw ConfigError("config: expected a JSON object");
      r.config = j;
    }
  }
  if (inv.seed) r.seed = inv.seed;
  if (!inv.data.empty()) r.data = inv.data;
  if (!inv.checkpoint.empty()) r.checkpoint = inv.checkpoint;
  return r;
}

struct ManifestWriter {
  const Invocation& inv;
  std::string started = utc_now();

  void write(const fs::path& out, const json& config, std::uint64_t seed,
             const json& inputs, const std::vector<std::string>& outputs) const {
    json m{{"command", inv.command},
           {"config", config},
           {"seed", seed},
           {"inputs", inputs},
           {"outputs", outputs},
           {"threads", inv.threads},
           {"version", EXBIAS_VERSION},
           {"started_at", started},
           {"finished_at", utc_now()}};
    write_json(out / "manifest.json", m);
  }
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  if (path.empty()) throw ConfigError("checkpoint: required");
  std::ifstream in(path);
  if (!in) throw DataError("checkpoint not found: " + path);
  try {
    return checkpoint_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
}

inline LoadedData require_data(const std::string& dir) {
  if (dir.empty()) throw ConfigError("data: required");
  return load_data_dir(dir);
}

}  // namespace detail

// --- Commands ------------------------------------------------------------

inline int cmd_generate(const Invocation& inv, std::ostream& log) {
  const detail::ManifestWriter mw{inv};
  auto r = detail::resolve(inv);
  if (r.seed) r.config["seed"] = *r.seed;
  const SyntheticSpec spec = SyntheticSpec::from_json(r.config);
  const GroundTruthWorld world = generate_world(spec);
  Rng rng(spec.seed ^ 0xa0761d6478bd642fULL);
  const SampledGraphs sampled = sample_outcomes(world, rng);
  const fs::path out(inv.out);
  save_world(out, world, sampled,
             json{{"seed", spec.seed}, {"target_mean_y", spec.target_mean_y}});
  mw.write(out, spec.to_json(), spec.seed, json::object(),
           {"nodes.jsonl", "edges.tsv", "true_edges.tsv", "pi.csv",
            "truth.json"});
  log << "generated " << spec.n << " nodes, " << sampled.observed.num_edges()
      << " observed / " << sampled.latent.num_edges() << " latent links in "
      << out.string() << "\n";
  return kOk;
}

inline int cmd_train(const Invocation& inv, std::ostream& log) {
  const detail::ManifestWriter mw{inv};
  auto r = detail::resolve(inv);
  if (r.seed) r.config["seed"] = *r.seed;
  const TrainConfig cfg = TrainConfig::from_json(r.config);
  const LoadedData data = detail::require_data(r.data);
  const TrainReport rep = train(data.observed, cfg);
  const fs::path out(inv.out);
  fs::create_directories(out);
  detail::write_json(out / "checkpoint.json",
                     checkpoint_to_json(rep.link, rep.propensity));
  detail::write_json(out / "train_report.json", rep.to_json());
  mw.write(out, cfg.to_json(), cfg.seed, json{{"data", r.data}},
           {"checkpoint.json", "train_report.json"});
  log << "trained " << to_string(cfg.objective) << " model for "
      << rep.epochs_run << " epochs; final loss "
      << (rep.loss_trace.empty() ? 0.0 : rep.loss_trace.back()) << "\n";
  return kOk;
}

inline int cmd_estimate_risk(const Invocation& inv, std::ostream& log) {
  const detail::ManifestWriter mw{inv};
  auto r = detail::resolve(inv);
  std::vector<std::string> names;
  if (!inv.estimators.empty()) {
    names = detail::split_list(inv.estimators);
  } else if (r.config.contains("estimators")) {
    names = r.config.at("estimators").get<std::vector<std::string>>();
  }
  if (names.empty()) throw ConfigError("estimators: list is empty");
  const std::string loss_name = r.config.value("loss", "zero_one");
  LossSpec loss;
  if (loss_name == "zero_one") {
    loss = LossSpec::zero_one();
  } else if (loss_name == "log") {
    loss = LossSpec::log_loss();
  } else {
    throw ConfigError("loss: expected zero_one or log");
  }
  std::vector<Estimator> which;
  for (const auto& n : names) which.push_back(parse_estimator(n));

  const Checkpoint ck = detail::load_checkpoint(r.checkpoint);
  const LoadedData data = detail::require_data(r.data);
  const PairUniverse u(data.observed);
  const PairEstimates est =
      predict_pairs(ck.link, ck.propensity, data.observed, u, true);
  const auto o = observed_labels(data.observed, u);
  std::optional<double> truth_value;
  if (data.world) {
    truth_value = true_risk(data.world->pair_truth(u), est, loss).value;
  }
  json rows = json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "estimator,value,error\n";
  for (Estimator e : which) {
    double value = 0.0;
    if (e == Estimator::kTrue) {
      if (!truth_value) throw DataError("true risk needs a world directory");
      value = *truth_value;
    } else {
      value = estimate_risk(e, o, est, loss).value;
    }
    json row{{"estimator", std::string(to_string(e))}, {"value", value}};
    csv << to_string(e) << ',' << value << ',';
    if (truth_value) {
      row["error"] = value - *truth_value;
      csv << value - *truth_value;
    } else {
      row["error"] = nullptr;
    }
    csv << '\n';
    rows.push_back(row);
  }
  json report{{"loss", loss_name},
              {"n_pairs", u.size()},
              {"true_risk", truth_value ? json(*truth_value) : json(nullptr)},
              {"rows", rows}};
  const fs::path out(inv.out);
  fs::create_directories(out);
  detail::write_json(out / "risk.json", report);
  detail::write_text(out / "risk.csv", csv.str());
  json cfg{{"estimators", names}, {"loss", loss_name}};
  mw.write(out, cfg, 0, json{{"data", r.data}, {"checkpoint", r.checkpoint}},
           {"risk.json", "risk.csv"});
  log << "estimated " << which.size() << " risks over " << u.size()
      << " pairs\n";
  return kOk;
}

inline int cmd_evaluate(const Invocation& inv, std::ostream& log) {
  const detail::ManifestWriter mw{inv};
  auto r = detail::resolve(inv);
  json cfg{{"k", 100},
           {"threshold", 0.5},
           {"target", "observed"},
           {"exclude_known", false},
           {"test_fraction", 1.0},
           {"seed", 0}};
  for (auto it = r.config.begin(); it != r.config.end(); ++it) {
    if (!cfg.contains(it.key())) {
      throw ConfigError(it.key() + ": unknown evaluate option");
    }
    cfg[it.key()] = *it;
  }
  if (r.seed) cfg["seed"] = *r.seed;
  EvalOptions opts;
  double test_fraction = 1.0;
  std::string target;
  std::uint64_t seed = 0;
  try {
    opts.k = cfg.at("k").get<std::size_t>();
    opts.threshold = cfg.at("threshold").get<double>();
    opts.exclude_known = cfg.at("exclude_known").get<bool>();
    test_fraction = cfg.at("test_fraction").get<double>();
    target = cfg.at("target").get<std::string>();
    seed = cfg.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("evaluate config: ") + e.what());
  }
  if (!(test_fraction > 0.0 && test_fraction <= 1.0)) {
    throw ConfigError("test_fraction: must lie in (0, 1]");
  }
  if (target != "observed" && target != "true") {
    throw ConfigError("target: expected observed or true");
  }
  const Checkpoint ck = detail::load_checkpoint(r.checkpoint);
  const LoadedData data = detail::require_data(r.data);
  const std::size_t n = data.observed.num_nodes();
  std::vector<std::uint32_t> sources;
  if (test_fraction >= 1.0) {
    for (std::uint32_t i = 0; i < n; ++i) sources.push_back(i);
  } else {
    sources = random_node_split(n, 1.0 - test_fraction, 0.0, seed).test;
  }
  if (target == "true" && !data.latent) {
    throw DataError("target true needs true_edges.tsv");
  }
  const Graph& g = target == "true" ? *data.latent : data.observed;
  const MetricReport rep =
      evaluate_model(ck.link, g, sources, opts, &data.observed, target);
  const fs::path out(inv.out);
  fs::create_directories(out);
  detail::write_json(out / "metrics.json", rep.to_json());
  detail::write_text(out / "metrics.csv",
                     MetricReport::csv_header() + "\n" + rep.to_csv_row() + "\n");
  mw.write(out, cfg, seed, json{{"data", r.data}, {"checkpoint", r.checkpoint}},
           {"metrics.json", "metrics.csv"});
  log << "evaluated " << sources.size() << " sources against " << target
      << " links\n";
  return kOk;
}

inline int cmd_feedback(const Invocation& inv, std::ostream& log) {
  const detail::ManifestWriter mw{inv};
  auto r = detail::resolve(inv);
  const std::string kind = r.config.value("kind", "simplex");
  const fs::path out(inv.out);
  fs::create_directories(out);
  if (kind == "simplex") {
    json body = r.config;
    body.erase("kind");
    if (r.seed) body["seed"] = *r.seed;
    const FeedbackConfig cfg = FeedbackConfig::from_json(body);
    const Trajectory tr = run_trajectory(cfg);
    std::ostringstream csv;
    tr.write_csv(csv);
    detail::write_text(out / "trajectory.csv", csv.str());
    json resolved = cfg.to_json();
    resolved["kind"] = "simplex";
    mw.write(out, resolved, cfg.seed, json::object(), {"trajectory.csv"});
    log << "ran " << cfg.steps << " feedback steps\n";
    return kOk;
  }
  if (kind != "pipeline") throw ConfigError("kind: expected simplex or pipeline");

  const std::string mode_name = r.config.value("mode", "naive");
  const FeedbackMode mode = parse_feedback_mode(mode_name);
  PipelineConfig pcfg =
      PipelineConfig::from_json(r.config.value("pipeline", json::object()));
  if (r.seed) pcfg.seed = *r.seed;
  json train_json = r.config.value("train", json::object());
  if (!train_json.contains("estimator")) {
    train_json["estimator"] = mode == FeedbackMode::kNaive ? "none" : "w";
  }
  const TrainConfig tcfg = TrainConfig::from_json(train_json);
  const LoadedData data = detail::require_data(r.data);
  if (!data.world) throw DataError("pipeline needs a world directory with truth files");
  const PipelineReport rep =
      feedback_with_trained_model(*data.world, data.observed, tcfg, pcfg);
  std::ostringstream csv;
  rep.write_csv(csv);
  detail::write_text(out / "pipeline.csv", csv.str());
  json summary{{"same_fraction", rep.same_fraction},
               {"same_fraction_by_group", rep.same_fraction_by_group},
               {"links_formed", rep.links_formed}};
  if (rep.same_fraction.size() >= 3) {
    const TrendTest t = spearman_trend(rep.same_fraction);
    summary["trend"] = {{"rho", t.rho}, {"p_value", t.p_value}, {"n", t.n}};
  }
  detail::write_json(out / "pipeline.json", summary);
  json resolved{{"kind", "pipeline"},
                {"mode", std::string(to_string(mode))},
                {"pipeline", pcfg.to_json()},
                {"train", tcfg.to_json()}};
  mw.write(out, resolved, pcfg.seed, json{{"data", r.data}},
           {"pipeline.csv", "pipeline.json"});
  log << "ran " << pcfg.iterations << " pipeline iterations\n";
  return kOk;
}

inline int cmd_validate(const Invocation& inv, std::ostream& log,
                        const Overrides& hooks) {
  const detail::ManifestWriter mw{inv};
  auto r = detail::resolve(inv);
  ValidationOptions opts;
  try {
    opts.seed = r.config.value("seed", opts.seed);
    opts.pair_configs = r.config.value("pair_configs", opts.pair_configs);
    opts.ordering_configs = r.config.value("ordering_configs", opts.ordering_configs);
    opts.pairs_per_config = r.config.value("pairs_per_config", opts.pairs_per_config);
    opts.bias_configs = r.config.value("bias_configs", opts.bias_configs);
    opts.tolerance = r.config.value("tolerance", opts.tolerance);
    opts.skew_trials = r.config.value("skew_trials", opts.skew_trials);
    opts.kappa_seeds = r.config.value("kappa_seeds", opts.kappa_seeds);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("validate config: ") + e.what());
  }
  if (r.seed) opts.seed = *r.seed;
  const ValidationReport rep = run_validation(opts, hooks.closed_forms);
  const fs::path out(inv.out);
  fs::create_directories(out);
  detail::write_json(out / "validation.json", rep.to_json());
  json resolved{{"seed", opts.seed},
                {"pair_configs", opts.pair_configs},
                {"ordering_configs", opts.ordering_configs},
                {"pairs_per_config", opts.pairs_per_config},
                {"bias_configs", opts.bias_configs},
                {"tolerance", opts.tolerance},
                {"skew_trials", opts.skew_trials},
                {"kappa_seeds", opts.kappa_seeds}};
  mw.write(out, resolved, opts.seed, json::object(), {"validation.json"});
  for (const auto& c : rep.checks) {
    log << (c.passed ? "[PASS] " : "[FAIL] ") << c.id << ": " << c.detail << "\n";
  }
  return rep.all_passed() ? kOk : kChecksFailed;
}

// --- Entry point ---------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out,
                   std::ostream& err, const Overrides& hooks = {}) {
  CLI::App app{"Link prediction under exposure bias: world generation, "
               "training, risk estimation, evaluation and feedback simulation"};
  app.require_subcommand(1);
  Invocation inv;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Root seed (overrides config)");
  app.add_option("--config", inv.config_path, "Config JSON or a manifest.json to replay");
  app.add_option("--out", inv.out, "Output directory");
  app.add_option("--threads", inv.threads, "Worker cap (commands run sequentially)")
      ->check(CLI::PositiveNumber);

  auto add = [&](const char* name, const char* desc) {
    auto* sub = app.add_subcommand(name, desc);
    sub->fallthrough();
    return sub;
  };
  add("generate", "Generate a semi-synthetic world");
  auto* train_cmd = add("train", "Train link and propensity models");
  train_cmd->add_option("--data", inv.data, "Graph or world directory");
  auto* risk_cmd = add("estimate-risk", "Estimate risk with several estimators");
  risk_cmd->add_option("--data", inv.data, "Graph or world directory");
  risk_cmd->add_option("--checkpoint", inv.checkpoint, "checkpoint.json");
  risk_cmd->add_option("--estimators", inv.estimators,
                       "Comma list of naive,w,pu,ap,true");
  auto* eval_cmd = add("evaluate", "Classification and ranking metrics");
  eval_cmd->add_option("--data", inv.data, "Graph or world directory");
  eval_cmd->add_option("--checkpoint", inv.checkpoint, "checkpoint.json");
  auto* fb_cmd = add("feedback", "Feedback-loop simulation");
  fb_cmd->add_option("--data", inv.data, "World directory (pipeline kind)");
  add("validate", "Run the oracle check suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfigError;
  }
  if (seed_opt->count() > 0) inv.seed = seed;
  inv.command = app.get_subcommands().front()->get_name();

  try {
    if (inv.command == "generate") return cmd_generate(inv, out);
    if (inv.command == "train") return cmd_train(inv, out);
    if (inv.command == "estimate-risk") return cmd_estimate_risk(inv, out);
    if (inv.command == "evaluate") return cmd_evaluate(inv, out);
    if (inv.command == "feedback") return cmd_feedback(inv, out);
    if (inv.command == "validate") return cmd_validate(inv, out, hooks);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }
  err << "unknown command\n";
  return kConfigError;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out,
                   std::ostream& err, const Overrides& hooks = {}) {
  std::vector<const char*> argv;
  argv.push_back("exbias");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err, hooks);
}

}  // namespace exbias::cli
