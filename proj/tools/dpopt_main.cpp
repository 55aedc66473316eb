// Copyright 2026 The dpopt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpopt/accountant.hpp"
#include "dpopt/clipopt.hpp"
#include "dpopt/diagnostics.hpp"
#include "dpopt/dpcore.hpp"
#include "dpopt/errors.hpp"
#include "dpopt/harness.hpp"
#include "dpopt/io.hpp"
#include "dpopt/planner.hpp"

namespace {

namespace fs = std::filesystem;
using dpopt::ClipMode;
using dpopt::ConfigError;
using dpopt::io::format_cell;
using dpopt::io::format_double;
using dpopt::io::KeyValueConfig;
using json = nlohmann::json;

constexpr double kOracleTolerance = 1e-9;

struct CommonArgs {
  std::string config_path;
  std::string output_dir = ".";
  std::string format = "both";
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path,
                  "Key-value config file; inline flags take precedence");
  cmd->add_option("--output-dir", args->output_dir,
                  "Directory for output files (created if missing)");
  cmd->add_option("--format", args->format, "Output format")
      ->check(CLI::IsMember({"csv", "ndjson", "both"}));
}

KeyValueConfig load_config(const CommonArgs& args, const std::string& command,
                           const std::vector<std::string>& allowed) {
  KeyValueConfig config;
  if (!args.config_path.empty()) {
    config = KeyValueConfig::parse_file(args.config_path);
    std::vector<std::string> with_command = allowed;
    with_command.push_back("command");
    config.require_known_keys(with_command);
    if (config.has("command") && config.get_string("command") != command) {
      throw ConfigError("config file is for command `" +
                        config.get_string("command") + "`, running `" +
                        command + "`");
    }
  }
  return config;
}

void write_outputs_dir(const CommonArgs& args) {
  fs::create_directories(args.output_dir);
}

void write_manifest(const CommonArgs& args, const std::string& command,
                    KeyValueConfig resolved) {
  resolved.set("command", command);
  dpopt::io::write_text_file(
      (fs::path(args.output_dir) / "manifest.txt").string(),
      resolved.serialize());
}

bool want_csv(const CommonArgs& args) { return args.format != "ndjson"; }
bool want_json(const CommonArgs& args) { return args.format != "csv"; }

ClipMode make_clip(const std::string& mode, double param) {
  if (mode == "standard") return ClipMode::standard(param);
  if (mode == "normalized") return ClipMode::normalized(param);
  if (mode == "auto_s") return ClipMode::auto_s(param);
  throw ConfigError("unknown clip mode `" + mode +
                    "` (expected standard, normalized or auto_s)");
}

ClipMode parse_clip_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw ConfigError("clip spec `" + spec + "` must look like mode:param");
  }
  return make_clip(spec.substr(0, colon),
                   dpopt::io::parse_double(spec.substr(colon + 1), "clip spec"));
}

std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

std::string join_longs(const std::vector<long>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

json summary_to_json(const dpopt::diagnostics::GradNormSummary& s) {
  json j;
  j["count"] = s.count;
  j["zero_count"] = s.zero_count;
  json q;
  for (std::size_t i = 0; i < s.kQuantileProbs.size(); ++i) {
    q[format_cell(s.kQuantileProbs[i])] = s.quantiles[i];
  }
  j["quantiles"] = q;
  j["bin_edges"] = s.bin_edges;
  j["bin_counts"] = s.bin_counts;
  return j;
}

json metrics_to_json(const dpopt::harness::RunMetrics& m) {
  json j;
  j["steps"] = m.steps;
  j["sigma"] = m.sigma;
  j["sampling_rate"] = m.sampling_rate;
  j["realized_epsilon"] = std::isfinite(m.realized_epsilon)
                              ? json(m.realized_epsilon)
                              : json(nullptr);
  j["diverged"] = m.diverged;
  json epochs = json::array();
  for (const auto& e : m.epochs) {
    json ej;
    ej["epoch"] = e.epoch;
    ej["train_loss"] = e.train_loss;
    ej["test_macro_accuracy"] = e.test_macro_accuracy;
    json per_class = json::array();
    for (const auto& c : e.test_class_accuracy) {
      per_class.push_back({{"class_id", c.class_id},
                           {"count", c.count},
                           {"accuracy", c.accuracy}});
    }
    ej["test_class_accuracy"] = per_class;
    ej["grad_norms"] = summary_to_json(e.grad_norms);
    epochs.push_back(ej);
  }
  j["epochs"] = epochs;
  return j;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateArgs {
  CommonArgs common;
  double epsilon = 0.0;
  double delta = 1e-5;
  double sampling_rate = 0.0;
  long steps = 0;
};

int run_calibrate(const CalibrateArgs& args, const CLI::App* cmd) {
  KeyValueConfig config =
      load_config(args.common, "calibrate",
                  {"epsilon", "delta", "sampling_rate", "steps"});
  const double epsilon = cmd->count("--epsilon")
                             ? args.epsilon
                             : config.get_double("epsilon");
  const double delta =
      cmd->count("--delta") ? args.delta : config.get_double("delta", 1e-5);
  const double q = cmd->count("--sampling-rate")
                       ? args.sampling_rate
                       : config.get_double("sampling_rate");
  const long steps =
      cmd->count("--steps") ? args.steps : config.get_long("steps");

  const double sigma =
      dpopt::accountant::calibrate_sigma(epsilon, delta, q, steps);
  const double roundtrip = dpopt::accountant::account(sigma, q, steps, delta);

  write_outputs_dir(args.common);
  KeyValueConfig resolved;
  resolved.set_double("epsilon", epsilon);
  resolved.set_double("delta", delta);
  resolved.set_double("sampling_rate", q);
  resolved.set_long("steps", steps);
  write_manifest(args.common, "calibrate", resolved);

  json record;
  record["epsilon_target"] = epsilon;
  record["delta"] = delta;
  record["sampling_rate"] = q;
  record["steps"] = steps;
  record["sigma"] = sigma;
  record["epsilon"] = roundtrip;
  dpopt::io::write_text_file(
      (fs::path(args.common.output_dir) / "calibrate.json").string(),
      record.dump(2) + "\n");

  std::cout << "sigma=" << format_cell(sigma)
            << " epsilon=" << format_cell(roundtrip)
            << " epsilon_target=" << format_cell(epsilon)
            << " delta=" << format_cell(delta)
            << " sampling_rate=" << format_cell(q) << " steps=" << steps
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// plan

struct PlanArgs {
  CommonArgs common;
  long dataset_size = 0;
  int epochs = 0;
  double delta = 1e-5;
  std::vector<double> epsilons;
  std::vector<long> batch_sizes;
  long min_steps = 20;
  double plateau_tolerance = 0.05;
};

int run_plan(const PlanArgs& args, const CLI::App* cmd) {
  KeyValueConfig config = load_config(
      args.common, "plan",
      {"dataset_size", "epochs", "delta", "epsilons", "batch_sizes",
       "min_steps", "plateau_tolerance"});
  dpopt::planner::PlanConfig plan_config;
  plan_config.dataset_size = static_cast<std::size_t>(
      cmd->count("--dataset-size") ? args.dataset_size
                                   : config.get_long("dataset_size"));
  plan_config.epochs = static_cast<int>(
      cmd->count("--epochs") ? args.epochs : config.get_long("epochs"));
  plan_config.delta =
      cmd->count("--delta") ? args.delta : config.get_double("delta", 1e-5);
  plan_config.epsilon_targets = cmd->count("--epsilons")
                                    ? args.epsilons
                                    : config.get_double_list("epsilons");
  plan_config.batch_candidates = cmd->count("--batch-sizes")
                                     ? args.batch_sizes
                                     : config.get_long_list("batch_sizes");
  plan_config.min_steps = cmd->count("--min-steps")
                              ? args.min_steps
                              : config.get_long("min_steps", 20);
  plan_config.plateau_tolerance =
      cmd->count("--plateau-tolerance")
          ? args.plateau_tolerance
          : config.get_double("plateau_tolerance", 0.05);

  const std::vector<dpopt::planner::BatchPlanRow> rows =
      dpopt::planner::plan(plan_config);

  write_outputs_dir(args.common);
  KeyValueConfig resolved;
  resolved.set_long("dataset_size",
                    static_cast<long>(plan_config.dataset_size));
  resolved.set_long("epochs", plan_config.epochs);
  resolved.set_double("delta", plan_config.delta);
  resolved.set("epsilons", join_doubles(plan_config.epsilon_targets));
  resolved.set("batch_sizes", join_longs(plan_config.batch_candidates));
  resolved.set_long("min_steps", plan_config.min_steps);
  resolved.set_double("plateau_tolerance", plan_config.plateau_tolerance);
  write_manifest(args.common, "plan", resolved);

  if (want_csv(args.common)) {
    std::string csv = dpopt::io::csv_line(
        {"epsilon", "batch_size", "sampling_rate", "steps", "sigma",
         "cumulative_noise", "effective_noise_std", "per_step_avg_noise_std",
         "calibrated", "meets_min_steps", "recommended"});
    for (const auto& row : rows) {
      csv += dpopt::io::csv_line(
          {format_cell(row.epsilon), std::to_string(row.batch_size),
           format_cell(row.sampling_rate), std::to_string(row.steps),
           format_cell(row.sigma), format_cell(row.cumulative_noise),
           format_cell(row.effective_noise_std),
           format_cell(row.per_step_avg_noise_std),
           row.calibrated ? "1" : "0", row.meets_min_steps ? "1" : "0",
           row.recommended ? "1" : "0"});
    }
    dpopt::io::write_text_file(
        (fs::path(args.common.output_dir) / "plan.csv").string(), csv);
  }
  if (want_json(args.common)) {
    json doc = json::array();
    for (const auto& row : rows) {
      json r;
      r["epsilon"] = row.epsilon;
      r["batch_size"] = row.batch_size;
      r["sampling_rate"] = row.sampling_rate;
      r["steps"] = row.steps;
      r["sigma"] = std::isnan(row.sigma) ? json(nullptr) : json(row.sigma);
      r["cumulative_noise"] = std::isnan(row.cumulative_noise)
                                  ? json(nullptr)
                                  : json(row.cumulative_noise);
      r["effective_noise_std"] = std::isnan(row.effective_noise_std)
                                     ? json(nullptr)
                                     : json(row.effective_noise_std);
      r["per_step_avg_noise_std"] = std::isnan(row.per_step_avg_noise_std)
                                        ? json(nullptr)
                                        : json(row.per_step_avg_noise_std);
      r["calibrated"] = row.calibrated;
      r["meets_min_steps"] = row.meets_min_steps;
      r["recommended"] = row.recommended;
      doc.push_back(r);
    }
    dpopt::io::write_text_file(
        (fs::path(args.common.output_dir) / "plan.json").string(),
        doc.dump(2) + "\n");
  }

  // One recommendation line per epsilon, matching the row flags.
  std::vector<double> epsilons;
  for (const auto& row : rows) {
    if (epsilons.empty() || epsilons.back() != row.epsilon) {
      epsilons.push_back(row.epsilon);
    }
  }
  for (double eps : epsilons) {
    long recommended = 0;
    for (const auto& row : rows) {
      if (row.epsilon == eps && row.recommended) recommended = row.batch_size;
    }
    if (recommended > 0) {
      std::cout << "recommended: epsilon=" << format_cell(eps)
                << " batch_size=" << recommended << "\n";
    } else {
      std::cout << "recommended: epsilon=" << format_cell(eps)
                << " none (no candidate meets min_steps="
                << plan_config.min_steps << ")\n";
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// solve-clip

struct SolveClipArgs {
  CommonArgs common;
  std::string grads_file;
  double sigma = 0.0;
  bool oracle = false;
  long oracle_points = 100001;
};

int run_solve_clip(const SolveClipArgs& args, const CLI::App* cmd) {
  KeyValueConfig config = load_config(
      args.common, "solve-clip",
      {"grads_file", "sigma", "oracle", "oracle_points"});
  const std::string grads_file = cmd->count("--grads-file")
                                     ? args.grads_file
                                     : config.get_string("grads_file");
  const double sigma =
      cmd->count("--sigma") ? args.sigma : config.get_double("sigma");
  const bool oracle = cmd->count("--oracle")
                          ? args.oracle
                          : config.get_long("oracle", 0) != 0;
  const long oracle_points = cmd->count("--oracle-points")
                                 ? args.oracle_points
                                 : config.get_long("oracle_points", 100001);

  const dpopt::Matrix grads = dpopt::io::read_gradients_file(grads_file);
  const dpopt::clipopt::ClipSolution sol =
      dpopt::clipopt::solve_optimal_c(grads, sigma);

  write_outputs_dir(args.common);
  KeyValueConfig resolved;
  resolved.set("grads_file", grads_file);
  resolved.set_double("sigma", sigma);
  resolved.set_long("oracle", oracle ? 1 : 0);
  resolved.set_long("oracle_points", oracle_points);
  write_manifest(args.common, "solve-clip", resolved);

  json doc;
  doc["c_star"] = sol.c_star;
  doc["mse"] = sol.mse;
  doc["degenerate"] = sol.degenerate;
  doc["clipped_indices"] = sol.clipped_indices;
  doc["g_aggregate"] = sol.g_aggregate;
  doc["unit_aggregate"] = sol.unit_aggregate;
  doc["segment_lo"] = sol.segment_lo;
  doc["segment_hi"] = std::isfinite(sol.segment_hi) ? json(sol.segment_hi)
                                                    : json(nullptr);

  int exit_code = 0;
  if (oracle) {
    if (oracle_points < 2) throw ConfigError("oracle_points must be >= 2");
    const std::vector<double> norms = dpopt::row_norms(grads);
    double max_norm = 0.0;
    double min_pos = std::numeric_limits<double>::infinity();
    for (double r : norms) {
      max_norm = std::max(max_norm, r);
      if (r > 0.0) min_pos = std::min(min_pos, r);
    }
    if (max_norm > 0.0) {
      const std::vector<double> grid = dpopt::clipopt::log_grid(
          std::max(1e-4 * min_pos, 1e-12), 2.0 * max_norm,
          static_cast<std::size_t>(oracle_points));
      const dpopt::clipopt::GridResult oracle_result =
          dpopt::clipopt::grid_oracle(grads, sigma, grid);
      doc["oracle_c_best"] = oracle_result.c_best;
      doc["oracle_mse_best"] = oracle_result.mse_best;
      const bool agree = sol.mse <= oracle_result.mse_best + kOracleTolerance;
      doc["oracle_agrees"] = agree;
      if (!agree) exit_code = 3;
    } else {
      doc["oracle_agrees"] = true;
    }
  }
  dpopt::io::write_text_file(
      (fs::path(args.common.output_dir) / "solution.json").string(),
      doc.dump(2) + "\n");

  std::cout << "c_star=" << format_cell(sol.c_star)
            << " mse=" << format_cell(sol.mse)
            << " clipped=" << sol.clipped_indices.size()
            << (sol.degenerate ? " degenerate=1" : "") << "\n";
  if (exit_code != 0) {
    std::cerr << "solve-clip: grid oracle disagrees with the solver\n";
  }
  return exit_code;
}

// ---------------------------------------------------------------------------
// shared task/train resolution

const std::vector<std::string> kTaskKeys = {
    "num_classes",      "raw_dim",         "feature_dim",
    "train_size",       "test_size",       "class_weights",
    "class_separation", "backbone_quality", "task_seed"};

struct TaskFlags {
  long num_classes = 4;
  long raw_dim = 24;
  long feature_dim = 16;
  long train_size = 2000;
  long test_size = 1000;
  std::string class_weights;
  double class_separation = 3.0;
  double backbone_quality = 1.0;
  std::uint64_t task_seed = 1;
};

void add_task_flags(CLI::App* cmd, TaskFlags* flags) {
  cmd->add_option("--num-classes", flags->num_classes, "Number of classes");
  cmd->add_option("--raw-dim", flags->raw_dim, "Raw input dimension");
  cmd->add_option("--feature-dim", flags->feature_dim, "Backbone output dim");
  cmd->add_option("--train-size", flags->train_size, "Train examples");
  cmd->add_option("--test-size", flags->test_size, "Test examples");
  cmd->add_option("--class-weights", flags->class_weights,
                  "Comma list of class probabilities (default uniform)");
  cmd->add_option("--class-separation", flags->class_separation,
                  "Distance of class means from the origin");
  cmd->add_option("--backbone-quality", flags->backbone_quality,
                  "Backbone quality in (0,1]; feature noise std is 1-quality");
  cmd->add_option("--task-seed", flags->task_seed, "Task generation seed");
}

dpopt::harness::SyntheticTaskConfig resolve_task(const TaskFlags& flags,
                                                 const CLI::App* cmd,
                                                 const KeyValueConfig& config,
                                                 KeyValueConfig& resolved) {
  dpopt::harness::SyntheticTaskConfig task;
  task.num_classes = static_cast<int>(cmd->count("--num-classes")
                                          ? flags.num_classes
                                          : config.get_long("num_classes", 4));
  task.raw_dim = static_cast<std::size_t>(
      cmd->count("--raw-dim") ? flags.raw_dim : config.get_long("raw_dim", 24));
  task.feature_dim = static_cast<std::size_t>(
      cmd->count("--feature-dim") ? flags.feature_dim
                                  : config.get_long("feature_dim", 16));
  task.train_size = static_cast<std::size_t>(
      cmd->count("--train-size") ? flags.train_size
                                 : config.get_long("train_size", 2000));
  task.test_size = static_cast<std::size_t>(
      cmd->count("--test-size") ? flags.test_size
                                : config.get_long("test_size", 1000));
  const std::string weights =
      cmd->count("--class-weights") ? flags.class_weights
                                    : config.get_string("class_weights", "");
  if (!weights.empty()) {
    KeyValueConfig tmp;
    tmp.set("class_weights", weights);
    task.class_weights = tmp.get_double_list("class_weights");
  }
  task.class_separation =
      cmd->count("--class-separation")
          ? flags.class_separation
          : config.get_double("class_separation", 3.0);
  task.backbone_quality =
      cmd->count("--backbone-quality")
          ? flags.backbone_quality
          : config.get_double("backbone_quality", 1.0);
  task.seed = cmd->count("--task-seed") ? flags.task_seed
                                        : config.get_u64("task_seed", 1);

  resolved.set_long("num_classes", task.num_classes);
  resolved.set_long("raw_dim", static_cast<long>(task.raw_dim));
  resolved.set_long("feature_dim", static_cast<long>(task.feature_dim));
  resolved.set_long("train_size", static_cast<long>(task.train_size));
  resolved.set_long("test_size", static_cast<long>(task.test_size));
  resolved.set("class_weights", join_doubles(task.class_weights));
  resolved.set_double("class_separation", task.class_separation);
  resolved.set_double("backbone_quality", task.backbone_quality);
  resolved.set_u64("task_seed", task.seed);
  return task;
}

dpopt::OptimizerState::Kind parse_optimizer(const std::string& name) {
  if (name == "sgd") return dpopt::OptimizerState::Kind::kSgd;
  if (name == "adam") return dpopt::OptimizerState::Kind::kAdam;
  throw ConfigError("unknown optimizer `" + name + "` (expected sgd or adam)");
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  CommonArgs common;
  TaskFlags task;
  double eta = 0.1;
  long batch_size = 128;
  std::string clip_mode = "normalized";
  double clip_param = 1.0;
  long epochs = 4;
  double epsilon = 0.0;
  double sigma = 0.0;
  double delta = 1e-5;
  std::string optimizer = "sgd";
  std::uint64_t seed = 1;
};

const std::vector<std::string> kTrainKeys = [] {
  std::vector<std::string> keys = kTaskKeys;
  for (const char* k : {"eta", "batch_size", "clip_mode", "clip_param",
                        "epochs", "epsilon", "sigma", "delta", "optimizer",
                        "seed"}) {
    keys.push_back(k);
  }
  return keys;
}();

int run_train(const TrainArgs& args, const CLI::App* cmd) {
  KeyValueConfig config = load_config(args.common, "train", kTrainKeys);
  KeyValueConfig resolved;
  const dpopt::harness::SyntheticTaskConfig task_config =
      resolve_task(args.task, cmd, config, resolved);

  dpopt::harness::TrainConfig train_config;
  train_config.eta =
      cmd->count("--eta") ? args.eta : config.get_double("eta", 0.1);
  train_config.batch_size = cmd->count("--batch-size")
                                ? args.batch_size
                                : config.get_long("batch_size", 128);
  const std::string clip_mode =
      cmd->count("--clip-mode") ? args.clip_mode
                                : config.get_string("clip_mode", "normalized");
  const double clip_param = cmd->count("--clip-param")
                                ? args.clip_param
                                : config.get_double("clip_param", 1.0);
  train_config.clip = make_clip(clip_mode, clip_param);
  train_config.epochs = static_cast<int>(
      cmd->count("--epochs") ? args.epochs : config.get_long("epochs", 4));
  train_config.epsilon =
      cmd->count("--epsilon") ? args.epsilon : config.get_double("epsilon", 0.0);
  train_config.sigma =
      cmd->count("--sigma") ? args.sigma : config.get_double("sigma", 0.0);
  train_config.delta =
      cmd->count("--delta") ? args.delta : config.get_double("delta", 1e-5);
  const std::string optimizer =
      cmd->count("--optimizer") ? args.optimizer
                                : config.get_string("optimizer", "sgd");
  train_config.optimizer = parse_optimizer(optimizer);
  train_config.seed =
      cmd->count("--seed") ? args.seed : config.get_u64("seed", 1);

  resolved.set_double("eta", train_config.eta);
  resolved.set_long("batch_size", train_config.batch_size);
  resolved.set("clip_mode", clip_mode);
  resolved.set_double("clip_param", clip_param);
  resolved.set_long("epochs", train_config.epochs);
  resolved.set_double("epsilon", train_config.epsilon);
  resolved.set_double("sigma", train_config.sigma);
  resolved.set_double("delta", train_config.delta);
  resolved.set("optimizer", optimizer);
  resolved.set_u64("seed", train_config.seed);

  const dpopt::harness::Task task = dpopt::harness::gen_task(task_config);
  const dpopt::harness::RunMetrics metrics =
      dpopt::harness::train(task, train_config);

  write_outputs_dir(args.common);
  write_manifest(args.common, "train", resolved);

  if (want_csv(args.common)) {
    std::string csv = dpopt::io::csv_line(
        {"epoch", "train_loss", "test_macro_accuracy", "grad_norm_p05",
         "grad_norm_p25", "grad_norm_p50", "grad_norm_p75", "grad_norm_p95"});
    for (const auto& e : metrics.epochs) {
      csv += dpopt::io::csv_line(
          {std::to_string(e.epoch), format_cell(e.train_loss),
           format_cell(e.test_macro_accuracy),
           format_cell(e.grad_norms.quantiles[0]),
           format_cell(e.grad_norms.quantiles[1]),
           format_cell(e.grad_norms.quantiles[2]),
           format_cell(e.grad_norms.quantiles[3]),
           format_cell(e.grad_norms.quantiles[4])});
    }
    dpopt::io::write_text_file(
        (fs::path(args.common.output_dir) / "metrics.csv").string(), csv);

    std::string per_class = dpopt::io::csv_line(
        {"class_id", "count", "accuracy"});
    if (!metrics.epochs.empty()) {
      for (const auto& c : metrics.epochs.back().test_class_accuracy) {
        per_class += dpopt::io::csv_line({std::to_string(c.class_id),
                                          std::to_string(c.count),
                                          format_cell(c.accuracy)});
      }
    }
    dpopt::io::write_text_file(
        (fs::path(args.common.output_dir) / "per_class_accuracy.csv").string(),
        per_class);
  }
  if (want_json(args.common)) {
    dpopt::io::write_text_file(
        (fs::path(args.common.output_dir) / "run.json").string(),
        metrics_to_json(metrics).dump(2) + "\n");
  }
  if (!metrics.final_train_gradients.empty()) {
    dpopt::io::write_gradients_file(
        (fs::path(args.common.output_dir) / "grads_final.txt").string(),
        metrics.final_train_gradients);
    dpopt::io::write_labels_file(
        (fs::path(args.common.output_dir) / "labels_final.txt").string(),
        task.train.labels);
  }

  std::cout << "steps=" << metrics.steps
            << " sigma=" << format_cell(metrics.sigma) << " epsilon="
            << (std::isfinite(metrics.realized_epsilon)
                    ? format_cell(metrics.realized_epsilon)
                    : std::string("inf"))
            << " final_loss=" << format_cell(metrics.final_loss())
            << " final_macro_accuracy="
            << format_cell(metrics.final_macro_accuracy())
            << " diverged=" << (metrics.diverged ? 1 : 0) << "\n";
  return metrics.diverged ? 3 : 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  CommonArgs common;
  TaskFlags task;
  std::vector<double> etas;
  std::vector<long> batch_sizes;
  std::vector<std::string> clips;
  std::vector<double> epsilons;
  long repeats = 5;
  long epochs = 4;
  double delta = 1e-5;
  std::string optimizer = "sgd";
  std::uint64_t master_seed = 1;
};

const std::vector<std::string> kSweepKeys = [] {
  std::vector<std::string> keys = kTaskKeys;
  for (const char* k : {"etas", "batch_sizes", "clips", "epsilons", "repeats",
                        "epochs", "delta", "optimizer", "master_seed"}) {
    keys.push_back(k);
  }
  return keys;
}();

std::string clip_spec_string(const ClipMode& clip) {
  return clip.name() + ":" + format_double(clip.param);
}

int run_sweep(const SweepArgs& args, const CLI::App* cmd) {
  KeyValueConfig config = load_config(args.common, "sweep", kSweepKeys);
  KeyValueConfig resolved;
  const dpopt::harness::SyntheticTaskConfig task_config =
      resolve_task(args.task, cmd, config, resolved);

  dpopt::harness::SweepConfig sweep_config;
  sweep_config.etas =
      cmd->count("--etas") ? args.etas : config.get_double_list("etas");
  sweep_config.batch_sizes = cmd->count("--batch-sizes")
                                 ? args.batch_sizes
                                 : config.get_long_list("batch_sizes");
  std::vector<std::string> clip_specs =
      cmd->count("--clips") ? args.clips : config.get_string_list("clips");
  sweep_config.clips.clear();
  for (const std::string& spec : clip_specs) {
    sweep_config.clips.push_back(parse_clip_spec(spec));
  }
  sweep_config.epsilons = cmd->count("--epsilons")
                              ? args.epsilons
                              : config.get_double_list("epsilons");
  sweep_config.repeats = static_cast<int>(
      cmd->count("--repeats") ? args.repeats : config.get_long("repeats", 5));
  sweep_config.epochs = static_cast<int>(
      cmd->count("--epochs") ? args.epochs : config.get_long("epochs", 4));
  sweep_config.delta =
      cmd->count("--delta") ? args.delta : config.get_double("delta", 1e-5);
  const std::string optimizer =
      cmd->count("--optimizer") ? args.optimizer
                                : config.get_string("optimizer", "sgd");
  sweep_config.optimizer = parse_optimizer(optimizer);
  sweep_config.master_seed = cmd->count("--master-seed")
                                 ? args.master_seed
                                 : config.get_u64("master_seed", 1);

  resolved.set("etas", join_doubles(sweep_config.etas));
  resolved.set("batch_sizes", join_longs(sweep_config.batch_sizes));
  std::string clips_value;
  for (std::size_t i = 0; i < sweep_config.clips.size(); ++i) {
    if (i > 0) clips_value += ',';
    clips_value += clip_spec_string(sweep_config.clips[i]);
  }
  resolved.set("clips", clips_value);
  resolved.set("epsilons", join_doubles(sweep_config.epsilons));
  resolved.set_long("repeats", sweep_config.repeats);
  resolved.set_long("epochs", sweep_config.epochs);
  resolved.set_double("delta", sweep_config.delta);
  resolved.set("optimizer", optimizer);
  resolved.set_u64("master_seed", sweep_config.master_seed);

  const dpopt::harness::Task task = dpopt::harness::gen_task(task_config);
  const dpopt::harness::SweepResults results =
      dpopt::harness::sweep(task, sweep_config);

  write_outputs_dir(args.common);
  write_manifest(args.common, "sweep", resolved);

  if (want_csv(args.common)) {
    std::string csv = dpopt::io::csv_line(
        {"config_index", "epsilon", "eta", "batch_size", "clip_mode",
         "clip_param", "repeat", "seed", "status", "sigma", "steps",
         "final_train_loss", "final_test_macro_accuracy",
         "final_median_grad_norm"});
    for (const auto& r : results.records) {
      const std::string status = r.calibration_failed ? "calibration_failed"
                                 : r.metrics.diverged ? "diverged"
                                                      : "ok";
      csv += dpopt::io::csv_line(
          {std::to_string(r.config_index), format_cell(r.epsilon),
           format_cell(r.eta), std::to_string(r.batch_size),
           r.clip.name(), format_cell(r.clip.param),
           std::to_string(r.repeat), std::to_string(r.seed), status,
           format_cell(r.metrics.sigma), std::to_string(r.metrics.steps),
           format_cell(r.metrics.final_loss()),
           format_cell(r.metrics.final_macro_accuracy()),
           format_cell(r.metrics.final_median_grad_norm())});
    }
    dpopt::io::write_text_file(
        (fs::path(args.common.output_dir) / "results.csv").string(), csv);

    std::string agg_csv = dpopt::io::csv_line(
        {"config_index", "epsilon", "eta", "batch_size", "clip_mode",
         "clip_param", "runs", "failed", "mean_macro_accuracy",
         "min_macro_accuracy", "max_macro_accuracy", "mean_final_loss"});
    for (const auto& a : results.aggregates) {
      agg_csv += dpopt::io::csv_line(
          {std::to_string(a.config_index), format_cell(a.epsilon),
           format_cell(a.eta), std::to_string(a.batch_size), a.clip.name(),
           format_cell(a.clip.param), std::to_string(a.runs),
           std::to_string(a.failed), format_cell(a.mean_macro_accuracy),
           format_cell(a.min_macro_accuracy),
           format_cell(a.max_macro_accuracy),
           format_cell(a.mean_final_loss)});
    }
    dpopt::io::write_text_file(
        (fs::path(args.common.output_dir) / "aggregates.csv").string(),
        agg_csv);

    std::string best_csv = dpopt::io::csv_line(
        {"epsilon", "eta", "batch_size", "clip_mode", "clip_param",
         "mean_macro_accuracy"});
    for (const auto& b : results.best) {
      best_csv += dpopt::io::csv_line(
          {format_cell(b.epsilon), format_cell(b.eta),
           std::to_string(b.batch_size), b.clip.name(),
           format_cell(b.clip.param), format_cell(b.mean_macro_accuracy)});
    }
    dpopt::io::write_text_file(
        (fs::path(args.common.output_dir) / "best.csv").string(), best_csv);
  }
  if (want_json(args.common)) {
    std::string ndjson;
    for (const auto& r : results.records) {
      json rec;
      rec["config_index"] = r.config_index;
      rec["epsilon"] = r.epsilon;
      rec["eta"] = r.eta;
      rec["batch_size"] = r.batch_size;
      rec["clip_mode"] = r.clip.name();
      rec["clip_param"] = r.clip.param;
      rec["repeat"] = r.repeat;
      rec["seed"] = r.seed;
      rec["calibration_failed"] = r.calibration_failed;
      rec["metrics"] =
          r.calibration_failed ? json(nullptr) : metrics_to_json(r.metrics);
      ndjson += rec.dump();
      ndjson += '\n';
    }
    dpopt::io::write_text_file(
        (fs::path(args.common.output_dir) / "results.ndjson").string(),
        ndjson);
  }

  int failed = 0;
  for (const auto& r : results.records) {
    if (r.failed()) ++failed;
  }
  std::cout << "runs=" << results.records.size() << " failed=" << failed
            << "\n";
  for (const auto& b : results.best) {
    std::cout << "best: epsilon=" << format_cell(b.epsilon)
              << " eta=" << format_cell(b.eta)
              << " batch_size=" << b.batch_size
              << " clip=" << clip_spec_string(b.clip)
              << " mean_macro_accuracy="
              << format_cell(b.mean_macro_accuracy) << "\n";
  }
  return failed == static_cast<int>(results.records.size()) ? 3 : 0;
}

// ---------------------------------------------------------------------------
// diagnose

struct DiagnoseArgs {
  CommonArgs common;
  std::string run_dir;
  std::vector<double> clip_bounds{0.1, 1.0, 10.0};
  long bins = 16;
};

int run_diagnose(const DiagnoseArgs& args, const CLI::App* cmd) {
  KeyValueConfig config = load_config(args.common, "diagnose",
                                      {"run_dir", "clip_bounds", "bins"});
  const std::string run_dir =
      cmd->count("--run-dir") ? args.run_dir : config.get_string("run_dir");
  std::vector<double> clip_bounds = cmd->count("--clip-bounds")
                                        ? args.clip_bounds
                                        : (config.has("clip_bounds")
                                               ? config.get_double_list(
                                                     "clip_bounds")
                                               : args.clip_bounds);
  const long bins =
      cmd->count("--bins") ? args.bins : config.get_long("bins", 16);
  if (clip_bounds.empty()) throw ConfigError("diagnose: no clip bounds");
  if (bins < 1) throw ConfigError("diagnose: bins must be >= 1");

  const dpopt::Matrix grads = dpopt::io::read_gradients_file(
      (fs::path(run_dir) / "grads_final.txt").string());
  const std::vector<int> labels = dpopt::io::read_labels_file(
      (fs::path(run_dir) / "labels_final.txt").string());
  if (labels.size() != grads.rows()) {
    throw ConfigError("diagnose: gradients and labels disagree on size");
  }

  write_outputs_dir(args.common);
  KeyValueConfig resolved;
  resolved.set("run_dir", run_dir);
  resolved.set("clip_bounds", join_doubles(clip_bounds));
  resolved.set_long("bins", bins);
  write_manifest(args.common, "diagnose", resolved);

  // Relative weights are normalized against the C=1 baseline, the reference
  // point for the re-weighting effect.
  const auto baseline =
      dpopt::diagnostics::class_retained_weights(grads, labels, 1.0);
  std::string csv = dpopt::io::csv_line(
      {"clip_bound", "class_id", "count", "mean_weight", "relative_weight"});
  for (double c : clip_bounds) {
    const auto weights = dpopt::diagnostics::relative_retained_weights(
        dpopt::diagnostics::class_retained_weights(grads, labels, c),
        baseline);
    for (const auto& w : weights) {
      csv += dpopt::io::csv_line(
          {format_cell(c), std::to_string(w.class_id),
           std::to_string(w.count), format_cell(w.mean_weight),
           format_cell(w.relative_weight)});
    }
  }
  dpopt::io::write_text_file(
      (fs::path(args.common.output_dir) / "retained_weights.csv").string(),
      csv);

  const dpopt::diagnostics::GradNormSummary summary =
      dpopt::diagnostics::grad_norm_distribution(
          grads, static_cast<std::size_t>(bins));
  std::string quantiles_csv = dpopt::io::csv_line({"quantile", "value"});
  for (std::size_t i = 0; i < summary.kQuantileProbs.size(); ++i) {
    quantiles_csv += dpopt::io::csv_line(
        {format_cell(summary.kQuantileProbs[i]),
         format_cell(summary.quantiles[i])});
  }
  dpopt::io::write_text_file(
      (fs::path(args.common.output_dir) / "norm_quantiles.csv").string(),
      quantiles_csv);

  std::string histogram_csv =
      dpopt::io::csv_line({"bin_lo", "bin_hi", "count"});
  for (std::size_t i = 0; i < summary.bin_counts.size(); ++i) {
    histogram_csv += dpopt::io::csv_line(
        {format_cell(summary.bin_edges[i]), format_cell(summary.bin_edges[i + 1]),
         std::to_string(summary.bin_counts[i])});
  }
  dpopt::io::write_text_file(
      (fs::path(args.common.output_dir) / "norm_histogram.csv").string(),
      histogram_csv);

  std::cout << "examples=" << grads.rows()
            << " median_norm=" << format_cell(summary.median())
            << " zero_norms=" << summary.zero_count << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private optimization toolkit"};
  app.require_subcommand(1);

  CalibrateArgs calibrate_args;
  CLI::App* calibrate = app.add_subcommand(
      "calibrate", "Find the noise multiplier for an epsilon target");
  add_common(calibrate, &calibrate_args.common);
  calibrate->add_option("--epsilon", calibrate_args.epsilon, "Epsilon target");
  calibrate->add_option("--delta", calibrate_args.delta, "Delta");
  calibrate->add_option("--sampling-rate", calibrate_args.sampling_rate,
                        "Poisson sampling rate q");
  calibrate->add_option("--steps", calibrate_args.steps, "Step count T");

  PlanArgs plan_args;
  CLI::App* plan = app.add_subcommand(
      "plan", "Batch-size planning table for fixed epochs");
  add_common(plan, &plan_args.common);
  plan->add_option("--dataset-size", plan_args.dataset_size, "Dataset size N");
  plan->add_option("--epochs", plan_args.epochs, "Epochs E");
  plan->add_option("--delta", plan_args.delta, "Delta");
  plan->add_option("--epsilons", plan_args.epsilons, "Epsilon targets")
      ->delimiter(',');
  plan->add_option("--batch-sizes", plan_args.batch_sizes, "Batch candidates")
      ->delimiter(',');
  plan->add_option("--min-steps", plan_args.min_steps, "Minimum step count");
  plan->add_option("--plateau-tolerance", plan_args.plateau_tolerance,
                   "Relative tolerance defining the noise plateau");

  SolveClipArgs solve_args;
  CLI::App* solve = app.add_subcommand(
      "solve-clip", "Optimal clipping bound for a gradient file");
  add_common(solve, &solve_args.common);
  solve->add_option("--grads-file", solve_args.grads_file,
                    "Gradient matrix file (optional `d=<int>` header)");
  solve->add_option("--sigma", solve_args.sigma, "Noise multiplier");
  solve->add_flag("--oracle", solve_args.oracle,
                  "Cross-check the solver against a dense grid");
  solve->add_option("--oracle-points", solve_args.oracle_points,
                    "Grid size for --oracle");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "One DP training run");
  add_common(train, &train_args.common);
  add_task_flags(train, &train_args.task);
  train->add_option("--eta", train_args.eta, "Learning rate");
  train->add_option("--batch-size", train_args.batch_size,
                    "Expected batch size");
  train->add_option("--clip-mode", train_args.clip_mode,
                    "standard | normalized | auto_s");
  train->add_option("--clip-param", train_args.clip_param,
                    "Clip bound C (or gamma for auto_s)");
  train->add_option("--epochs", train_args.epochs, "Epochs");
  train->add_option("--epsilon", train_args.epsilon,
                    "Epsilon target (0 = use --sigma)");
  train->add_option("--sigma", train_args.sigma,
                    "Explicit noise multiplier (0 = non-private)");
  train->add_option("--delta", train_args.delta, "Delta");
  train->add_option("--optimizer", train_args.optimizer, "sgd | adam");
  train->add_option("--seed", train_args.seed, "Run seed");

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Grid sweep over eta x batch x clip x epsilon");
  add_common(sweep, &sweep_args.common);
  add_task_flags(sweep, &sweep_args.task);
  sweep->add_option("--etas", sweep_args.etas, "Learning rates")
      ->delimiter(',');
  sweep->add_option("--batch-sizes", sweep_args.batch_sizes, "Batch sizes")
      ->delimiter(',');
  sweep->add_option("--clips", sweep_args.clips,
                    "Clip specs, e.g. normalized:1,standard:0.5")
      ->delimiter(',');
  sweep->add_option("--epsilons", sweep_args.epsilons, "Epsilon targets")
      ->delimiter(',');
  sweep->add_option("--repeats", sweep_args.repeats, "Repeats per config");
  sweep->add_option("--epochs", sweep_args.epochs, "Epochs");
  sweep->add_option("--delta", sweep_args.delta, "Delta");
  sweep->add_option("--optimizer", sweep_args.optimizer, "sgd | adam");
  sweep->add_option("--master-seed", sweep_args.master_seed, "Master seed");

  DiagnoseArgs diagnose_args;
  CLI::App* diagnose = app.add_subcommand(
      "diagnose", "Retained-weight and norm diagnostics for a finished run");
  add_common(diagnose, &diagnose_args.common);
  diagnose->add_option("--run-dir", diagnose_args.run_dir,
                       "Directory holding grads_final.txt/labels_final.txt");
  diagnose->add_option("--clip-bounds", diagnose_args.clip_bounds,
                       "Clip bounds to evaluate")
      ->delimiter(',');
  diagnose->add_option("--bins", diagnose_args.bins, "Histogram bins");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (calibrate->parsed()) {
      try {
        return run_calibrate(calibrate_args, calibrate);
      } catch (const dpopt::CalibrationError& e) {
        // For this command an unattainable target is a user-input problem.
        std::cerr << "error: " << e.what() << "\n";
        return 2;
      }
    }
    if (plan->parsed()) return run_plan(plan_args, plan);
    if (solve->parsed()) return run_solve_clip(solve_args, solve);
    if (train->parsed()) return run_train(train_args, train);
    if (sweep->parsed()) return run_sweep(sweep_args, sweep);
    if (diagnose->parsed()) return run_diagnose(diagnose_args, diagnose);
    std::cerr << "no command\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dpopt::CalibrationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const dpopt::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
