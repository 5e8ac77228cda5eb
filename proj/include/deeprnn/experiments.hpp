// SPDX-License-Identifier: Apache-2.0
//
// Seeded training runs with early stopping, grid sweeps, and the oracle
// campaign over every construction.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "deeprnn/autograd.hpp"
#include "deeprnn/oracles.hpp"
#include "deeprnn/tasks.hpp"

namespace deeprnn {

struct TrainSettings {
  double lr = 1e-3;
  Index batch = 128;
  int max_epochs = 2000;
  int patience = 100;
  /// Global-norm gradient clip; <= 0 disables.
  double clip = 0.0;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  /// Fresh initializations tried after a divergence before the seed is marked failed.
  int max_restarts = 0;
  /// Train a linear head on h_t^(L); without it the top width must equal the target dim.
  bool readout = true;
  bool masked = false;
  bool freeze_h0 = false;
  /// Uniform init half-width; <= 0 means 1/sqrt(n).
  double init_scale = 0.0;
  /// Stop as soon as the validation loss reaches this value; <= 0 disables.
  double target_loss = 0.0;

  void validate() const;
};

struct RunConfig {
  TaskSpec task;
  ModelConfig model;
  TrainSettings train;
  /// Start from these weights instead of a random draw (same for every seed).
  std::optional<ModelParams> init;
  std::optional<Readout> init_head;
};

nlohmann::json to_json(const TrainSettings& s);
TrainSettings train_settings_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);
std::string config_hash(const RunConfig& c);

struct SeedResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string failure;
  int restarts = 0;
  double best_val = 0.0;
  double test_at_best = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  std::int64_t param_count = 0;
  double wall_seconds = 0.0;
  /// Per-epoch losses, index 0 before any update.
  std::vector<double> train_curve;
  std::vector<double> val_curve;
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population
  int count = 0;
};

Aggregate aggregate(const std::vector<double>& values);

struct RunRecord {
  std::string config_hash;
  nlohmann::json config;
  double target_variance = 0.0;  // of the test split
  std::vector<SeedResult> seeds;
  Aggregate test;  // over seeds that did not fail
  Aggregate val;
};

struct RunOptions {
  /// Record wall-clock seconds; off by default so records are reproducible.
  bool timing = false;
  bool keep_curves = true;
  std::function<void(const std::string&)> log;
};

struct TrainedModel {
  ModelParams params;
  std::optional<Readout> head;
};

/// Trains once per seed with early stopping on the validation loss, restores
/// the best epoch and evaluates the test split there. Divergence marks the
/// seed failed instead of throwing.
RunRecord run(const RunConfig& config, const RunOptions& options = {});
RunRecord run(const RunConfig& config, const TaskSplits& data, const RunOptions& options = {},
              std::vector<TrainedModel>* models = nullptr);

nlohmann::json to_json(const RunRecord& r, bool with_curves = false);

struct SweepGrid {
  TaskSpec task;
  TrainSettings train;
  std::vector<Family> families{Family::kRnn};
  std::vector<Activation> activations{Activation{}};
  std::vector<int> depths{1};
  std::vector<int> widths{2};
  int rank = 0;
  /// Optional cell filter on (n, L).
  std::function<bool(int, int)> keep;
};

struct SweepRow {
  std::string task;
  Family family = Family::kRnn;
  Activation activation;
  int n = 0;
  int L = 0;
  std::int64_t params = 0;
  Aggregate metric;  // test MSE at the best epoch
  int failed_seeds = 0;
  RunRecord record;
};

/// Cells in grid order: family, activation, depth, width. One dataset is
/// generated and shared by every cell.
std::vector<SweepRow> sweep(const SweepGrid& grid, const RunOptions& options = {});

/// Columns: task,family,activation,placement,n,L,units,params,metric_mean,metric_std,failed_seeds
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

/// Columns: series,x,y,y_err with x one of "n", "units", "params".
void write_plot_data(std::ostream& os, const std::vector<SweepRow>& rows, const std::string& x_axis);

/// Smallest width at depth L whose mean test MSE is below threshold.
std::optional<int> minimal_width(const std::vector<SweepRow>& rows, int L, double threshold);

struct CampaignOptions {
  std::uint64_t seed = 0;
  /// Perturb the copier's recurrence before checking it.
  bool inject_copier_bug = false;
};

struct CampaignResult {
  std::vector<Verdict> verdicts;
  bool all_passed() const;
  nlohmann::json to_json() const;
};

/// Every construction paired with the oracle that certifies it, plus the
/// parameter-count crossover scan over n in [4, 12], L <= 5.
CampaignResult verify_campaign(const CampaignOptions& options = {});

}  // namespace deeprnn
