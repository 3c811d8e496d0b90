// Copyright 2026 The imvae Authors.
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

#pragma once

// Training runs: configuration, the alternating VAE / critic update loop,
// checkpointing, metric scheduling, latent export and parameter sweeps.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "imvae/data.hpp"
#include "imvae/errors.hpp"
#include "imvae/metrics.hpp"
#include "imvae/models.hpp"
#include "imvae/objectives.hpp"

namespace imvae {

enum class ObjectiveKind { vae, beta_vae, info_vae_mmd, infomax };

ObjectiveKind objective_from_name(const std::string& name);
std::string to_string(ObjectiveKind kind);

struct TrainConfig {
  ObjectiveKind objective = ObjectiveKind::infomax;
  double alpha = 10.0;
  double beta = 1.0;
  std::string divergence = "kl-f-dual";
  double mmd_alpha = 0.0;
  double mmd_lambda = 1000.0;

  std::size_t z_dim = 8;
  std::size_t hidden = 256;
  std::size_t critic_hidden = 400;
  std::size_t batch = 64;
  double lr_vae = 1e-3;
  double lr_critic = 1e-4;
  /// Critic optimizer steps per batch; 0 freezes the critic.
  std::size_t critic_updates = 1;
  std::size_t steps = 10000;
  std::uint64_t seed = 0;

  std::string data;
  std::string labels;
  BinarizeMode binarize = BinarizeMode::none;
  /// 0 keeps every example.
  std::size_t subset = 0;
  std::uint64_t data_seed = 0;
  double holdout_fraction = 0.1;

  std::string out;
  /// 0 saves only the initial and final checkpoints.
  std::size_t checkpoint_every = 0;
  /// Per-step training statistics are logged every this many steps.
  std::size_t log_every = 10;

  std::string metrics = "all";
  std::size_t mi_steps = 3000;
  std::size_t mi_window = 500;
  std::size_t mi_batch = 256;
  std::size_t mi_hidden = 128;
  double mi_lr = 5e-4;
  std::string probe = "linear";
  std::size_t probe_epochs = 30;
  std::size_t ll_samples = 1;
  double au_epsilon = kActiveUnitEpsilon;

  /// Sets one field from its textual key and value; ConfigError for unknown
  /// keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// All fields as key=value lines (round-trips through parse_config_text).
  std::string to_text() const;
  /// ConfigError listing every invalid field.
  void validate() const;

  ObjectiveConfig objective_config() const;
  ModelShape shape(std::size_t input_dim) const;
  EvalConfig eval_config() const;
};

/// Flat key=value lines; '#' starts a comment. Later keys win.
std::map<std::string, std::string> parse_config_text(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
TrainConfig config_from_map(const std::map<std::string, std::string>& entries,
                            TrainConfig base = {});

/// Loads, binarizes, subsets and splits the configured dataset.
Split prepare_data(const TrainConfig& config);
Split prepare_data(const TrainConfig& config, const Dataset& full);

struct StepStats {
  std::size_t step = 0;
  double vae_loss = 0.0;
  double recon_ll = 0.0;
  double kl = 0.0;
  double mi_bound = 0.0;  ///< NaN without a critic
  double mmd2 = 0.0;      ///< NaN unless the MMD objective runs
};

struct RunManifest {
  TrainConfig config;
  std::filesystem::path run_dir;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path metrics_csv;
  std::string version;
  std::string status = "ok";
  std::optional<std::filesystem::path> last_good_checkpoint;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
  double total_seconds = 0.0;

  std::string to_json() const;
};

struct RunResult {
  RunManifest manifest;
  Model model;
  std::vector<MetricsRecord> metrics;
  std::vector<StepStats> log;
};

/// Raised when a loss turns non-finite; training stops at the last good
/// checkpoint.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::optional<std::filesystem::path> last_good)
      : NumericError(what), last_good_checkpoint(std::move(last_good)) {}
  std::optional<std::filesystem::path> last_good_checkpoint;
};

/// Runs exactly config.steps updates. When config.out is set the run
/// directory receives config.txt, manifest.json, metrics.csv, train_log.csv
/// and checkpoints ckpt_<step>.bin.
RunResult train(const TrainConfig& config);
RunResult train(const TrainConfig& config, const Split& data);

/// Metrics for a frozen model on `eval` (probe trained on `probe_train`).
MetricsRecord evaluate_model(const Model& model, const Split& data, const TrainConfig& config,
                             std::size_t step);

/// Writes `label,mu_1..mu_d,logvar_1..logvar_d`, one row per example;
/// label -1 for unlabeled data. IoError if the path is unwritable.
void export_latents(const Model& model, const Dataset& data, const std::filesystem::path& path);

enum class SweepAxis { alpha, beta };
SweepAxis sweep_axis_from_name(const std::string& name);

struct SweepEntry {
  double value = 0.0;
  std::string status;  ///< "ok" or the failure message
  std::filesystem::path run_dir;
  std::optional<MetricsRecord> final_metrics;
};

/// One run per value with the template's seed. Sub-run failures are
/// recorded and the sweep continues. Writes sweep.csv under template.out
/// when set.
std::vector<SweepEntry> sweep(const TrainConfig& base, SweepAxis axis,
                              const std::vector<double>& values);
std::vector<SweepEntry> sweep(const TrainConfig& base, SweepAxis axis,
                              const std::vector<double>& values, const Split& data);

std::string version_string();

}  // namespace imvae
