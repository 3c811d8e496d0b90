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

// Command-line front end: train, eval, export-latents, sweep, probe.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric abort.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "imvae/checkpoint.hpp"
#include "imvae/errors.hpp"
#include "imvae/metrics.hpp"
#include "imvae/train.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> values;
};

// Registers the shared run flags; each one, when given, overrides the
// config file entry of the same name.
void add_run_flags(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config_path, "key=value config file");
  auto flag = [&](const std::string& name, const std::string& key, const std::string& help) {
    app.add_option_function<std::string>(
        name, [&o, key](const std::string& v) { o.values[key] = v; }, help);
  };
  flag("--objective", "objective", "vae | beta-vae | info-vae-mmd | infomax");
  flag("--alpha", "alpha", "mutual information weight");
  flag("--beta", "beta", "KL weight");
  flag("--divergence", "divergence", "kl-f-dual | dv");
  flag("--zdim", "z_dim", "latent dimension");
  flag("--batch", "batch", "minibatch size (>= 2)");
  flag("--steps", "steps", "training steps");
  flag("--seed", "seed", "random seed");
  flag("--data", "data", "IDX image file (optionally .gz)");
  flag("--labels", "labels", "IDX label file (optionally .gz)");
  flag("--out", "out", "output directory");
  app.add_option_function<std::string>(
         "--binarize", [&o](const std::string& v) { o.values["binarize"] = v; },
         "pixel binarization")
      ->check(CLI::IsMember({"none", "threshold", "stochastic"}));
  flag("--subset", "subset", "use N examples (stratified when labeled)");
  flag("--metrics", "metrics", "comma list of mi,kl,au,elbo,probe, all or none");
  app.add_option_function<std::vector<std::string>>(
      "--set",
      [&o](const std::vector<std::string>& kvs) {
        for (const auto& kv : kvs) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw imvae::ConfigError("--set expects key=value, got " + kv);
          o.values[kv.substr(0, eq)] = kv.substr(eq + 1);
        }
      },
      "extra key=value overrides");
}

imvae::TrainConfig resolve(const Overrides& o) {
  imvae::TrainConfig cfg;
  if (!o.config_path.empty()) cfg = imvae::load_config(o.config_path);
  cfg = imvae::config_from_map(o.values, cfg);
  cfg.validate();
  return cfg;
}

void print_record(const imvae::MetricsRecord& r) {
  std::cout << imvae::kMetricsCsvHeader << "\n" << imvae::metrics_csv_row(r) << "\n";
  if (!r.mi_converged) std::cerr << "warning: MI estimate did not converge\n";
}

void append_csv(const std::string& path, const imvae::MetricsRecord& r) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw imvae::IoError("cannot append to " + path);
  if (fresh) out << imvae::kMetricsCsvHeader << "\n";
  out << imvae::metrics_csv_row(r) << "\n";
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> out;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw imvae::ConfigError("sweep value '" + item + "' is not a number");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational autoencoders with mutual-information regularisation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", imvae::version_string());

  Overrides train_o, eval_o, export_o, sweep_o, probe_o;
  std::string eval_ckpt, eval_csv, export_ckpt, export_path, probe_ckpt, sweep_axis,
      sweep_values, probe_kind = "linear";
  std::size_t eval_step = 0;

  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_run_flags(*train_cmd, train_o);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the held-out split");
  add_run_flags(*eval_cmd, eval_o);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--csv", eval_csv, "append the record to this CSV");
  eval_cmd->add_option("--step", eval_step, "step value for the record");

  auto* export_cmd = app.add_subcommand("export-latents", "write posterior parameters as CSV");
  add_run_flags(*export_cmd, export_o);
  export_cmd->add_option("--checkpoint", export_ckpt, "checkpoint file")->required();
  export_cmd->add_option("--output", export_path, "CSV path")->required();

  auto* sweep_cmd = app.add_subcommand("sweep", "one run per alpha or beta value");
  add_run_flags(*sweep_cmd, sweep_o);
  sweep_cmd->add_option("--axis", sweep_axis, "alpha | beta")
      ->required()
      ->check(CLI::IsMember({"alpha", "beta"}));
  sweep_cmd->add_option("--values", sweep_values, "comma-separated values")->required();

  auto* probe_cmd = app.add_subcommand("probe", "train a probe on posterior means");
  add_run_flags(*probe_cmd, probe_o);
  probe_cmd->add_option("--checkpoint", probe_ckpt, "checkpoint file")->required();
  probe_cmd->add_option("--probe", probe_kind, "linear | mlp")
      ->check(CLI::IsMember({"linear", "mlp"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  } catch (const imvae::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*train_cmd) {
      const imvae::TrainConfig cfg = resolve(train_o);
      imvae::RunResult r = imvae::train(cfg);
      std::cout << "run " << r.manifest.status << " in " << r.manifest.total_seconds << " s";
      if (!cfg.out.empty()) std::cout << ", outputs in " << cfg.out;
      std::cout << "\n";
      if (!r.metrics.empty()) print_record(r.metrics.back());
    } else if (*eval_cmd) {
      const imvae::TrainConfig cfg = resolve(eval_o);
      const imvae::Model model = imvae::load_checkpoint(eval_ckpt);
      const imvae::Split data = imvae::prepare_data(cfg);
      const imvae::MetricsRecord r = imvae::evaluate_model(model, data, cfg, eval_step);
      print_record(r);
      if (!eval_csv.empty()) append_csv(eval_csv, r);
    } else if (*export_cmd) {
      const imvae::TrainConfig cfg = resolve(export_o);
      const imvae::Model model = imvae::load_checkpoint(export_ckpt);
      std::optional<std::filesystem::path> labels;
      if (!cfg.labels.empty()) labels = cfg.labels;
      imvae::Dataset data = imvae::load_idx(cfg.data, labels);
      data = imvae::binarize(data, cfg.data_seed, cfg.binarize);
      imvae::export_latents(model, data, export_path);
      std::cout << "wrote " << data.size() << " rows to " << export_path << "\n";
    } else if (*sweep_cmd) {
      const imvae::TrainConfig cfg = resolve(sweep_o);
      const auto entries =
          imvae::sweep(cfg, imvae::sweep_axis_from_name(sweep_axis), parse_values(sweep_values));
      for (const auto& e : entries) {
        std::cout << sweep_axis << "=" << e.value << ": " << e.status;
        if (e.final_metrics) std::cout << "  " << imvae::metrics_csv_row(*e.final_metrics);
        std::cout << "\n";
      }
    } else if (*probe_cmd) {
      imvae::TrainConfig cfg = resolve(probe_o);
      cfg.probe = probe_kind;
      const imvae::Model model = imvae::load_checkpoint(probe_ckpt);
      const imvae::Split data = imvae::prepare_data(cfg);
      const double acc = imvae::probe_accuracy(model.encoder, data.train, data.holdout,
                                               cfg.eval_config().probe);
      std::printf("probe_acc=%.6f\n", acc);
    }
  } catch (const imvae::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const imvae::TrainingAborted& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    if (e.last_good_checkpoint) {
      std::cerr << "last good checkpoint: " << e.last_good_checkpoint->string() << "\n";
    }
    return kExitNumeric;
  } catch (const imvae::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const imvae::FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const imvae::IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const imvae::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
