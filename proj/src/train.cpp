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

#include "imvae/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "imvae/adam.hpp"
#include "imvae/checkpoint.hpp"
#include "imvae/rng.hpp"

#ifndef IMVAE_VERSION
#define IMVAE_VERSION "unknown"
#endif

namespace imvae {

using diff::Graph;
using diff::Var;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define IMVAE_SIZE_FIELD(name)                                                       \
  {#name, Field{[](TrainConfig& c, const std::string& k, const std::string& v) {    \
                  c.name = static_cast<std::size_t>(parse_u64(k, v));               \
                },                                                                  \
                [](const TrainConfig& c) { return std::to_string(c.name); }}}
#define IMVAE_U64_FIELD(name)                                                        \
  {#name, Field{[](TrainConfig& c, const std::string& k, const std::string& v) {    \
                  c.name = parse_u64(k, v);                                         \
                },                                                                  \
                [](const TrainConfig& c) { return std::to_string(c.name); }}}
#define IMVAE_REAL_FIELD(name)                                                       \
  {#name, Field{[](TrainConfig& c, const std::string& k, const std::string& v) {    \
                  c.name = parse_double(k, v);                                      \
                },                                                                  \
                [](const TrainConfig& c) { return format_double(c.name); }}}
#define IMVAE_TEXT_FIELD(name)                                                       \
  {#name, Field{[](TrainConfig& c, const std::string&, const std::string& v) {      \
                  c.name = v;                                                       \
                },                                                                  \
                [](const TrainConfig& c) { return c.name; }}}

// Ordered as written to config.txt.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"objective", Field{[](TrainConfig& c, const std::string&, const std::string& v) {
                            c.objective = objective_from_name(v);
                          },
                          [](const TrainConfig& c) { return to_string(c.objective); }}},
      IMVAE_REAL_FIELD(alpha),
      IMVAE_REAL_FIELD(beta),
      IMVAE_TEXT_FIELD(divergence),
      IMVAE_REAL_FIELD(mmd_alpha),
      IMVAE_REAL_FIELD(mmd_lambda),
      IMVAE_SIZE_FIELD(z_dim),
      IMVAE_SIZE_FIELD(hidden),
      IMVAE_SIZE_FIELD(critic_hidden),
      IMVAE_SIZE_FIELD(batch),
      IMVAE_REAL_FIELD(lr_vae),
      IMVAE_REAL_FIELD(lr_critic),
      IMVAE_SIZE_FIELD(critic_updates),
      IMVAE_SIZE_FIELD(steps),
      IMVAE_U64_FIELD(seed),
      IMVAE_TEXT_FIELD(data),
      IMVAE_TEXT_FIELD(labels),
      {"binarize", Field{[](TrainConfig& c, const std::string&, const std::string& v) {
                           c.binarize = binarize_mode_from_name(v);
                         },
                         [](const TrainConfig& c) { return to_string(c.binarize); }}},
      IMVAE_SIZE_FIELD(subset),
      IMVAE_U64_FIELD(data_seed),
      IMVAE_REAL_FIELD(holdout_fraction),
      IMVAE_TEXT_FIELD(out),
      IMVAE_SIZE_FIELD(checkpoint_every),
      IMVAE_SIZE_FIELD(log_every),
      IMVAE_TEXT_FIELD(metrics),
      IMVAE_SIZE_FIELD(mi_steps),
      IMVAE_SIZE_FIELD(mi_window),
      IMVAE_SIZE_FIELD(mi_batch),
      IMVAE_SIZE_FIELD(mi_hidden),
      IMVAE_REAL_FIELD(mi_lr),
      IMVAE_TEXT_FIELD(probe),
      IMVAE_SIZE_FIELD(probe_epochs),
      IMVAE_SIZE_FIELD(ll_samples),
      IMVAE_REAL_FIELD(au_epsilon),
  };
  return table;
}

#undef IMVAE_SIZE_FIELD
#undef IMVAE_U64_FIELD
#undef IMVAE_REAL_FIELD
#undef IMVAE_TEXT_FIELD

const std::map<std::string, std::string>& key_aliases() {
  static const std::map<std::string, std::string> aliases = {{"zdim", "z_dim"}};
  return aliases;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string checkpoint_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%08zu.bin", step);
  return buf;
}

std::string log_row(const StepStats& s) {
  auto real = [](double v) {
    if (std::isnan(v)) return std::string("nan");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  return std::to_string(s.step) + "," + real(s.vae_loss) + "," + real(s.recon_ll) + "," +
         real(s.kl) + "," + real(s.mi_bound) + "," + real(s.mmd2);
}

}  // namespace

ObjectiveKind objective_from_name(const std::string& name) {
  if (name == "vae") return ObjectiveKind::vae;
  if (name == "beta-vae") return ObjectiveKind::beta_vae;
  if (name == "info-vae-mmd") return ObjectiveKind::info_vae_mmd;
  if (name == "infomax") return ObjectiveKind::infomax;
  throw ConfigError("unknown objective '" + name +
                    "' (expected vae, beta-vae, info-vae-mmd, infomax)");
}

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::vae: return "vae";
    case ObjectiveKind::beta_vae: return "beta-vae";
    case ObjectiveKind::info_vae_mmd: return "info-vae-mmd";
    case ObjectiveKind::infomax: return "infomax";
  }
  return "vae";
}

void TrainConfig::set(const std::string& raw_key, const std::string& value) {
  std::string key = raw_key;
  if (auto it = key_aliases().find(key); it != key_aliases().end()) key = it->second;
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(*this, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + raw_key + "'");
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + "=" + field.get(*this) + "\n";
  return out;
}

void TrainConfig::validate() const {
  std::vector<std::string> bad;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  check(alpha >= 0.0, "alpha=" + format_double(alpha) + " (must be >= 0)");
  check(beta >= 0.0, "beta=" + format_double(beta) + " (must be >= 0)");
  check(mmd_lambda >= 0.0, "mmd_lambda=" + format_double(mmd_lambda) + " (must be >= 0)");
  check(z_dim >= 1, "z_dim=0 (must be >= 1)");
  check(hidden >= 1, "hidden=0 (must be >= 1)");
  check(critic_hidden >= 1, "critic_hidden=0 (must be >= 1)");
  check(batch >= 2, "batch=" + std::to_string(batch) + " (must be >= 2)");
  check(lr_vae > 0.0, "lr_vae=" + format_double(lr_vae) + " (must be > 0)");
  check(lr_critic > 0.0, "lr_critic=" + format_double(lr_critic) + " (must be > 0)");
  check(holdout_fraction > 0.0 && holdout_fraction < 1.0,
        "holdout_fraction=" + format_double(holdout_fraction) + " (must be in (0, 1))");
  check(log_every >= 1, "log_every=0 (must be >= 1)");
  check(mi_window >= 1 && mi_window <= mi_steps,
        "mi_window=" + std::to_string(mi_window) + " (must be in [1, mi_steps])");
  check(mi_batch >= 2, "mi_batch=" + std::to_string(mi_batch) + " (must be >= 2)");
  check(mi_hidden >= 1, "mi_hidden=0 (must be >= 1)");
  check(mi_lr > 0.0, "mi_lr=" + format_double(mi_lr) + " (must be > 0)");
  check(ll_samples >= 1, "ll_samples=0 (must be >= 1)");
  check(au_epsilon >= 0.0, "au_epsilon=" + format_double(au_epsilon) + " (must be >= 0)");
  check(probe == "linear" || probe == "mlp", "probe=" + probe + " (must be linear or mlp)");
  try {
    divergence_from_name(divergence);
  } catch (const ConfigError&) {
    bad.push_back("divergence=" + divergence + " (must be kl-f-dual or dv)");
  }
  if (metrics != "none" && !metrics.empty()) {
    try {
      MetricSelection::parse(metrics);
    } catch (const ConfigError&) {
      bad.push_back("metrics=" + metrics + " (subset of mi,kl,au,elbo,probe)");
    }
  }
  if (bad.empty()) return;
  std::string msg = "invalid config:";
  for (const auto& b : bad) msg += "\n  " + b;
  throw ConfigError(msg);
}

ObjectiveConfig TrainConfig::objective_config() const {
  ObjectiveConfig o;
  o.divergence = divergence_from_name(divergence);
  o.mmd_alpha = mmd_alpha;
  o.mmd_lambda = mmd_lambda;
  switch (objective) {
    case ObjectiveKind::vae:
      o.alpha = 0.0;
      o.beta = 1.0;
      break;
    case ObjectiveKind::beta_vae:
      o.alpha = 0.0;
      o.beta = beta;
      break;
    case ObjectiveKind::info_vae_mmd:
    case ObjectiveKind::infomax:
      o.alpha = alpha;
      o.beta = beta;
      break;
  }
  return o;
}

ModelShape TrainConfig::shape(std::size_t input_dim) const {
  return ModelShape{input_dim, z_dim, hidden, critic_hidden};
}

EvalConfig TrainConfig::eval_config() const {
  EvalConfig e;
  e.which = (metrics.empty() || metrics == "none") ? MetricSelection::none()
                                                   : MetricSelection::parse(metrics);
  e.mi.steps = mi_steps;
  e.mi.window = mi_window;
  e.mi.batch = mi_batch;
  e.mi.hidden = mi_hidden;
  e.mi.learning_rate = mi_lr;
  e.probe.epochs = probe_epochs;
  if (probe == "mlp") e.probe.hidden = {128, 64};
  e.ll_samples = ll_samples;
  e.au_epsilon = au_epsilon;
  e.seed = seed;
  return e;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value, got '" +
                        line + "'");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

TrainConfig config_from_map(const std::map<std::string, std::string>& entries, TrainConfig base) {
  for (const auto& [k, v] : entries) base.set(k, v);
  return base;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_map(parse_config_text(ss.str()));
}

// ---------------------------------------------------------------------------

Split prepare_data(const TrainConfig& config, const Dataset& full) {
  Dataset d = binarize(full, config.data_seed, config.binarize);
  if (config.subset != 0 && config.subset < d.size()) {
    d = subset(d, config.subset, config.data_seed, d.labeled());
  } else if (config.subset > d.size()) {
    throw ContractError("subset " + std::to_string(config.subset) + " exceeds the " +
                        std::to_string(d.size()) + " available examples");
  }
  return split_holdout(d, config.holdout_fraction);
}

Split prepare_data(const TrainConfig& config) {
  if (config.data.empty()) throw ConfigError("invalid config:\n  data is empty (need an IDX path)");
  std::optional<std::filesystem::path> labels;
  if (!config.labels.empty()) labels = config.labels;
  return prepare_data(config, load_idx(config.data, labels));
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : parse_config_text(config.to_text())) cfg[k] = v;
  j["version"] = version;
  j["status"] = status;
  j["config"] = cfg;
  j["run_dir"] = run_dir.string();
  j["checkpoints"] = nlohmann::json::array();
  for (const auto& c : checkpoints) j["checkpoints"].push_back(c.string());
  j["metrics_csv"] = metrics_csv.string();
  j["last_good_checkpoint"] =
      last_good_checkpoint ? nlohmann::json(last_good_checkpoint->string()) : nlohmann::json();
  j["timings"] = {{"train_seconds", train_seconds},
                  {"eval_seconds", eval_seconds},
                  {"total_seconds", total_seconds}};
  return j.dump(2) + "\n";
}

MetricsRecord evaluate_model(const Model& model, const Split& data, const TrainConfig& config,
                             std::size_t step) {
  return evaluate(model, data.holdout, data.train, config.eval_config(), step);
}

std::string version_string() { return IMVAE_VERSION; }

RunResult train(const TrainConfig& config) {
  config.validate();
  return train(config, prepare_data(config));
}

RunResult train(const TrainConfig& config, const Split& data) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const Dataset& train_set = data.train;
  if (train_set.size() < config.batch) {
    throw ContractError("training split has " + std::to_string(train_set.size()) +
                        " examples, fewer than the batch size " + std::to_string(config.batch));
  }
  const ObjectiveConfig objective = config.objective_config();
  const EvalConfig eval_cfg = config.eval_config();
  const bool uses_critic = config.objective == ObjectiveKind::infomax;
  const bool has_metrics = eval_cfg.which.mi || eval_cfg.which.kl || eval_cfg.which.au ||
                           eval_cfg.which.elbo || eval_cfg.which.probe;

  RunResult result;
  RunManifest& manifest = result.manifest;
  manifest.config = config;
  manifest.version = version_string();
  const bool to_disk = !config.out.empty();
  std::ofstream metrics_out;
  std::ofstream log_out;
  if (to_disk) {
    manifest.run_dir = config.out;
    std::error_code ec;
    std::filesystem::create_directories(manifest.run_dir, ec);
    if (ec) throw IoError("cannot create run directory " + config.out + ": " + ec.message());
    write_text(manifest.run_dir / "config.txt", config.to_text());
    manifest.metrics_csv = manifest.run_dir / "metrics.csv";
    metrics_out.open(manifest.metrics_csv, std::ios::trunc);
    log_out.open(manifest.run_dir / "train_log.csv", std::ios::trunc);
    if (!metrics_out || !log_out) throw IoError("cannot write into " + config.out);
    metrics_out << kMetricsCsvHeader << "\n";
    log_out << "step,vae_loss,recon_ll,kl,mi_bound,mmd2\n";
  }

  result.model = init_params(config.shape(train_set.input_dim()), config.seed);
  Model& model = result.model;
  std::vector<diff::Parameter*> vae_params = model.vae_parameters();
  std::vector<diff::Parameter*> critic_params = model.critic_parameters();
  Adam vae_opt(vae_params, config.lr_vae);
  Adam critic_opt(critic_params, config.lr_critic);

  BatchIterator batches(train_set.size(), config.batch, splitmix64(config.seed ^ 0xba7c4ULL));
  Rng noise_rng = Rng::stream(config.seed, 4);
  Rng perm_rng = Rng::stream(config.seed, 5);
  Rng prior_rng = Rng::stream(config.seed, 6);

  double eval_seconds = 0.0;
  auto checkpoint = [&](std::size_t step) {
    if (to_disk) {
      const auto path = manifest.run_dir / checkpoint_name(step);
      save_checkpoint(path, model);
      manifest.checkpoints.push_back(path);
      manifest.last_good_checkpoint = path;
    }
    if (has_metrics) {
      const auto t0 = std::chrono::steady_clock::now();
      MetricsRecord rec = evaluate_model(model, data, config, step);
      eval_seconds += seconds_since(t0);
      result.metrics.push_back(rec);
      if (to_disk) metrics_out << metrics_csv_row(rec) << "\n" << std::flush;
    }
  };
  auto finish = [&](const std::string& status) {
    manifest.status = status;
    manifest.eval_seconds = eval_seconds;
    manifest.total_seconds = seconds_since(t_start);
    manifest.train_seconds = manifest.total_seconds - eval_seconds;
    if (to_disk) write_text(manifest.run_dir / "manifest.json", manifest.to_json());
  };

  checkpoint(0);
  const std::size_t z_dim = config.z_dim;
  const std::size_t b = config.batch;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    StepStats stats;
    stats.step = step;
    stats.mi_bound = kNaN;
    stats.mmd2 = kNaN;
    try {
      const auto rows = batches.next();
      Graph g;
      Var x = g.constant(gather_rows(train_set.examples, rows));
      GaussianPosterior post = encode(g, model.encoder, x);
      Var z = reparameterize(post, g.constant(noise_rng.normal_array(b, z_dim)));
      Var recon = decode(g, model.decoder, z);

      if (config.objective == ObjectiveKind::info_vae_mmd) {
        Var prior = g.constant(prior_rng.normal_array(b, z_dim));
        MmdLoss loss = mmd_infovae_loss(objective, x, post, z, recon, prior);
        g.backward(loss.loss, vae_params);
        stats.vae_loss = loss.loss.value().item();
        stats.recon_ll = loss.recon_ll.value().item();
        stats.kl = loss.kl.value().item();
        stats.mmd2 = loss.mmd2.value().item();
        vae_opt.step();
      } else if (uses_critic) {
        const Permutation perm = random_permutation(perm_rng, b, true);
        Var z_tilde = permute_codes(z, perm);
        CriticScores scores = critic_score_pair(g, model.critic, x, z, z_tilde);
        InfomaxLoss loss = infomax_loss(objective, x, post, recon, scores);
        g.backward(loss.vae_loss, vae_params);
        g.backward(loss.critic_loss, critic_params);
        stats.vae_loss = loss.vae_loss.value().item();
        stats.recon_ll = loss.recon_ll.value().item();
        stats.kl = loss.kl.value().item();
        stats.mi_bound = loss.mi.value().item();
        vae_opt.step();
        if (config.critic_updates >= 1) critic_opt.step();
        // Further critic steps reuse this batch's codes as constants.
        for (std::size_t k = 1; k < config.critic_updates; ++k) {
          critic_opt.zero_grad();
          Graph h;
          CriticScores s = critic_score_pair(h, model.critic, h.constant(x.value()),
                                             h.constant(z.value()), h.constant(z_tilde.value()));
          Var mi = mi_lower_bound(objective.divergence, s.joint, s.marginal);
          h.backward(diff::negate(mi), critic_params);
          critic_opt.step();
        }
      } else {
        InfomaxLoss loss = infomax_loss(objective, x, post, recon, std::nullopt);
        g.backward(loss.vae_loss, vae_params);
        stats.vae_loss = loss.vae_loss.value().item();
        stats.recon_ll = loss.recon_ll.value().item();
        stats.kl = loss.kl.value().item();
        vae_opt.step();
      }
      vae_opt.zero_grad();
      critic_opt.zero_grad();
    } catch (const NumericError& e) {
      finish("aborted");
      throw TrainingAborted("step " + std::to_string(step) + ": " + e.what(),
                            manifest.last_good_checkpoint);
    }

    if (step % config.log_every == 0 || step == config.steps) {
      result.log.push_back(stats);
      if (to_disk) log_out << log_row(stats) << "\n";
    }
    const bool periodic = config.checkpoint_every != 0 && step % config.checkpoint_every == 0;
    if (periodic || step == config.steps) checkpoint(step);
  }
  finish("ok");
  return result;
}

// ---------------------------------------------------------------------------

void export_latents(const Model& model, const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write latents to " + path.string());
  const PosteriorTable post = posterior_table(model.encoder, data.examples);
  const std::size_t d = model.encoder.z_dim;
  out << "label";
  for (std::size_t k = 1; k <= d; ++k) out << ",mu_" << k;
  for (std::size_t k = 1; k <= d; ++k) out << ",logvar_" << k;
  out << "\n";
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << (data.labeled() ? (*data.labels)[i] : -1);
    for (std::size_t k = 0; k < d; ++k) {
      std::snprintf(buf, sizeof buf, ",%.6f", post.mean(i, k));
      out << buf;
    }
    for (std::size_t k = 0; k < d; ++k) {
      std::snprintf(buf, sizeof buf, ",%.6f", post.log_var(i, k));
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "alpha") return SweepAxis::alpha;
  if (name == "beta") return SweepAxis::beta;
  throw ConfigError("unknown sweep axis '" + name + "' (expected alpha or beta)");
}

namespace {

std::vector<SweepEntry> run_sweep(const TrainConfig& base, SweepAxis axis,
                                  const std::vector<double>& values,
                                  const std::function<RunResult(const TrainConfig&)>& run) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  const std::string axis_name = axis == SweepAxis::alpha ? "alpha" : "beta";
  std::vector<SweepEntry> entries;
  for (double v : values) {
    TrainConfig cfg = base;
    (axis == SweepAxis::alpha ? cfg.alpha : cfg.beta) = v;
    if (!base.out.empty()) {
      cfg.out = (std::filesystem::path(base.out) / (axis_name + "_" + format_double(v))).string();
    }
    SweepEntry entry;
    entry.value = v;
    entry.run_dir = cfg.out;
    try {
      RunResult r = run(cfg);
      entry.status = r.manifest.status;
      if (!r.metrics.empty()) entry.final_metrics = r.metrics.back();
    } catch (const std::exception& e) {
      entry.status = std::string("failed: ") + e.what();
    }
    entries.push_back(std::move(entry));
  }
  if (!base.out.empty()) {
    std::filesystem::create_directories(base.out);
    std::string csv = "axis,value,status,mi,kl,au,elbo,probe_acc\n";
    for (const auto& e : entries) {
      std::string status = e.status;
      for (char& c : status) {
        if (c == ',' || c == '\n') c = ';';
      }
      std::string metrics = "nan,nan,nan,nan,nan";
      if (e.final_metrics) {
        const std::string row = metrics_csv_row(*e.final_metrics);
        metrics = row.substr(row.find(',') + 1);
      }
      csv += axis_name + "," + format_double(e.value) + "," + status + "," + metrics + "\n";
    }
    write_text(std::filesystem::path(base.out) / "sweep.csv", csv);
  }
  return entries;
}

}  // namespace

std::vector<SweepEntry> sweep(const TrainConfig& base, SweepAxis axis,
                              const std::vector<double>& values) {
  return run_sweep(base, axis, values, [](const TrainConfig& c) { return train(c); });
}

std::vector<SweepEntry> sweep(const TrainConfig& base, SweepAxis axis,
                              const std::vector<double>& values, const Split& data) {
  return run_sweep(base, axis, values, [&](const TrainConfig& c) { return train(c, data); });
}

}  // namespace imvae
