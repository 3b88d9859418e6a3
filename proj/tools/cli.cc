// Copyright 2026 The dpflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.h"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dpflow/accountant.h"
#include "dpflow/anomaly.h"
#include "dpflow/dataset.h"
#include "dpflow/dp_init.h"
#include "dpflow/dp_optim.h"
#include "dpflow/error.h"
#include "dpflow/evaluation.h"
#include "dpflow/flow_model.h"
#include "dpflow/generators.h"
#include "dpflow/gmm.h"
#include "dpflow/random.h"

namespace dpflow::cli {
namespace {

using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::uint64_t seed = 0;
  json privacy = nullptr;
  std::vector<std::string> outputs;

  void Wrote(const std::string& path) { outputs.push_back(path); }
};

using Runner = std::function<json(Context&)>;

// Seed streams for the independent random consumers of one run.
enum SeedStream : std::uint64_t {
  kModelInit = 10,
  kTraining = 11,
  kPriorFit = 12,
  kActNormInit = 13,
  kAnomalies = 14,
  kQueries = 15,
  kEnsemble = 16,
  kSplits = 17,
};

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> ToStd(const Vector& v) { return {v.begin(), v.end()}; }

Vector FromStd(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void WriteText(const std::string& path, const std::string& text, Context& ctx) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInputError("cannot write " + path);
  f << text;
  if (!f) throw InvalidInputError("error writing " + path);
  ctx.Wrote(path);
}

std::vector<std::string> NumberedNames(const std::string& prefix,
                                       Eigen::Index count) {
  std::vector<std::string> names;
  for (Eigen::Index i = 1; i <= count; ++i) {
    names.push_back(prefix + std::to_string(i));
  }
  return names;
}

void WriteCsv(const std::string& path, const RowMatrix& values,
              const std::vector<std::string>& names, Context& ctx) {
  SaveCsv(path, values, names);
  ctx.Wrote(path);
}

// ---------------------------------------------------------------------------
// Models on disk carry the standardization applied before training so that
// densities and samples are reported in data units.

struct StoredModel {
  FlowModel model;
  std::optional<Standardization> standardization;

  // log p(x) in data units.
  Vector LogProbRows(const RowMatrix& x) const {
    if (!standardization) return model.LogProbRows(x);
    const double shift = standardization->std.array().log().sum();
    return model.LogProbRows(ApplyStandardization(x, *standardization))
               .array() -
           shift;
  }
  RowMatrix Sample(int n, std::uint64_t seed) const {
    RowMatrix z = model.Sample(n, seed);
    return standardization ? Unstandardize(z, *standardization) : z;
  }
};

void SaveModel(const std::string& path, const StoredModel& m, Context& ctx) {
  json j = m.model.ToJson();
  if (m.standardization) {
    j["standardization"] = {{"mean", ToStd(m.standardization->mean)},
                            {"std", ToStd(m.standardization->std)}};
  }
  WriteText(path, j.dump(1) + "\n", ctx);
}

StoredModel LoadModel(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInputError("cannot open " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  StoredModel m{FlowModel::FromJson(j), std::nullopt};
  if (j.contains("standardization")) {
    const auto& s = j.at("standardization");
    m.standardization = Standardization{
        FromStd(s.at("mean").get<std::vector<double>>()),
        FromStd(s.at("std").get<std::vector<double>>())};
    if (m.standardization->mean.size() != m.model.dim() ||
        m.standardization->std.size() != m.model.dim()) {
      throw FormatError(path + ": standardization dimension mismatch");
    }
  }
  return m;
}

RowMatrix LoadValues(const std::string& path, bool header) {
  return LoadCsv(path, header).values;
}

// Flags do not capture their defaults; record them for the manifest.
CLI::Option* AddFlag(CLI::App* app, const std::string& name, bool& value,
                     const std::string& description) {
  return app->add_flag(name, value, description)
      ->default_str(value ? "true" : "false");
}

// ---------------------------------------------------------------------------
// Option groups shared between subcommands.

struct FlowOptions {
  int blocks = 5;
  int hidden = 64;
  bool actnorm = false;
  double scale_clamp = 5.0;
  double head_init_scale = 0.01;

  void Add(CLI::App* app) {
    app->add_option("--blocks", blocks, "MADE blocks")->check(CLI::PositiveNumber);
    app->add_option("--hidden", hidden, "hidden units per MADE layer")
        ->check(CLI::PositiveNumber);
    AddFlag(app, "--actnorm", actnorm, "insert an ActNorm layer per block");
    app->add_option("--scale-clamp", scale_clamp, "bound on MADE log-scales")
        ->check(CLI::PositiveNumber);
    app->add_option("--head-init-scale", head_init_scale,
                    "initial scale of the MADE output heads");
  }
  MafConfig Config(int dim, bool force_actnorm = false) const {
    return {dim, blocks, hidden, actnorm || force_actnorm, scale_clamp,
            head_init_scale};
  }
};

struct DpOptions {
  double lr = 1e-3;
  int batch_size = 256;
  double sigma = 1.1;
  double clip = 10.0;
  double epsilon = 1.0;
  double delta = 1e-5;
  std::string accountant = "gdp";
  std::string optimizer = "adam";
  std::int64_t max_iterations = 1000000;
  std::string sampling = "uniform";
  std::int64_t checkpoint_every = 100;

  void Add(CLI::App* app) {
    app->add_option("--lr", lr, "learning rate");
    app->add_option("--batch-size", batch_size, "expected batch size b");
    app->add_option("--sigma", sigma, "noise multiplier");
    app->add_option("--clip", clip, "per-example gradient clipping norm");
    app->add_option("--epsilon", epsilon, "training privacy budget");
    app->add_option("--delta", delta, "training privacy tolerance");
    app->add_option("--accountant", accountant, "gdp or rdp (alias ma)");
    app->add_option("--optimizer", optimizer, "adam or sgd");
    app->add_option("--max-iterations", max_iterations, "iteration cap");
    app->add_option("--sampling", sampling, "uniform or poisson");
    app->add_option("--checkpoint-every", checkpoint_every,
                    "checkpoint interval in steps (0 = initial and final only)");
  }
  TrainConfig Config(std::uint64_t seed) const {
    TrainConfig c;
    c.learning_rate = lr;
    c.batch_size = batch_size;
    c.noise_multiplier = sigma;
    c.clip_norm = clip;
    c.epsilon = epsilon;
    c.delta = delta;
    c.accountant = ParseAccountantMethod(accountant);
    c.optimizer = ParseOptimizerKind(optimizer);
    c.max_iterations = max_iterations;
    c.seed = seed;
    c.sampling = ParseSamplingMode(sampling);
    c.checkpoint_every = checkpoint_every;
    return c;
  }
};

struct PriorOptions {
  std::string prior = "standard-normal";
  int components = 5;
  int em_iterations = 200;

  void Add(CLI::App* app) {
    app->add_option("--prior", prior,
                    "base density: standard-normal or gmm (non-private EM fit)");
    app->add_option("--prior-components", components, "GMM components");
    app->add_option("--prior-iterations", em_iterations, "EM iterations");
  }
};

struct InitOptions {
  bool dp_init = false;
  double clip_range = 8.0;
  double epsilon = 0.1;
  double delta = 1e-6;

  void Add(CLI::App* app) {
    AddFlag(app, "--dp-init", dp_init,
                  "privately initialize ActNorm layers before training");
    app->add_option("--init-clip-range", clip_range, "clip width c");
    app->add_option("--init-epsilon", epsilon, "initialization budget");
    app->add_option("--init-delta", delta, "initialization tolerance");
  }
  InitConfig Config(std::uint64_t seed) const {
    InitConfig c;
    c.clip_range = clip_range;
    c.epsilon = epsilon;
    c.delta = delta;
    c.seed = seed;
    return c;
  }
};

struct TrainedModel {
  StoredModel stored;
  TrainReport report;
  json privacy;
};

// Standardize, build, optionally fit a prior and privately initialize, then
// train. `heldout` is in data units.
TrainedModel TrainPipeline(const RowMatrix& raw, bool standardize,
                           const FlowOptions& flow, const DpOptions& dp,
                           const PriorOptions& prior, const InitOptions& init,
                           std::uint64_t seed, const RowMatrix& heldout,
                           const CheckpointCallback& on_checkpoint) {
  std::optional<Standardization> s;
  RowMatrix data = raw;
  RowMatrix held = heldout;
  if (standardize) {
    s = FitStandardization(raw);
    data = ApplyStandardization(raw, *s);
    if (held.rows() > 0) held = ApplyStandardization(heldout, *s);
  }
  FlowModel model = FlowModel::MakeMaf(
      flow.Config(static_cast<int>(data.cols()), init.dp_init),
      DeriveSeed(seed, kModelInit));
  json privacy;
  if (prior.prior != "gmm" && prior.prior != "standard-normal") {
    throw ConfigurationError("unknown prior: " + prior.prior);
  }
  double eps_total = 0.0;
  double delta_total = 0.0;
  if (init.dp_init) {
    InitReport r =
        DpNfInit(data, model, init.Config(DeriveSeed(seed, kActNormInit)));
    privacy["init"] = r.ToJson();
    eps_total += init.epsilon;
    delta_total += init.delta;
  }
  // Fit after initialization so the prior sees the initialized latents.
  if (prior.prior == "gmm") {
    FitGmmBase(data, model, prior.components, prior.em_iterations,
               DeriveSeed(seed, kPriorFit));
    privacy["prior"] = "non-private EM fit (not covered by the budget)";
  }
  const TrainConfig config = dp.Config(DeriveSeed(seed, kTraining));
  TrainResult result =
      TrainDpNf(data, std::move(model), config, held, on_checkpoint);
  eps_total += result.report.final_epsilon;
  delta_total += config.delta;

  privacy["accountant"] = ToString(config.accountant);
  if (config.accountant == AccountantMethod::kGdp) {
    privacy["accountant_note"] = kGdpApproximationLabel;
  }
  if (config.sampling == SamplingMode::kPoisson) {
    privacy["sampling_note"] =
        "Poisson sampling accounted with the fixed-size subsampling bound";
  }
  privacy["q"] = static_cast<double>(config.batch_size) / data.rows();
  privacy["noise_multiplier"] = config.noise_multiplier;
  privacy["steps"] = result.report.iterations;
  privacy["train_epsilon"] = result.report.final_epsilon;
  privacy["train_delta"] = config.delta;
  privacy["total_epsilon"] = eps_total;
  privacy["total_delta"] = delta_total;
  privacy["composition"] = "sequential";
  if (standardize) {
    privacy["standardization"] = "non-private feature means and stds";
  }
  return {{std::move(result.model), s}, std::move(result.report),
          std::move(privacy)};
}

// ---------------------------------------------------------------------------
// Subcommands.

Runner AddGenData(CLI::App& app) {
  auto* sub = app.add_subcommand("gen-data", "generate a synthetic dataset");
  struct Opts {
    std::string shape = "half-moons";
    int n = 30000;
    double noise = 0.1;
    PinwheelParams pinwheel;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--shape", o->shape, "half-moons, pinwheel or gaussians8")
      ->check(CLI::IsMember({"half-moons", "pinwheel", "gaussians8"}));
  sub->add_option("--n", o->n, "rows")->check(CLI::PositiveNumber);
  sub->add_option("--noise", o->noise, "half-moons noise std");
  sub->add_option("--arms", o->pinwheel.arms, "pinwheel arms");
  sub->add_option("--radial-std", o->pinwheel.radial_std, "pinwheel radial std");
  sub->add_option("--tangential-std", o->pinwheel.tangential_std,
                  "pinwheel tangential std");
  sub->add_option("--rate", o->pinwheel.rate, "pinwheel warp rate");
  sub->add_option("--out", o->out, "output CSV")->required();
  return [o](Context& ctx) {
    Dataset d;
    if (o->shape == "half-moons") {
      d = GenHalfMoons(o->n, o->noise, ctx.seed);
    } else if (o->shape == "pinwheel") {
      d = GenPinwheel(o->n, o->pinwheel, ctx.seed);
    } else {
      d = GenGaussians8(o->n, ctx.seed);
    }
    WriteCsv(o->out, d.values, d.column_names, ctx);
    return json{{"rows", d.rows()}, {"cols", d.cols()}};
  };
}

Runner AddTrain(CLI::App& app) {
  auto* sub = app.add_subcommand("train", "train a differentially private flow");
  struct Opts {
    std::string data, heldout, out, report;
    bool header = false;
    bool standardize = true;
    FlowOptions flow;
    DpOptions dp;
    PriorOptions prior;
    InitOptions init;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--data", o->data, "training CSV")->required();
  sub->add_option("--heldout", o->heldout, "held-out CSV for checkpoints");
  AddFlag(sub, "--header", o->header, "CSV inputs have a header line");
  AddFlag(sub, "--standardize", o->standardize, "standardize features first");
  sub->add_option("--out", o->out, "model file")->required();
  sub->add_option("--report", o->report,
                  "JSON-lines checkpoint report (default: <out>.report.jsonl)");
  o->flow.Add(sub);
  o->dp.Add(sub);
  o->prior.Add(sub);
  o->init.Add(sub);
  return [o](Context& ctx) {
    const RowMatrix data = LoadValues(o->data, o->header);
    const RowMatrix heldout =
        o->heldout.empty() ? RowMatrix() : LoadValues(o->heldout, o->header);
    const std::string report_path =
        o->report.empty() ? o->out + ".report.jsonl" : o->report;
    TrainedModel t =
        TrainPipeline(data, o->standardize, o->flow, o->dp, o->prior, o->init,
                      ctx.seed, heldout, {});
    SaveModel(o->out, t.stored, ctx);
    std::string lines;
    for (const auto& cp : t.report.checkpoints) lines += cp.ToJson().dump() + "\n";
    WriteText(report_path, lines, ctx);
    ctx.privacy = t.privacy;
    json metrics = t.report.ToJson();
    metrics.erase("checkpoints");
    const auto& last = t.report.checkpoints.back();
    metrics["train_nll"] = last.ToJson()["train_nll"];
    metrics["heldout_nll"] = last.ToJson()["heldout_nll"];
    return metrics;
  };
}

Runner AddSample(CLI::App& app) {
  auto* sub = app.add_subcommand("sample", "draw samples from a model");
  struct Opts {
    std::string model, out;
    int n = 1000;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--model", o->model, "model file")->required();
  sub->add_option("--n", o->n, "samples")->check(CLI::PositiveNumber);
  sub->add_option("--out", o->out, "output CSV")->required();
  return [o](Context& ctx) {
    const StoredModel m = LoadModel(o->model);
    const RowMatrix x = m.Sample(o->n, ctx.seed);
    WriteCsv(o->out, x, NumberedNames("x", x.cols()), ctx);
    return json{{"rows", x.rows()}};
  };
}

Runner AddLogProb(CLI::App& app) {
  auto* sub = app.add_subcommand("logprob", "evaluate log-densities");
  struct Opts {
    std::string model, data, out;
    bool header = false;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--model", o->model, "model file")->required();
  sub->add_option("--data", o->data, "input CSV")->required();
  AddFlag(sub, "--header", o->header, "CSV has a header line");
  sub->add_option("--out", o->out, "output CSV (one log_prob per row)")
      ->required();
  return [o](Context& ctx) {
    const StoredModel m = LoadModel(o->model);
    const Vector lp = m.LogProbRows(LoadValues(o->data, o->header));
    WriteCsv(o->out, lp, {"log_prob"}, ctx);
    return json{{"rows", lp.size()}, {"mean_log_prob", lp.mean()}};
  };
}

Runner AddEvalLl(CLI::App& app) {
  auto* sub = app.add_subcommand(
      "eval-ll", "cross-validated mean test log-likelihood");
  struct Opts {
    std::string data, out;
    bool header = false;
    bool standardize = true;
    int folds = 10;
    FlowOptions flow;
    DpOptions dp;
    PriorOptions prior;
    InitOptions init;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--data", o->data, "dataset CSV")->required();
  AddFlag(sub, "--header", o->header, "CSV has a header line");
  AddFlag(sub, "--standardize", o->standardize,
                "standardize with training-split statistics");
  sub->add_option("--folds", o->folds, "independent 90/10 splits");
  sub->add_option("--out", o->out, "per-split CSV (split, test_ll, epsilon)")
      ->required();
  o->flow.Add(sub);
  o->dp.Add(sub);
  o->prior.Add(sub);
  o->init.Add(sub);
  return [o](Context& ctx) {
    const RowMatrix data = LoadValues(o->data, o->header);
    const CvSplit splits =
        MakeCvSplits(data.rows(), o->folds, DeriveSeed(ctx.seed, kSplits));
    RowMatrix table(splits.size(), 3);
    json privacy;
    for (std::size_t f = 0; f < splits.size(); ++f) {
      const RowMatrix train = SelectRows(data, splits[f].train);
      const RowMatrix test = SelectRows(data, splits[f].test);
      TrainedModel t = TrainPipeline(train, o->standardize, o->flow, o->dp,
                                     o->prior, o->init, DeriveSeed(ctx.seed, f),
                                     RowMatrix(), {});
      table(f, 0) = static_cast<double>(f);
      table(f, 1) = t.stored.LogProbRows(test).mean();
      table(f, 2) = t.report.final_epsilon;
      privacy = t.privacy;
    }
    WriteCsv(o->out, table, {"split", "test_ll", "epsilon"}, ctx);
    const Vector ll = table.col(1);
    const double mean = ll.mean();
    const double sd =
        ll.size() > 1
            ? std::sqrt((ll.array() - mean).square().sum() / (ll.size() - 1))
            : 0.0;
    privacy.erase("init");
    privacy["note"] = "budget applies per split; splits share data";
    ctx.privacy = privacy;
    return json{{"mean_test_ll", mean},
                {"std_test_ll", sd},
                {"folds", splits.size()},
                {"table", FormatDouble(mean) + " +/- " + FormatDouble(sd)}};
  };
}

Runner AddAccountant(CLI::App& app) {
  auto* sub = app.add_subcommand("accountant",
                                 "epsilon versus steps for RDP and GDP");
  struct Opts {
    double q = 0.01;
    double sigma = 1.1;
    double delta = 1e-5;
    std::int64_t t_max = 100000;
    int points = 50;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--q", o->q, "sampling ratio b/n")->required();
  sub->add_option("--sigma", o->sigma, "noise multiplier")->required();
  sub->add_option("--delta", o->delta, "privacy tolerance");
  sub->add_option("--t-max", o->t_max, "largest step count")
      ->check(CLI::PositiveNumber);
  sub->add_option("--points", o->points, "log-spaced grid points")
      ->check(CLI::PositiveNumber);
  sub->add_option("--out", o->out, "output CSV (t, eps_rdp, eps_gdp, mu)")
      ->required();
  return [o](Context& ctx) {
    RdpAccountant rdp(o->q, o->sigma, o->delta);
    GdpAccountant gdp(o->q, o->sigma, o->delta);
    std::set<std::int64_t> grid{o->t_max};
    for (int i = 0; i < o->points; ++i) {
      const double frac = o->points == 1 ? 1.0 : i / (o->points - 1.0);
      grid.insert(std::max<std::int64_t>(
          1, std::llround(std::pow(static_cast<double>(o->t_max), frac))));
    }
    RowMatrix table(grid.size(), 4);
    Eigen::Index r = 0;
    for (std::int64_t t : grid) {
      table.row(r++) << static_cast<double>(t), rdp.Epsilon(t), gdp.Epsilon(t),
          gdp.Mu(t);
    }
    WriteCsv(o->out, table, {"t", "eps_rdp", "eps_gdp", "mu"}, ctx);
    ctx.privacy = {{"gdp_note", kGdpApproximationLabel}};
    return json{{"rows", table.rows()},
                {"eps_rdp_at_t_max", rdp.Epsilon(o->t_max)},
                {"eps_gdp_at_t_max", gdp.Epsilon(o->t_max)}};
  };
}

Runner AddInit(CLI::App& app) {
  auto* sub = app.add_subcommand("init", "private ActNorm initialization");
  struct Opts {
    std::string data, model, out;
    bool header = false;
    bool standardize = true;
    FlowOptions flow;
    double clip_range = 8.0;
    double epsilon = 1.0;
    double delta = 1e-5;
    std::optional<double> mean_sensitivity;
    std::optional<double> std_sensitivity;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--data", o->data, "dataset CSV")->required();
  AddFlag(sub, "--header", o->header, "CSV has a header line");
  sub->add_option("--model", o->model,
                  "existing model file (default: a fresh flow with ActNorm)");
  AddFlag(sub, "--standardize", o->standardize,
                "standardize a fresh model's input (ignored with --model)");
  o->flow.Add(sub);
  sub->add_option("--clip-range", o->clip_range, "clip width c");
  sub->add_option("--epsilon", o->epsilon, "initialization budget (inf = no noise)");
  sub->add_option("--delta", o->delta, "initialization tolerance");
  sub->add_option("--mean-sensitivity", o->mean_sensitivity,
                  "override the mean sensitivity");
  sub->add_option("--std-sensitivity", o->std_sensitivity,
                  "override the std sensitivity");
  sub->add_option("--out", o->out, "initialized model file")->required();
  return [o](Context& ctx) {
    RowMatrix data = LoadValues(o->data, o->header);
    StoredModel m = o->model.empty()
                        ? StoredModel{FlowModel::MakeMaf(
                                          o->flow.Config(data.cols(), true),
                                          DeriveSeed(ctx.seed, kModelInit)),
                                      std::nullopt}
                        : LoadModel(o->model);
    if (o->model.empty() && o->standardize) {
      m.standardization = FitStandardization(data);
    }
    if (m.standardization) data = ApplyStandardization(data, *m.standardization);
    InitConfig config;
    config.clip_range = o->clip_range;
    config.epsilon = o->epsilon;
    config.delta = o->delta;
    config.seed = DeriveSeed(ctx.seed, kActNormInit);
    config.mean_sensitivity = o->mean_sensitivity;
    config.std_sensitivity = o->std_sensitivity;
    const InitReport report = DpNfInit(data, m.model, config);
    SaveModel(o->out, m, ctx);
    ctx.privacy = report.ToJson();
    ctx.privacy.erase("actnorm_layers");
    return report.ToJson();
  };
}

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;
};

// In-distribution rows get label 1, anomalies 0.
ScoredSet Concatenate(const Vector& in, const Vector& out) {
  ScoredSet s;
  for (double v : in) {
    s.scores.push_back(v);
    s.labels.push_back(1);
  }
  for (double v : out) {
    s.scores.push_back(v);
    s.labels.push_back(0);
  }
  return s;
}

RowMatrix AnomaliesFor(const std::string& path, bool header,
                       const RowMatrix& reference, std::uint64_t seed) {
  if (!path.empty()) return LoadValues(path, header);
  return GenTailAnomalies(reference, static_cast<int>(reference.rows()), seed);
}

Runner AddAnomalyRoc(CLI::App& app) {
  auto* sub = app.add_subcommand("anomaly-roc",
                                 "ROC of likelihood-threshold detection");
  struct Opts {
    std::string model, test, anomalies, out;
    bool header = false;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--model", o->model, "model file")->required();
  sub->add_option("--test", o->test, "in-distribution test CSV")->required();
  sub->add_option("--anomalies", o->anomalies,
                  "anomaly CSV (default: tail anomalies of the test set)");
  AddFlag(sub, "--header", o->header, "CSVs have a header line");
  sub->add_option("--out", o->out, "ROC CSV (threshold, fpr, tpr)")->required();
  return [o](Context& ctx) {
    const StoredModel m = LoadModel(o->model);
    const RowMatrix test = LoadValues(o->test, o->header);
    const RowMatrix anomalies = AnomaliesFor(
        o->anomalies, o->header, test, DeriveSeed(ctx.seed, kAnomalies));
    const ScoredSet s =
        Concatenate(m.LogProbRows(test), m.LogProbRows(anomalies));
    const RocCurve roc = Roc(s.scores, s.labels);
    RowMatrix table(roc.points.size(), 3);
    for (std::size_t i = 0; i < roc.points.size(); ++i) {
      table.row(i) << roc.points[i].threshold, roc.points[i].fpr,
          roc.points[i].tpr;
    }
    WriteCsv(o->out, table, {"threshold", "fpr", "tpr"}, ctx);
    const ThresholdChoice best = SelectThreshold(s.scores, s.labels);
    return json{{"auc", roc.auc},
                {"threshold", best.threshold},
                {"accuracy", best.accuracy},
                {"in_rows", test.rows()},
                {"anomaly_rows", anomalies.rows()}};
  };
}

Runner AddDpAd(CLI::App& app) {
  auto* sub = app.add_subcommand(
      "dp-ad", "private ensemble anomaly detection, accuracy versus epsilon");
  struct Opts {
    std::string data, test, anomalies, out;
    bool header = false;
    bool standardize = true;
    int k = 10;
    FlowOptions flow;
    NonPrivateConfig training;
    std::optional<double> threshold;
    std::vector<double> epsilons{0.01, 0.1, 0.5, 1, 2, 5, 10, 1000000};
  };
  auto o = std::make_shared<Opts>();
  o->flow.blocks = 3;
  o->flow.hidden = 32;
  sub->add_option("--data", o->data, "training CSV (partitioned)")->required();
  sub->add_option("--test", o->test, "in-distribution test CSV")->required();
  sub->add_option("--anomalies", o->anomalies,
                  "anomaly CSV (default: tail anomalies of the test set)");
  AddFlag(sub, "--header", o->header, "CSVs have a header line");
  AddFlag(sub, "--standardize", o->standardize,
                "standardize with training statistics");
  sub->add_option("--k", o->k, "partitions")->check(CLI::PositiveNumber);
  o->flow.Add(sub);
  sub->add_option("--lr", o->training.learning_rate, "member learning rate");
  sub->add_option("--batch-size", o->training.batch_size, "member batch size");
  sub->add_option("--iterations", o->training.iterations, "member iterations");
  sub->add_option("--threshold", o->threshold,
                  "log-density threshold (default: best on the test set)");
  sub->add_option("--epsilons", o->epsilons, "per-query budgets")
      ->delimiter(',');
  sub->add_option("--out", o->out, "CSV (epsilon, accuracy)")->required();
  return [o](Context& ctx) {
    RowMatrix data = LoadValues(o->data, o->header);
    RowMatrix test = LoadValues(o->test, o->header);
    RowMatrix anomalies = AnomaliesFor(o->anomalies, o->header, test,
                                       DeriveSeed(ctx.seed, kAnomalies));
    if (o->standardize) {
      const Standardization s = FitStandardization(data);
      data = ApplyStandardization(data, s);
      test = ApplyStandardization(test, s);
      anomalies = ApplyStandardization(anomalies, s);
    }
    NonPrivateConfig training = o->training;
    training.seed = DeriveSeed(ctx.seed, kTraining);
    EnsembleDetector detector =
        BuildEnsemble(data, o->k, o->flow.Config(data.cols()), training, 0.0,
                      DeriveSeed(ctx.seed, kEnsemble));
    RowMatrix points(test.rows() + anomalies.rows(), data.cols());
    points << test, anomalies;
    std::vector<int> labels(points.rows(), 0);
    std::fill(labels.begin(), labels.begin() + test.rows(), 1);

    if (o->threshold) {
      detector.set_threshold(*o->threshold);
    } else {
      std::vector<double> pooled;
      std::vector<int> pooled_labels;
      for (const auto& member : detector.members()) {
        const Vector lp = member.LogProbRows(points);
        pooled.insert(pooled.end(), lp.begin(), lp.end());
        pooled_labels.insert(pooled_labels.end(), labels.begin(), labels.end());
      }
      detector.set_threshold(SelectThreshold(pooled, pooled_labels).threshold);
    }

    std::vector<int> votes(points.rows());
    int majority_correct = 0;
    int ties = 0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      votes[i] = detector.CountVotes(points.row(i).transpose());
      ties += 2 * votes[i] == detector.size() ? 1 : 0;
      const bool in = 2 * votes[i] > detector.size();
      majority_correct += (in == (labels[i] == 1)) ? 1 : 0;
    }
    RowMatrix table(o->epsilons.size(), 2);
    for (std::size_t e = 0; e < o->epsilons.size(); ++e) {
      int correct = 0;
      for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const auto label =
            ExpMechBinary(votes[i], detector.size(), o->epsilons[e],
                          DeriveSeed(DeriveSeed(ctx.seed, kQueries + e), i));
        correct += (label == DistributionLabel::kInDistribution) ==
                           (labels[i] == 1)
                       ? 1
                       : 0;
      }
      table.row(e) << o->epsilons[e],
          static_cast<double>(correct) / points.rows();
    }
    WriteCsv(o->out, table, {"epsilon", "accuracy"}, ctx);
    json spend = json::array();
    for (double eps : o->epsilons) {
      spend.push_back({{"per_query_epsilon", eps},
                       {"queries", points.rows()},
                       {"cumulative_epsilon", eps * points.rows()}});
    }
    ctx.privacy = {{"composition", "simple, per query"}, {"sweeps", spend}};
    return json{{"threshold", detector.threshold()},
                {"partitions", detector.size()},
                {"queries", points.rows()},
                {"majority_vote_accuracy",
                 static_cast<double>(majority_correct) / points.rows()},
                {"vote_ties", ties}};
  };
}

Runner AddDownstreamKnn(CLI::App& app) {
  auto* sub = app.add_subcommand(
      "downstream-knn", "kNN regression on the last column, MSE on a test set");
  struct Opts {
    std::string train, test, out;
    bool header = false;
    int k = 3;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--train", o->train, "training CSV (real or synthetic)")
      ->required();
  sub->add_option("--test", o->test, "test CSV")->required();
  AddFlag(sub, "--header", o->header, "CSVs have a header line");
  sub->add_option("--k", o->k, "neighbours")->check(CLI::PositiveNumber);
  sub->add_option("--out", o->out, "JSON result file");
  return [o](Context& ctx) {
    const double mse = KnnRegressMse(LoadValues(o->train, o->header),
                                     LoadValues(o->test, o->header), o->k);
    json result{{"mse", mse}, {"k", o->k}};
    if (!o->out.empty()) WriteText(o->out, result.dump() + "\n", ctx);
    return result;
  };
}

Runner AddProjectPca(CLI::App& app) {
  auto* sub = app.add_subcommand("project-pca", "PCA projection");
  struct Opts {
    std::string data, fit, out;
    bool header = false;
    int components = 2;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--data", o->data, "CSV to project")->required();
  sub->add_option("--fit", o->fit, "CSV to fit the components on (default: --data)");
  AddFlag(sub, "--header", o->header, "CSVs have a header line");
  sub->add_option("--components", o->components, "output dimensions");
  sub->add_option("--out", o->out, "projected CSV")->required();
  return [o](Context& ctx) {
    const RowMatrix data = LoadValues(o->data, o->header);
    const PcaResult pca = PcaProject(
        o->fit.empty() ? data : LoadValues(o->fit, o->header), o->components);
    if (data.cols() != pca.mean.size()) {
      throw InvalidInputError("--data and --fit differ in dimension");
    }
    const RowMatrix projected =
        (data.rowwise() - pca.mean.transpose()) * pca.components.transpose();
    WriteCsv(o->out, projected, NumberedNames("pc", projected.cols()), ctx);
    json components = json::array();
    for (Eigen::Index c = 0; c < pca.components.rows(); ++c) {
      components.push_back(ToStd(pca.components.row(c).transpose()));
    }
    return json{{"explained_variance", ToStd(pca.explained_variance)},
                {"components", components}};
  };
}

Runner AddHist(CLI::App& app) {
  auto* sub = app.add_subcommand("hist", "dimension-wise histograms");
  struct Opts {
    std::string data, out;
    bool header = false;
    int bins = 50;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--data", o->data, "input CSV")->required();
  AddFlag(sub, "--header", o->header, "CSV has a header line");
  sub->add_option("--bins", o->bins, "bins per dimension");
  sub->add_option("--out", o->out, "CSV (dimension, lower, upper, count)")
      ->required();
  return [o](Context& ctx) {
    const auto hists = DimwiseHistogram(LoadValues(o->data, o->header), o->bins);
    RowMatrix table(hists.size() * o->bins, 4);
    Eigen::Index r = 0;
    for (std::size_t d = 0; d < hists.size(); ++d) {
      for (int b = 0; b < o->bins; ++b) {
        table.row(r++) << static_cast<double>(d), hists[d].edges[b],
            hists[d].edges[b + 1], static_cast<double>(hists[d].counts[b]);
      }
    }
    WriteCsv(o->out, table, {"dimension", "lower", "upper", "count"}, ctx);
    return json{{"dimensions", hists.size()}, {"bins", o->bins}};
  };
}

// ---------------------------------------------------------------------------
// Config files and manifests.

std::string OptionName(const CLI::Option* opt) {
  const auto& names = opt->get_lnames();
  return names.empty() ? std::string() : names.front();
}

bool IsVectorOption(const CLI::Option* opt) {
  return opt->get_expected_max() > 1;
}

// Resolved value of every named option: explicit results or the default.
// Numbers go into the manifest as JSON numbers; anything else (including
// "inf") stays a string.
json TypedValue(const std::string& text) {
  const char* first = text.data();
  const char* last = first + text.size();
  std::int64_t i = 0;
  if (auto r = std::from_chars(first, last, i); r.ec == std::errc() && r.ptr == last) {
    return i;
  }
  std::uint64_t u = 0;
  if (auto r = std::from_chars(first, last, u); r.ec == std::errc() && r.ptr == last) {
    return u;
  }
  double d = 0.0;
  if (auto r = std::from_chars(first, last, d);
      r.ec == std::errc() && r.ptr == last && std::isfinite(d)) {
    return d;
  }
  return text;
}

json ResolvedConfig(const CLI::App* sub) {
  json config = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = OptionName(opt);
    if (name.empty() || name == "help" || name == "config") continue;
    if (opt->get_expected_max() == 0) {
      config[name] = opt->count() > 0 ? opt->as<bool>()
                                      : opt->get_default_str() == "true";
      continue;
    }
    std::vector<std::string> values = opt->results();
    if (opt->count() == 0) {
      std::string d = opt->get_default_str();
      if (d.size() >= 2 && d.front() == '[' && d.back() == ']') {
        d = d.substr(1, d.size() - 2);
      }
      values.clear();
      if (!d.empty()) {
        std::stringstream ss(d);
        std::string item;
        while (std::getline(ss, item, ',')) values.push_back(item);
      }
    }
    if (IsVectorOption(opt)) {
      json items = json::array();
      for (const auto& v : values) items.push_back(TypedValue(v));
      config[name] = std::move(items);
    } else if (values.empty()) {
      config[name] = nullptr;
    } else {
      config[name] = TypedValue(values.back());
    }
  }
  return config;
}

std::string ScalarToArg(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) return FormatDouble(v.get<double>());
  return v.dump();
}

// Turns a config object (or a manifest holding one) into flag arguments,
// skipping anything given explicitly on the command line.
std::vector<std::string> ConfigArgs(const std::string& path,
                                    const std::string& command,
                                    const std::set<std::string>& explicit_flags) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw UsageError("config file " + path + ": " + e.what());
  }
  if (j.contains("command") && j["command"] != command) {
    throw UsageError("config file " + path + " is for '" +
                     j["command"].get<std::string>() + "', not '" + command +
                     "'");
  }
  const json& config = j.contains("config") ? j["config"] : j;
  if (!config.is_object()) throw UsageError("config must be a JSON object");
  std::vector<std::string> args;
  for (const auto& [key, value] : config.items()) {
    if (explicit_flags.count(key) || value.is_null()) continue;
    if (value.is_array()) {
      if (value.empty()) continue;
      std::string joined;
      for (const auto& item : value) {
        joined += (joined.empty() ? "" : ",") + ScalarToArg(item);
      }
      args.push_back("--" + key + "=" + joined);
    } else {
      args.push_back("--" + key + "=" + ScalarToArg(value));
    }
  }
  return args;
}

std::set<std::string> ExplicitFlags(const std::vector<std::string>& args) {
  std::set<std::string> flags;
  for (const auto& a : args) {
    if (a.rfind("--", 0) == 0 && a.size() > 2) {
      flags.insert(a.substr(2, a.find('=') - 2));
    }
  }
  return flags;
}

std::optional<std::string> FindConfigPath(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a path");
      return args[i + 1];
    }
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

std::string ManifestPath(const CLI::App* sub, const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  for (const CLI::Option* opt : sub->get_options()) {
    if (OptionName(opt) == "out" && opt->count() > 0) {
      return opt->results().back() + ".manifest.json";
    }
  }
  return "dpflow-" + sub->get_name() + ".manifest.json";
}

}  // namespace

int Dispatch(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err) {
  CLI::App app("Differentially private normalizing flows", "dpflow");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::map<std::string, Runner> runners;
  for (auto add : {AddGenData, AddTrain, AddSample, AddLogProb, AddEvalLl,
                   AddAccountant, AddInit, AddAnomalyRoc, AddDpAd,
                   AddDownstreamKnn, AddProjectPca, AddHist}) {
    Runner r = add(app);
    runners[app.get_subcommands({}).back()->get_name()] = std::move(r);
  }
  std::uint64_t seed = 0;
  std::string manifest;
  std::string config_path;
  for (CLI::App* sub : app.get_subcommands({})) {
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--manifest", manifest,
                    "manifest path (default: <out>.manifest.json)");
    sub->add_option("--config", config_path,
                    "JSON config or manifest; flags take precedence");
  }

  std::vector<std::string> full = args;
  try {
    if (!args.empty() && runners.count(args.front())) {
      const std::vector<std::string> rest(args.begin() + 1, args.end());
      if (auto path = FindConfigPath(rest)) {
        const auto extra = ConfigArgs(*path, args.front(), ExplicitFlags(rest));
        full.insert(full.begin() + 1, extra.begin(), extra.end());
      }
    }
  } catch (const UsageError& e) {
    err << "dpflow: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    std::vector<std::string> reversed(full.rbegin(), full.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "dpflow: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  Context ctx{out, err, seed};
  try {
    json metrics = runners.at(sub->get_name())(ctx);
    json record{{"command", sub->get_name()},
                {"config", ResolvedConfig(sub)},
                {"privacy", ctx.privacy},
                {"outputs", ctx.outputs}};
    const std::string path = ManifestPath(sub, manifest);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidInputError("cannot write manifest " + path);
    f << record.dump(2) << "\n";
    out << metrics.dump() << "\n";
    return kExitOk;
  } catch (const ConfigurationError& e) {
    err << "dpflow " << sub->get_name() << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "dpflow " << sub->get_name() << ": " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace dpflow::cli
