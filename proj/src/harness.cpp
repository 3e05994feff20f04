#include "metanode/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string_view>

#include "metanode/errors.hpp"
#include "metanode/rng.hpp"

namespace metanode::harness {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw ConfigError("config: unknown key '" + where + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

ordered_json solve_json(const odeint::SolveOptions& o) {
  ordered_json j = {{"method", odeint::to_string(o.method)}, {"substeps", o.substeps},
                    {"rtol", o.rtol},   {"atol", o.atol},
                    {"max_steps", o.max_steps}};
  if (o.initial_step) j["initial_step"] = *o.initial_step;
  return j;
}

void solve_from_json(const json& j, const std::string& where, odeint::SolveOptions& o) {
  check_keys(j, where, {"method", "substeps", "rtol", "atol", "max_steps", "initial_step"});
  if (j.contains("method")) o.method = odeint::method_from_string(j.at("method").get<std::string>());
  read(j, "substeps", o.substeps);
  read(j, "rtol", o.rtol);
  read(j, "atol", o.atol);
  read(j, "max_steps", o.max_steps);
  if (j.contains("initial_step")) o.initial_step = j.at("initial_step").get<double>();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  field.validate();
  train_solve.validate();
  eval_solve.validate();
  adam.validate();
  lbfgs.validate();
  if (lambdas.empty()) throw ConfigError("config: lambda list is empty");
  for (double l : lambdas)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("config: lambda values must be finite and >= 0");
  if (rmse_space != "normalized" && rmse_space != "physical")
    throw ConfigError("config: rmse_space must be 'normalized' or 'physical'");
  if (jobs < 1) throw ConfigError("config: jobs must be at least 1");
  if (slice_grid < 2) throw ConfigError("config: slice grid must be at least 2");
  if (!slice_features.empty() && slice_features.size() != 2)
    throw ConfigError("config: slice features must name exactly two features");
}

ordered_json ExperimentConfig::to_json() const {
  ordered_json j;
  j["pathway"] = pathway;
  j["data"] = data_path;
  j["output_dir"] = output_dir;
  j["field"] = {{"hidden_dim", field.hidden_dim}, {"hidden_layers", field.hidden_layers}};
  j["train"] = solve_json(train_solve);
  j["eval"] = solve_json(eval_solve);
  j["lambdas"] = lambdas;
  j["loss"] = {{"features", loss.features == loss::LossFeatures::all ? "all" : "states_only"},
               {"pir_space", loss.pir_space == loss::PirSpace::physical ? "physical" : "normalized"}};
  j["adam"] = {{"lr", adam.lr},     {"beta1", adam.beta1}, {"beta2", adam.beta2},
               {"eps", adam.eps},   {"epochs", adam.epochs}};
  j["lbfgs"] = {{"lr", lbfgs.lr},
                {"max_iters", lbfgs.max_iters},
                {"grad_tol", lbfgs.grad_tol},
                {"change_tol", lbfgs.change_tol},
                {"history", lbfgs.history},
                {"c1", lbfgs.c1},
                {"c2", lbfgs.c2},
                {"max_line_search_evals", lbfgs.max_line_search_evals}};
  j["seed"] = seed;
  j["test_strain"] = test_strain ? ordered_json(*test_strain) : ordered_json(nullptr);
  j["interpolation"] = interpolation == dataio::Interpolation::monotone_cubic ? "monotone_cubic" : "linear";
  j["per_point"] = per_point;
  j["rmse_space"] = rmse_space;
  j["jobs"] = jobs;
  j["execution"] = execution == kernels::Execution::parallel ? "parallel" : "serial";
  j["slice"] = {{"grid", slice_grid}, {"features", slice_features}};
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  check_keys(j, "", {"pathway", "data", "output_dir", "field", "train", "eval", "lambdas", "loss",
                     "adam", "lbfgs", "seed", "test_strain", "interpolation", "per_point",
                     "rmse_space", "jobs", "execution", "slice"});
  read(j, "pathway", c.pathway);
  read(j, "data", c.data_path);
  read(j, "output_dir", c.output_dir);
  if (j.contains("field")) {
    check_keys(j["field"], "field.", {"hidden_dim", "hidden_layers"});
    read(j["field"], "hidden_dim", c.field.hidden_dim);
    read(j["field"], "hidden_layers", c.field.hidden_layers);
  }
  if (j.contains("train")) solve_from_json(j["train"], "train.", c.train_solve);
  if (j.contains("eval")) solve_from_json(j["eval"], "eval.", c.eval_solve);
  read(j, "lambdas", c.lambdas);
  if (j.contains("loss")) {
    check_keys(j["loss"], "loss.", {"features", "pir_space"});
    std::string features = "all", space = "physical";
    read(j["loss"], "features", features);
    read(j["loss"], "pir_space", space);
    if (features != "all" && features != "states_only")
      throw ConfigError("config: loss.features must be 'all' or 'states_only'");
    if (space != "physical" && space != "normalized")
      throw ConfigError("config: loss.pir_space must be 'physical' or 'normalized'");
    c.loss.features = features == "all" ? loss::LossFeatures::all : loss::LossFeatures::states_only;
    c.loss.pir_space = space == "physical" ? loss::PirSpace::physical : loss::PirSpace::normalized;
  }
  if (j.contains("adam")) {
    check_keys(j["adam"], "adam.", {"lr", "beta1", "beta2", "eps", "epochs"});
    read(j["adam"], "lr", c.adam.lr);
    read(j["adam"], "beta1", c.adam.beta1);
    read(j["adam"], "beta2", c.adam.beta2);
    read(j["adam"], "eps", c.adam.eps);
    read(j["adam"], "epochs", c.adam.epochs);
  }
  if (j.contains("lbfgs")) {
    check_keys(j["lbfgs"], "lbfgs.", {"lr", "max_iters", "grad_tol", "change_tol", "history", "c1",
                                      "c2", "max_line_search_evals"});
    read(j["lbfgs"], "lr", c.lbfgs.lr);
    read(j["lbfgs"], "max_iters", c.lbfgs.max_iters);
    read(j["lbfgs"], "grad_tol", c.lbfgs.grad_tol);
    read(j["lbfgs"], "change_tol", c.lbfgs.change_tol);
    read(j["lbfgs"], "history", c.lbfgs.history);
    read(j["lbfgs"], "c1", c.lbfgs.c1);
    read(j["lbfgs"], "c2", c.lbfgs.c2);
    read(j["lbfgs"], "max_line_search_evals", c.lbfgs.max_line_search_evals);
  }
  read(j, "seed", c.seed);
  if (j.contains("test_strain") && !j["test_strain"].is_null())
    c.test_strain = j["test_strain"].get<std::string>();
  if (j.contains("interpolation")) {
    const auto s = j["interpolation"].get<std::string>();
    if (s == "monotone_cubic") c.interpolation = dataio::Interpolation::monotone_cubic;
    else if (s == "linear") c.interpolation = dataio::Interpolation::linear;
    else throw ConfigError("config: interpolation must be 'monotone_cubic' or 'linear'");
  }
  read(j, "per_point", c.per_point);
  read(j, "rmse_space", c.rmse_space);
  read(j, "jobs", c.jobs);
  if (j.contains("execution")) {
    const auto s = j["execution"].get<std::string>();
    if (s == "parallel") c.execution = kernels::Execution::parallel;
    else if (s == "serial") c.execution = kernels::Execution::serial;
    else throw ConfigError("config: execution must be 'parallel' or 'serial'");
  }
  if (j.contains("slice")) {
    check_keys(j["slice"], "slice.", {"grid", "features"});
    read(j["slice"], "grid", c.slice_grid);
    read(j["slice"], "features", c.slice_features);
  }
  c.validate();
  return c;
}

std::string ExperimentConfig::checksum() const {
  ordered_json j = to_json();
  j.erase("output_dir");
  j.erase("jobs");
  j.erase("execution");
  const std::string s = j.dump();
  return dataio::hex64(fnv1a64(s.data(), s.size()));
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

json scalar_value(const std::string& text) {
  const json parsed = json::parse(text, nullptr, false);
  if (!parsed.is_discarded()) return parsed;
  return text;  // bare word
}

}  // namespace

json parse_config_text(const std::string& text, const std::string& source) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError("config " + source + " is not valid JSON: " + e.what());
    }
  }
  json out = json::object();
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = "config " + source + " line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(where + "empty key or value");

    json v;
    if (value.find(',') != std::string::npos && value.front() != '[' && value.front() != '"') {
      v = json::array();
      std::istringstream items(value);
      for (std::string item; std::getline(items, item, ',');) v.push_back(scalar_value(trim(item)));
    } else {
      v = scalar_value(value);
    }

    json* node = &out;
    std::size_t start = 0;
    for (auto dot = key.find('.'); dot != std::string::npos; dot = key.find('.', start)) {
      node = &(*node)[key.substr(start, dot - start)];
      if (!node->is_null() && !node->is_object())
        throw ConfigError(where + "'" + key + "' is not a section");
      start = dot + 1;
    }
    (*node)[key.substr(start)] = v;
  }
  return out;
}

void write_effective_config(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ordered_json j;
  j["tool"] = "metanode";
  j["version"] = kToolVersion;
  j["config"] = cfg.to_json();
  j["config_checksum"] = cfg.checksum();
  std::ofstream out(dir / "effective_config.json");
  if (!out) throw IoError("cannot write " + (dir / "effective_config.json").string());
  out << j.dump(2) << '\n';
}

kernels::TrainingObjective make_objective(const ExperimentConfig& cfg,
                                          const dataio::Dataset& dataset, double lambda) {
  kernels::TrainingObjective obj;
  obj.spec = cfg.field;
  obj.spec.input_dim = dataset.dim();
  obj.grid = dataset.grid();
  obj.solve = cfg.train_solve;
  obj.loss = cfg.loss;
  obj.loss.lambda = lambda;
  obj.loss.state_indices = dataset.state_indices();
  obj.denorm = dataset.norm_stats().affine();
  obj.per_point = cfg.per_point;
  for (const auto& id : dataset.split().train) obj.strains.push_back({id, dataset.observed(id)});
  return obj;
}

TrainResult train(const ExperimentConfig& cfg, const dataio::Dataset& dataset, double lambda,
                  std::uint64_t seed) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const kernels::TrainingObjective objective = make_objective(cfg, dataset, lambda);
  const field::FieldParams init = field::init_params(objective.spec, seed);

  std::string last_error;
  const optim::Objective fn = [&](std::span<const double> theta, std::span<double> grad) {
    try {
      return objective.evaluate(theta, grad, cfg.execution).total;
    } catch (const NumericalError& e) {
      last_error = std::string(e.kind()) + ": " + e.what();
    } catch (const StiffnessError& e) {
      last_error = std::string(e.kind()) + ": " + e.what();
    }
    std::fill(grad.begin(), grad.end(), std::numeric_limits<double>::quiet_NaN());
    return std::numeric_limits<double>::infinity();
  };

  std::vector<double> theta0(init.theta().begin(), init.theta().end());
  optim::FitResult fit = optim::two_stage_fit(fn, std::move(theta0), cfg.adam, cfg.lbfgs);
  if (!last_error.empty()) fit.failures.push_back("objective: " + last_error);

  TrainResult out{field::FieldParams(objective.spec, fit.theta), std::move(fit), lambda, seed, 0.0, true, {}};
  out.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!std::isfinite(out.fit.final_loss)) {
    out.ok = false;
    out.error = out.fit.failures.empty() ? "no finite loss" : out.fit.failures.front();
  }
  return out;
}

odeint::Trajectory simulate(const field::FieldParams& params, std::span<const double> u0,
                            const odeint::TimeGrid& grid, const odeint::SolveOptions& opts,
                            double* seconds) {
  const auto start = std::chrono::steady_clock::now();
  odeint::Trajectory traj = odeint::solve(params, u0, grid, opts);
  if (seconds) *seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return traj;
}

std::optional<Baseline> published_baseline(const std::string& pathway) {
  // Baseline RMSE column of the published limonene/isopentenol tables.
  if (pathway == "limonene") {
    return Baseline{{{"Acetyl-CoA", 0.34},
                     {"HMG-CoA", 0.02},
                     {"Mevalonate", 1.07},
                     {"Mev-P", 3.64},
                     {"IPP/DMAPP", 75.43},
                     {"Limonene", 0.30},
                     {"OD600", 4.30},
                     {"GPP", 0.07},
                     {"NAD", 1.50},
                     {"NADP", 1.26},
                     {"Acetate", 1.89},
                     {"Pyruvate", 0.14},
                     {"Citrate", 0.23}},
                    6.94};
  }
  if (pathway == "isopentenol") {
    return Baseline{{{"Acetyl-CoA", 9.02},
                     {"HMG-CoA", 0.08},
                     {"Mevalonate", 2.55},
                     {"Mev-P", 126.19},
                     {"IPP/DMAPP", 33.77},
                     {"OD600", 2.13},
                     {"GPP", 0.00},
                     {"NAD", 1.96},
                     {"NADP", 0.24},
                     {"Acetate", 0.45},
                     {"Pyruvate", 0.06},
                     {"Citrate", 0.29},
                     {"Isopentenol", 0.32}},
                    13.62};
  }
  return std::nullopt;
}

ordered_json MetricsReport::to_json(bool include_timing) const {
  ordered_json per_feature = ordered_json::object();
  for (const auto& [name, v] : per_feature_rmse) per_feature[name] = v;
  ordered_json j;
  j["schema_version"] = 1;
  j["pathway"] = pathway;
  j["lambda"] = lambda;
  j["seed"] = seed;
  j["status"] = status;
  if (!error.empty()) j["error"] = error;
  j["rmse_space"] = rmse_space;
  j["per_feature_rmse"] = per_feature;
  j["mean_rmse"] = mean_rmse;
  j["baseline_mean_rmse"] = baseline_mean ? ordered_json(*baseline_mean) : ordered_json(nullptr);
  j["pct_improvement"] = pct_improvement ? ordered_json(*pct_improvement) : ordered_json(nullptr);
  if (include_timing) j["timings"] = {{"train_s", train_s}, {"infer_s", infer_s}};
  j["config_checksum"] = config_checksum;
  return j;
}

MetricsReport MetricsReport::from_json(const ordered_json& j) {
  MetricsReport r;
  try {
    r.pathway = j.at("pathway").get<std::string>();
    r.lambda = j.at("lambda").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.status = j.value("status", std::string("ok"));
    r.error = j.value("error", std::string());
    r.rmse_space = j.value("rmse_space", std::string("normalized"));
    for (const auto& [k, v] : j.at("per_feature_rmse").items()) r.per_feature_rmse.emplace_back(k, v.get<double>());
    r.mean_rmse = j.at("mean_rmse").get<double>();
    if (j.contains("baseline_mean_rmse") && !j["baseline_mean_rmse"].is_null())
      r.baseline_mean = j["baseline_mean_rmse"].get<double>();
    if (j.contains("pct_improvement") && !j["pct_improvement"].is_null())
      r.pct_improvement = j["pct_improvement"].get<double>();
    if (j.contains("timings")) {
      r.train_s = j["timings"].value("train_s", 0.0);
      r.infer_s = j["timings"].value("infer_s", 0.0);
    }
    r.config_checksum = j.value("config_checksum", std::string());
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed metrics report: ") + e.what());
  }
  return r;
}

std::vector<double> rmse_columns(const Matrix& pred, const Matrix& obs,
                                 const std::vector<std::size_t>& columns) {
  if (pred.rows() != obs.rows() || pred.cols() != obs.cols())
    throw ShapeError("rmse: prediction and observation shapes differ");
  std::vector<double> out;
  for (std::size_t c : columns) {
    double ss = 0.0;
    for (std::size_t r = 0; r < pred.rows(); ++r) {
      const double d = pred(r, c) - obs(r, c);
      ss += d * d;
    }
    out.push_back(std::sqrt(ss / static_cast<double>(pred.rows())));
  }
  return out;
}

MetricsReport report_from_prediction(const Matrix& pred, const Matrix& obs,
                                     const dataio::Dataset& dataset, const std::string& rmse_space) {
  MetricsReport r;
  r.pathway = dataset.pathway();
  r.rmse_space = rmse_space;
  const auto& columns = dataset.state_indices();
  std::vector<double> rmse;
  if (rmse_space == "physical") {
    rmse = rmse_columns(dataset.norm_stats().denormalize(pred), dataset.norm_stats().denormalize(obs), columns);
  } else {
    rmse = rmse_columns(pred, obs, columns);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    r.per_feature_rmse.emplace_back(dataset.feature_names()[columns[k]], rmse[k]);
    sum += rmse[k];
  }
  r.mean_rmse = columns.empty() ? 0.0 : sum / static_cast<double>(columns.size());

  if (const auto base = published_baseline(dataset.pathway())) {
    const bool covered = std::all_of(r.per_feature_rmse.begin(), r.per_feature_rmse.end(),
                                     [&](const auto& p) { return base->per_feature.count(p.first) > 0; });
    if (covered) {
      r.baseline_mean = base->mean;
      r.pct_improvement = 100.0 * (base->mean - r.mean_rmse) / base->mean;
    }
  }
  return r;
}

Evaluation evaluate(const field::FieldParams& params, const dataio::Dataset& dataset,
                    const ExperimentConfig& cfg) {
  const Matrix& obs = dataset.observed(dataset.split().test);
  Evaluation out;
  double seconds = 0.0;
  out.prediction = simulate(params, obs.row(0), dataset.grid(), cfg.eval_solve, &seconds);
  out.report = report_from_prediction(out.prediction.values, obs, dataset, cfg.rmse_space);
  out.report.infer_s = seconds;
  out.report.seed = cfg.seed;
  out.report.config_checksum = cfg.checksum();
  return out;
}

std::string lambda_label(double lambda) { return fmt("%.2f", lambda); }

std::optional<std::size_t> best_report(const std::vector<MetricsReport>& reports) {
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < reports.size(); ++k) {
    if (reports[k].status != "ok") continue;
    if (!best || reports[k].mean_rmse < reports[*best].mean_rmse) best = k;
  }
  return best;
}

std::string summary_table(const std::vector<MetricsReport>& reports,
                          const std::optional<Baseline>& baseline) {
  std::vector<std::string> features;
  for (const auto& r : reports)
    for (const auto& [name, _] : r.per_feature_rmse)
      if (std::find(features.begin(), features.end(), name) == features.end()) features.push_back(name);

  std::size_t width = std::string("% Improvement").size();
  for (const auto& f : features) width = std::max(width, f.size());
  auto pad = [&](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  auto cell = [](const std::string& s) { return std::string(s.size() < 10 ? 10 - s.size() : 0, ' ') + s; };

  std::string out = pad("", width);
  for (const auto& r : reports) out += cell(lambda_label(r.lambda));
  if (baseline) out += cell("Baseline");
  out += "\n";
  const std::string rule(width + 10 * (reports.size() + (baseline ? 1 : 0)), '-');
  out += rule + "\n";
  for (const auto& f : features) {
    out += pad(f, width);
    for (const auto& r : reports) {
      const auto it = std::find_if(r.per_feature_rmse.begin(), r.per_feature_rmse.end(),
                                   [&](const auto& p) { return p.first == f; });
      out += cell(r.status != "ok" ? "failed" : it == r.per_feature_rmse.end() ? "-" : fmt("%.2f", it->second));
    }
    if (baseline) {
      const auto it = baseline->per_feature.find(f);
      out += cell(it == baseline->per_feature.end() ? "-" : fmt("%.2f", it->second));
    }
    out += "\n";
  }
  out += rule + "\n";
  out += pad("Mean RMSE", width);
  for (const auto& r : reports) out += cell(r.status != "ok" ? "failed" : fmt("%.2f", r.mean_rmse));
  if (baseline) out += cell(fmt("%.2f", baseline->mean));
  out += "\n";
  out += pad("% Improvement", width);
  for (const auto& r : reports)
    out += cell(r.status == "ok" && r.pct_improvement ? fmt("%.2f", *r.pct_improvement) : "-");
  if (baseline) out += cell("--");
  out += "\n";
  return out;
}

SweepResult sweep(const ExperimentConfig& cfg, const dataio::Dataset& dataset) {
  cfg.validate();
  const std::filesystem::path root(cfg.output_dir);
  std::filesystem::create_directories(root);
  write_effective_config(cfg, root);

  const std::size_t n = cfg.lambdas.size();
  SweepResult result;
  result.reports.resize(n);
  const auto count = static_cast<std::ptrdiff_t>(n);

  auto trial = [&](std::ptrdiff_t k) {
    const double lambda = cfg.lambdas[k];
    const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(k));
    const std::filesystem::path dir = root / ("lambda_" + lambda_label(lambda));
    MetricsReport& report = result.reports[k];
    try {
      std::filesystem::create_directories(dir);
      ExperimentConfig trial_cfg = cfg;
      trial_cfg.seed = seed;
      trial_cfg.lambdas = {lambda};
      trial_cfg.output_dir = dir.string();
      const TrainResult trained = train(trial_cfg, dataset, lambda, seed);
      {
        std::ofstream fit_out(dir / "fit.json");
        fit_out << trained.fit.to_json().dump(2) << '\n';
      }
      if (!trained.ok) throw NumericalError(trained.error);
      field::save_checkpoint(dir / "model.ckpt", trained.params, seed);
      Evaluation ev = evaluate(trained.params, dataset, trial_cfg);
      ev.report.lambda = lambda;
      ev.report.seed = seed;
      ev.report.train_s = trained.train_seconds;
      emit_artifacts(ev.report, ev.prediction, dataset, trained.params, trial_cfg, dir);
      report = std::move(ev.report);
    } catch (const std::exception& e) {
      report.pathway = dataset.pathway();
      report.lambda = lambda;
      report.seed = seed;
      report.rmse_space = cfg.rmse_space;
      report.status = "failed";
      report.error = e.what();
      report.config_checksum = cfg.checksum();
      std::ofstream out(dir / "metrics.json");
      out << report.to_json().dump(2) << '\n';
    }
  };

  if (cfg.jobs > 1) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(static_cast<int>(cfg.jobs))
    for (std::ptrdiff_t k = 0; k < count; ++k) trial(k);
  } else {
    for (std::ptrdiff_t k = 0; k < count; ++k) trial(k);
  }

  const auto baseline = published_baseline(dataset.pathway());
  result.summary = summary_table(result.reports, baseline);
  if (const auto best = best_report(result.reports)) result.best_lambda = result.reports[*best].lambda;

  ordered_json summary;
  summary["pathway"] = dataset.pathway();
  summary["lambdas"] = cfg.lambdas;
  summary["best_lambda"] = result.best_lambda ? ordered_json(*result.best_lambda) : ordered_json(nullptr);
  ordered_json reports = ordered_json::array();
  for (const auto& r : result.reports) reports.push_back(r.to_json());
  summary["reports"] = reports;
  std::ofstream(root / "summary.json") << summary.dump(2) << '\n';
  std::ofstream(root / "summary.txt") << result.summary;
  return result;
}

}  // namespace metanode::harness
