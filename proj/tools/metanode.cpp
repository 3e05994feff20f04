// metanode: command-line front end.
//
// Exit codes: 0 success, 1 unexpected failure, 2 usage, 3 ConfigError,
// 4 SchemaError, 5 DataError, 6 IoError, 7 numerical failure
// (NumericalError, StiffnessError, DivergenceError, LineSearchError),
// 8 ShapeError. Library errors are also printed to stderr as one line of
// JSON: {"error": <class>, "message": <text>}.

#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "metanode/dataio.hpp"
#include "metanode/errors.hpp"
#include "metanode/field.hpp"
#include "metanode/harness.hpp"

namespace fs = std::filesystem;
using namespace metanode;
using nlohmann::json;

namespace {

struct Overrides {
  std::string config;
  std::string pathway;
  std::string data;
  std::string output_dir;
  std::vector<double> lambdas;
  std::optional<std::uint64_t> seed;
  std::string test_strain;
  std::string train_method;
  std::size_t substeps = 0;
  std::size_t jobs = 0;
  bool per_point = false;
  bool serial = false;
  std::string interpolation;
  std::string rmse_space;
  std::optional<std::size_t> adam_epochs;
  std::optional<std::size_t> lbfgs_iters;
  std::size_t hidden_dim = 0;
  std::size_t hidden_layers = 0;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "config file (JSON or key = value lines)");
  sub->add_option("--pathway", o.pathway, "limonene or isopentenol");
  sub->add_option("--data", o.data, "input CSV (strain,time_h,<features...>)");
  sub->add_option("--output-dir", o.output_dir, "output directory");
  sub->add_option("--lambda", o.lambdas, "PIR weight(s)")->expected(1, -1);
  sub->add_option("--seed", o.seed, "master seed");
  sub->add_option("--test-strain", o.test_strain, "held-out strain id");
  sub->add_option("--train-method", o.train_method, "rk4, dopri8 or dopri8_fixed");
  sub->add_option("--substeps", o.substeps, "solver steps per grid interval during training");
  sub->add_option("--jobs", o.jobs, "parallel sweep trials");
  sub->add_flag("--per-point", o.per_point, "per-row training target (experimental)");
  sub->add_flag("--serial", o.serial, "use the serial reference kernels");
  sub->add_option("--interpolation", o.interpolation, "monotone_cubic or linear");
  sub->add_option("--rmse-space", o.rmse_space, "normalized or physical");
  sub->add_option("--adam-epochs", o.adam_epochs, "Adam epochs");
  sub->add_option("--lbfgs-iters", o.lbfgs_iters, "L-BFGS iteration cap");
  sub->add_option("--hidden-dim", o.hidden_dim, "hidden width");
  sub->add_option("--hidden-layers", o.hidden_layers, "hidden layer count");
}

harness::ExperimentConfig effective_config(const Overrides& o) {
  json j = json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw IoError("cannot read config " + o.config);
    const std::string text{std::istreambuf_iterator<char>(in), {}};
    j = harness::parse_config_text(text, o.config);
  }
  if (!o.pathway.empty()) j["pathway"] = o.pathway;
  if (!o.data.empty()) j["data"] = o.data;
  if (!o.output_dir.empty()) j["output_dir"] = o.output_dir;
  if (!o.lambdas.empty()) j["lambdas"] = o.lambdas;
  if (o.seed) j["seed"] = *o.seed;
  if (!o.test_strain.empty()) j["test_strain"] = o.test_strain;
  if (!o.train_method.empty()) j["train"]["method"] = o.train_method;
  if (o.substeps) j["train"]["substeps"] = o.substeps;
  if (o.jobs) j["jobs"] = o.jobs;
  if (o.per_point) j["per_point"] = true;
  if (o.serial) j["execution"] = "serial";
  if (!o.interpolation.empty()) j["interpolation"] = o.interpolation;
  if (!o.rmse_space.empty()) j["rmse_space"] = o.rmse_space;
  if (o.adam_epochs) j["adam"]["epochs"] = *o.adam_epochs;
  if (o.lbfgs_iters) j["lbfgs"]["max_iters"] = *o.lbfgs_iters;
  if (o.hidden_dim) j["field"]["hidden_dim"] = o.hidden_dim;
  if (o.hidden_layers) j["field"]["hidden_layers"] = o.hidden_layers;
  return harness::ExperimentConfig::from_json(j);
}

dataio::Dataset load_dataset(const harness::ExperimentConfig& cfg) {
  if (cfg.data_path.empty()) throw ConfigError("no input data: pass --data or set \"data\" in the config");
  const auto schema = dataio::FeatureSchema::for_pathway(cfg.pathway);
  const auto loaded = dataio::load_csv(cfg.data_path, schema);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
  return dataio::build_dataset(loaded, schema, {200, cfg.interpolation, cfg.test_strain});
}

void check_spec(const field::FieldParams& params, const dataio::Dataset& dataset) {
  if (params.spec().input_dim != dataset.dim())
    throw ShapeError("checkpoint input dimension " + std::to_string(params.spec().input_dim) +
                     " does not match the dataset (" + std::to_string(dataset.dim()) + " features)");
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int cmd_fixture(const std::string& out_dir, const std::string& pathway, std::uint64_t seed) {
  fs::create_directories(out_dir);
  std::vector<std::string> pathways = {"limonene", "isopentenol"};
  if (!pathway.empty()) pathways = {pathway};
  for (const auto& p : pathways) {
    const fs::path path = fs::path(out_dir) / (p + ".csv");
    dataio::write_fixture(path, dataio::FeatureSchema::for_pathway(p), seed);
    std::cout << path.string() << '\n';
  }
  return 0;
}

int cmd_ingest(const harness::ExperimentConfig& cfg) {
  const auto schema = dataio::FeatureSchema::for_pathway(cfg.pathway);
  if (cfg.data_path.empty()) throw ConfigError("no input data: pass --data or set \"data\" in the config");
  const auto loaded = dataio::load_csv(cfg.data_path, schema);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
  const auto dataset = dataio::build_dataset(loaded, schema, {200, cfg.interpolation, cfg.test_strain});
  harness::write_effective_config(cfg, cfg.output_dir);
  dataio::write_processed(dataset, cfg.output_dir, loaded.checksum);
  std::cout << "ingested " << dataset.strain_ids().size() << " strains, test strain "
            << dataset.split().test << ", checksum " << loaded.checksum << '\n';
  return 0;
}

int cmd_train(harness::ExperimentConfig cfg, bool lambda_given) {
  // Without --lambda a multi-value list falls back to lambda = 1.
  const double lambda = lambda_given || cfg.lambdas.size() == 1 ? cfg.lambdas.front() : 1.0;
  cfg.lambdas = {lambda};
  const auto dataset = load_dataset(cfg);
  const fs::path dir(cfg.output_dir);
  harness::write_effective_config(cfg, dir);
  const auto result = harness::train(cfg, dataset, lambda, cfg.seed);
  nlohmann::ordered_json summary;
  summary["lambda"] = lambda;
  summary["seed"] = cfg.seed;
  summary["status"] = result.ok ? "ok" : "failed";
  if (!result.ok) summary["error"] = result.error;
  summary["fit"] = result.fit.to_json();
  summary["train_s"] = result.train_seconds;
  write_json(dir / "fit.json", summary);
  if (!result.ok) throw NumericalError("training failed: " + result.error);
  field::save_checkpoint(dir / "model.ckpt", result.params, cfg.seed);
  std::cout << "final loss " << result.fit.final_loss << ", checkpoint " << (dir / "model.ckpt").string()
            << '\n';
  return 0;
}

int cmd_simulate(const harness::ExperimentConfig& cfg, const std::string& checkpoint,
                 std::string strain) {
  const auto ckpt = field::load_checkpoint(checkpoint);
  const auto dataset = load_dataset(cfg);
  check_spec(ckpt.params, dataset);
  if (strain.empty()) strain = dataset.split().test;
  const Matrix& obs = dataset.observed(strain);
  double seconds = 0.0;
  const auto traj = harness::simulate(ckpt.params, obs.row(0), dataset.grid(), cfg.eval_solve, &seconds);
  const fs::path dir(cfg.output_dir);
  harness::write_effective_config(cfg, dir);
  const auto& g = dataset.grid();
  std::vector<double> hours(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) hours[k] = g.origin_hours + g.t[k] * g.span_hours;
  dataio::write_trajectory_csv(dir / ("simulated_" + strain + ".csv"), hours, dataset.feature_names(),
                               dataset.norm_stats().denormalize(traj.values));
  std::cout << "simulated " << strain << ": " << traj.stats.steps << " steps, "
            << seconds << " s\n";
  return 0;
}

int cmd_evaluate(const harness::ExperimentConfig& cfg, const std::string& checkpoint) {
  const auto ckpt = field::load_checkpoint(checkpoint);
  const auto dataset = load_dataset(cfg);
  check_spec(ckpt.params, dataset);
  auto ev = harness::evaluate(ckpt.params, dataset, cfg);
  ev.report.seed = ckpt.seed;
  ev.report.lambda = cfg.lambdas.size() == 1 ? cfg.lambdas.front() : 0.0;
  harness::write_effective_config(cfg, cfg.output_dir);
  harness::emit_artifacts(ev.report, ev.prediction, dataset, ckpt.params, cfg, cfg.output_dir);
  std::cout << harness::metrics_table(ev.report);
  return 0;
}

int cmd_sweep(const harness::ExperimentConfig& cfg) {
  const auto dataset = load_dataset(cfg);
  const auto result = harness::sweep(cfg, dataset);
  std::cout << result.summary;
  if (result.best_lambda) std::cout << "best lambda " << harness::lambda_label(*result.best_lambda) << '\n';
  for (const auto& r : result.reports)
    if (r.status != "ok") std::cerr << "warning: lambda " << harness::lambda_label(r.lambda) << " failed: " << r.error << '\n';
  return 0;
}

int cmd_report(const std::string& dir) {
  const fs::path root(dir);
  std::vector<harness::MetricsReport> reports;
  auto read = [](const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot read " + p.string());
    nlohmann::ordered_json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw DataError(p.string() + " is not valid JSON: " + e.what());
    }
    return j;
  };
  std::string pathway;
  if (fs::exists(root / "summary.json")) {
    const auto s = read(root / "summary.json");
    for (const auto& r : s.at("reports")) reports.push_back(harness::MetricsReport::from_json(r));
  } else if (fs::exists(root / "metrics.json")) {
    reports.push_back(harness::MetricsReport::from_json(read(root / "metrics.json")));
  } else {
    throw IoError("no summary.json or metrics.json in " + root.string());
  }
  if (!reports.empty()) pathway = reports.front().pathway;
  std::cout << harness::summary_table(reports, harness::published_baseline(pathway));
  return 0;
}

int exit_code(const Error& e) {
  const std::string kind = e.kind();
  if (kind == "ConfigError") return 3;
  if (kind == "SchemaError") return 4;
  if (kind == "DataError") return 5;
  if (kind == "IoError") return 6;
  if (kind == "ShapeError") return 8;
  if (kind == "NumericalError" || kind == "StiffnessError" || kind == "DivergenceError" ||
      kind == "LineSearchError")
    return 7;
  return 1;
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural ODE models of metabolic pathway time series", "metanode"};
  app.set_version_flag("--version", std::string(harness::kToolVersion));
  app.require_subcommand(1);

  Overrides o;
  std::string checkpoint, strain, fixture_out, fixture_pathway, report_dir;
  std::uint64_t fixture_seed = 0;

  auto* fixture = app.add_subcommand("fixture", "write synthetic three-strain CSVs");
  fixture->add_option("--out", fixture_out, "output directory")->required();
  fixture->add_option("--pathway", fixture_pathway, "only this pathway");
  fixture->add_option("--seed", fixture_seed, "fixture seed");

  auto* ingest = app.add_subcommand("ingest", "interpolate, split and normalize a CSV");
  auto* train = app.add_subcommand("train", "fit one model (single lambda)");
  auto* simulate = app.add_subcommand("simulate", "integrate a checkpoint from a strain's first row");
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the held-out strain");
  auto* sweep = app.add_subcommand("sweep", "train and evaluate one model per lambda");
  for (auto* sub : {ingest, train, simulate, evaluate, sweep}) add_common(sub, o);
  for (auto* sub : {simulate, evaluate}) sub->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  simulate->add_option("--strain", strain, "strain id (default: test strain)");

  auto* report = app.add_subcommand("report", "print the summary table of a sweep or evaluation");
  report->add_option("--output-dir,dir", report_dir, "sweep or evaluation directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (fixture->parsed()) return cmd_fixture(fixture_out, fixture_pathway, fixture_seed);
    if (report->parsed()) return cmd_report(report_dir);
    const auto cfg = effective_config(o);
    if (ingest->parsed()) return cmd_ingest(cfg);
    if (train->parsed()) return cmd_train(cfg, !o.lambdas.empty());
    if (simulate->parsed()) return cmd_simulate(cfg, checkpoint, strain);
    if (evaluate->parsed()) return cmd_evaluate(cfg, checkpoint);
    if (sweep->parsed()) return cmd_sweep(cfg);
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return exit_code(e);
  } catch (const std::exception& e) {
    print_error("Error", e.what());
    return 1;
  }
  return 2;
}
