#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metanode/dataio.hpp"
#include "metanode/field.hpp"
#include "metanode/kernels.hpp"
#include "metanode/loss.hpp"
#include "metanode/odeint.hpp"
#include "metanode/optim.hpp"

namespace metanode::harness {

inline constexpr const char* kToolVersion = "0.1.0";

struct ExperimentConfig {
  std::string pathway = "limonene";
  std::string data_path;
  std::string output_dir = "out";
  field::FieldSpec field = field::FieldSpec::paper();  // input_dim follows the dataset
  odeint::SolveOptions train_solve = [] {
    odeint::SolveOptions o;
    o.method = odeint::Method::rk4_fixed;
    return o;
  }();
  odeint::SolveOptions eval_solve;  // adaptive DOPRI8
  std::vector<double> lambdas = {0.01, 1.0, 1000.0};
  loss::LossConfig loss;  // lambda is set per trial
  optim::AdamConfig adam;
  optim::LbfgsConfig lbfgs;
  std::uint64_t seed = 0;
  std::optional<std::string> test_strain;
  dataio::Interpolation interpolation = dataio::Interpolation::monotone_cubic;
  bool per_point = false;
  std::string rmse_space = "normalized";  // or "physical"
  std::size_t jobs = 1;
  kernels::Execution execution = kernels::Execution::parallel;
  std::size_t slice_grid = 25;
  std::vector<std::string> slice_features;  // two names; default first two states

  void validate() const;
  nlohmann::ordered_json to_json() const;
  /// Applies the keys present in `j` on top of the defaults. Throws
  /// ConfigError on unknown keys or bad values.
  static ExperimentConfig from_json(const nlohmann::json& j);
  /// FNV-1a of the configuration fields that affect results.
  std::string checksum() const;
};

struct TrainResult {
  field::FieldParams params;
  optim::FitResult fit;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double train_seconds = 0.0;
  bool ok = true;
  std::string error;
};

/// Objective built from the training strains only.
kernels::TrainingObjective make_objective(const ExperimentConfig& cfg,
                                          const dataio::Dataset& dataset, double lambda);

/// Two-stage fit of a freshly initialized field. Numerical failures inside the
/// objective count as infeasible points; a trial that never sees a finite loss
/// is returned with ok = false.
TrainResult train(const ExperimentConfig& cfg, const dataio::Dataset& dataset, double lambda,
                  std::uint64_t seed);

/// DOPRI8 (or `opts.method`) trajectory from u0; wall-clock seconds optional.
odeint::Trajectory simulate(const field::FieldParams& params, std::span<const double> u0,
                            const odeint::TimeGrid& grid, const odeint::SolveOptions& opts,
                            double* seconds = nullptr);

/// Baseline RMSE column of the published comparison tables.
struct Baseline {
  std::map<std::string, double> per_feature;
  double mean = 0.0;
};
std::optional<Baseline> published_baseline(const std::string& pathway);

struct MetricsReport {
  std::string pathway;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::string rmse_space = "normalized";
  std::vector<std::pair<std::string, double>> per_feature_rmse;
  double mean_rmse = 0.0;
  std::optional<double> baseline_mean;
  std::optional<double> pct_improvement;
  double train_s = 0.0;
  double infer_s = 0.0;
  std::string config_checksum;
  std::string status = "ok";
  std::string error;

  nlohmann::ordered_json to_json(bool include_timing = true) const;
  static MetricsReport from_json(const nlohmann::ordered_json& j);
};

/// Per-feature RMSE over all rows of the given columns.
std::vector<double> rmse_columns(const Matrix& pred, const Matrix& obs,
                                 const std::vector<std::size_t>& columns);

/// Fills RMSE, mean and improvement from a prediction of the test strain.
MetricsReport report_from_prediction(const Matrix& pred, const Matrix& obs,
                                     const dataio::Dataset& dataset, const std::string& rmse_space);

struct Evaluation {
  MetricsReport report;
  odeint::Trajectory prediction;  // normalized
};

/// Simulates the held-out strain from its first row and scores the result.
Evaluation evaluate(const field::FieldParams& params, const dataio::Dataset& dataset,
                    const ExperimentConfig& cfg);

/// G x G samples of (u_i, u_j, du_i/dt, du_j/dt) with the other features
/// clamped at `clamp`.
struct FieldSlice {
  std::string feature_i, feature_j;
  std::size_t grid = 0;
  Matrix samples;  // G^2 x 4
};
FieldSlice vector_field_slice(const field::FieldParams& params,
                              const std::vector<std::string>& feature_names,
                              const std::string& feature_i, const std::string& feature_j,
                              std::span<const double> clamp, double lo_i, double hi_i,
                              double lo_j, double hi_j, std::size_t grid,
                              kernels::Execution exec);

std::string slice_svg(const FieldSlice& slice);
std::string overlay_svg(const std::string& title, const std::vector<double>& hours,
                        const std::vector<double>& observed, const std::vector<double>& predicted);
std::string metrics_table(const MetricsReport& report);

/// Writes metrics.json/txt, prediction CSVs, one overlay SVG per feature and
/// the field slice CSV/SVG into `dir`.
void emit_artifacts(const MetricsReport& report, const odeint::Trajectory& prediction,
                    const dataio::Dataset& dataset, const field::FieldParams& params,
                    const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct SweepResult {
  std::vector<MetricsReport> reports;  // one per lambda, in config order
  std::string summary;
  std::optional<double> best_lambda;
};

/// Lambda column header, two decimals.
std::string lambda_label(double lambda);

/// Table with one column per lambda plus the published baseline.
std::string summary_table(const std::vector<MetricsReport>& reports,
                          const std::optional<Baseline>& baseline);

/// Index of the lowest mean RMSE among successful reports.
std::optional<std::size_t> best_report(const std::vector<MetricsReport>& reports);

/// Independent train + evaluate trial per lambda with seed derive_seed(seed, k).
/// Per-trial files go to <output_dir>/lambda_<label>/.
SweepResult sweep(const ExperimentConfig& cfg, const dataio::Dataset& dataset);

/// Config file text to the JSON form read by ExperimentConfig::from_json.
/// Accepts JSON, or `key = value` lines where dotted keys nest (adam.epochs),
/// comma-separated values become lists and `#` starts a comment.
nlohmann::json parse_config_text(const std::string& text, const std::string& source = "<config>");

/// Writes effective_config.json (config plus tool version) into `dir`.
void write_effective_config(const ExperimentConfig& cfg, const std::filesystem::path& dir);

}  // namespace metanode::harness
