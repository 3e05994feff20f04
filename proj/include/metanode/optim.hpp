#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace metanode::optim {

/// Returns f(x) and writes the gradient into `grad`. A non-finite return value
/// marks x as infeasible.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 300;

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update in place. Throws DivergenceError on a
/// non-finite gradient, ShapeError on a length mismatch.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg);

struct LbfgsConfig {
  double lr = 1e-4;  // initial trial step of the line search
  std::size_t max_iters = 1000;
  double grad_tol = 1e-6;
  double change_tol = 1e-6;
  std::size_t history = 20;
  double c1 = 1e-4;
  double c2 = 0.9;
  std::size_t max_line_search_evals = 25;

  void validate() const;
};

enum class Termination {
  grad_tol,
  change_tol,
  max_iters,
  line_search_failed,
  adam_epochs,
  diverged,
};

std::string to_string(Termination t);

struct LbfgsResult {
  std::vector<double> x;  // best point seen
  double value = 0.0;
  Termination reason = Termination::max_iters;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  std::vector<double> values;  // objective after every accepted iteration
};

/// Limited-memory BFGS with a strong-Wolfe line search. The first trial step
/// is min(1, 1/|g|_1) * lr on the first iteration and lr afterwards; the line
/// search extrapolates from there. Throws LineSearchError when no finite
/// point can be found along the first search direction.
LbfgsResult lbfgs_minimize(const Objective& objective, std::vector<double> x0,
                           const LbfgsConfig& cfg);

struct LossPoint {
  std::string stage;  // "adam" or "lbfgs"
  std::size_t step = 0;
  double value = 0.0;
};

struct FitResult {
  std::vector<double> theta;
  double final_loss = 0.0;
  std::vector<LossPoint> curve;
  double adam_seconds = 0.0;
  double lbfgs_seconds = 0.0;
  Termination adam_reason = Termination::adam_epochs;
  Termination lbfgs_reason = Termination::max_iters;
  std::vector<std::string> failures;

  nlohmann::json to_json(bool include_timing = true) const;
};

/// Adam for cfg.epochs full-batch steps, then L-BFGS from the best Adam point.
/// A failing stage is recorded in `failures`; the best point seen is returned.
FitResult two_stage_fit(const Objective& objective, std::vector<double> theta0,
                        const AdamConfig& adam, const LbfgsConfig& lbfgs);

}  // namespace metanode::optim
