#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metanode/adiff.hpp"
#include "metanode/field.hpp"
#include "metanode/matrix.hpp"

namespace metanode::odeint {

/// Strictly increasing output times in normalized units. `origin_hours` and
/// `span_hours` map normalized time back to the experiment clock:
/// hours = origin_hours + t * span_hours.
struct TimeGrid {
  std::vector<double> t;
  double origin_hours = 0.0;
  double span_hours = 1.0;

  static TimeGrid uniform(std::size_t points, double t0 = 0.0, double t1 = 1.0);
  std::size_t size() const { return t.size(); }
  void validate() const;

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

enum class Method {
  rk4_fixed,
  dopri8_adaptive,
  dopri8_fixed,  // the 8th-order stage combination with fixed steps
};

std::string to_string(Method m);
Method method_from_string(const std::string& name);

struct SolveOptions {
  Method method = Method::dopri8_adaptive;
  double rtol = 1e-7;
  double atol = 1e-9;
  std::size_t max_steps = 1'000'000;
  std::optional<double> initial_step;  // auto when empty
  std::size_t substeps = 1;            // fixed-step methods: steps per grid interval

  void validate() const;
};

struct SolveStats {
  std::size_t steps = 0;
  std::size_t rejected = 0;
  std::size_t evaluations = 0;
};

struct Trajectory {
  TimeGrid grid;
  Matrix values;  // grid.size() x D
  SolveStats stats;
};

using Rhs = std::function<void(std::span<const double> u, std::span<double> du)>;
using TapedRhs = std::function<adiff::Var(adiff::Var u)>;

Trajectory solve(const Rhs& rhs, std::span<const double> u0, const TimeGrid& grid,
                 const SolveOptions& opts);
Trajectory solve(const field::FieldParams& params, std::span<const double> u0,
                 const TimeGrid& grid, const SolveOptions& opts);

/// Trajectory whose rows are recorded on a tape. `trajectory.values` holds
/// the same numbers as the rows.
struct TapedTrajectory {
  std::vector<adiff::Var> rows;
  Trajectory trajectory;
};

/// Records every step on `tape`. Rejected adaptive trial steps stay on the
/// tape but nothing downstream depends on them.
TapedTrajectory solve(const TapedRhs& rhs, adiff::Var u0, const TimeGrid& grid,
                      const SolveOptions& opts, adiff::Tape& tape);

/// Advances u by `steps` fixed steps of size h with the chosen method.
std::vector<double> fixed_steps(const Rhs& rhs, Method method, std::span<const double> u0,
                                double h, std::size_t steps);

/// Problem with a known solution for empirical order estimates.
struct TestProblem {
  Rhs rhs;
  std::vector<double> u0;
  double t_end = 1.0;
  std::function<std::vector<double>(double)> exact;
  std::size_t coarse_steps = 8;  // step counts compared: N and 2N
};

/// Single-step advance used by the order estimator.
using FixedStepper = std::function<std::vector<double>(
    const Rhs&, std::span<const double> u0, double h, std::size_t steps)>;

/// p = log2(e(N) / e(2N)) with e the max-norm error at t_end.
double convergence_order(const FixedStepper& stepper, const TestProblem& problem);
double convergence_order(Method method, const TestProblem& problem);

/// 13-stage 8(7) Dormand-Prince coefficients.
struct Dopri8Tableau {
  static constexpr std::size_t stages = 13;
  double c[stages];
  double a[stages][stages];
  double b[stages];      // 8th-order weights
  double b_hat[stages];  // embedded 7th-order weights
};

const Dopri8Tableau& dopri8_tableau();

}  // namespace metanode::odeint
