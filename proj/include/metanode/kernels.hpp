#pragma once

#include <span>
#include <string>
#include <vector>

#include "metanode/field.hpp"
#include "metanode/loss.hpp"
#include "metanode/matrix.hpp"
#include "metanode/odeint.hpp"

namespace metanode::kernels {

/// serial is the reference path; parallel splits the outer loop with OpenMP.
/// Both produce bitwise-identical results: per-item work is independent and
/// reductions are done afterwards in item order.
enum class Execution { serial, parallel };

/// f(u) for every row of `states`.
Matrix eval_field_batch(const field::FieldParams& params, const Matrix& states, Execution exec);

struct StrainTarget {
  std::string id;
  Matrix observed;  // normalized, grid.size() x D; row 0 is the initial state
};

struct LossParts {
  double total = 0.0;
  double mse = 0.0;
  double pir = 0.0;
};

/// Full-batch training objective: every strain is integrated from its first
/// observed row on its own tape, per-strain losses are normalized by batch
/// totals, and gradients are summed in strain order.
struct TrainingObjective {
  field::FieldSpec spec;
  odeint::TimeGrid grid;
  odeint::SolveOptions solve;
  loss::LossConfig loss;
  loss::Denormalization denorm;
  std::vector<StrainTarget> strains;
  // Literal per-row reading: each observed row is advanced over one grid
  // interval and compared with the next row.
  bool per_point = false;

  /// Loss at theta; writes d(total)/d(theta) into grad. Rethrows the first
  /// per-strain error after all strains finish.
  LossParts evaluate(std::span<const double> theta, std::span<double> grad, Execution exec) const;
};

}  // namespace metanode::kernels
