#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "metanode/adiff.hpp"
#include "metanode/matrix.hpp"
#include "metanode/odeint.hpp"

namespace metanode::loss {

enum class LossFeatures { all, states_only };

/// Space in which the negative-value penalty is evaluated. Physical units
/// apply y = z * scale + offset to the normalized prediction first.
enum class PirSpace { physical, normalized };

/// Per-feature affine map from normalized to physical units.
struct Denormalization {
  std::vector<double> scale;
  std::vector<double> offset;
};

struct LossConfig {
  double lambda = 1.0;
  LossFeatures features = LossFeatures::all;
  PirSpace pir_space = PirSpace::physical;
  std::vector<std::size_t> state_indices;  // columns used by states_only

  void validate(std::size_t dim) const;
};

/// Normalizers of the two means. Defaults to the cell counts of the single
/// trajectory passed in; a multi-strain objective passes the batch totals so
/// that per-strain losses add up to the batch loss.
struct LossCounts {
  std::size_t mse_cells = 0;
  std::size_t pir_cells = 0;
};

/// total = mse + lambda * pir, each term a node on the tape.
struct LossValue {
  adiff::Var total;
  adiff::Var mse;
  adiff::Var pir;  // before lambda
};

/// Cells of the prediction that enter the MSE for `cfg`.
std::size_t mse_cells_per_row(const LossConfig& cfg, std::size_t dim);

/// Trajectory loss. Throws ShapeError when the grids or feature counts of
/// `pred` and `obs` differ, NumericalError when `obs` holds non-finite values.
LossValue trajectory_loss(const odeint::TapedTrajectory& pred, const odeint::Trajectory& obs,
                          const LossConfig& cfg, const Denormalization* denorm,
                          adiff::Tape& tape, std::optional<LossCounts> counts = std::nullopt);

/// Same loss over rows already on the tape (used by the per-point objective).
LossValue rows_loss(std::span<const adiff::Var> pred_rows, const Matrix& obs,
                    const LossConfig& cfg, const Denormalization* denorm, adiff::Tape& tape,
                    std::optional<LossCounts> counts = std::nullopt);

/// sum over cells of min(0, y)^2 (no mean), the negative-prediction mass.
double negative_mass(const Matrix& values);

}  // namespace metanode::loss
