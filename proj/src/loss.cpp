#include "metanode/loss.hpp"

#include <cmath>
#include <string>

#include "metanode/errors.hpp"

namespace metanode::loss {

void LossConfig::validate(std::size_t dim) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ConfigError("lambda must be a finite value >= 0");
  if (features == LossFeatures::states_only) {
    if (state_indices.empty()) throw ConfigError("states_only loss needs state indices");
    for (std::size_t i : state_indices)
      if (i >= dim) throw ConfigError("state index out of range");
  }
}

std::size_t mse_cells_per_row(const LossConfig& cfg, std::size_t dim) {
  return cfg.features == LossFeatures::all ? dim : cfg.state_indices.size();
}

namespace {

// Constant matrix picking the state columns out of a D-vector.
adiff::Var selection(adiff::Tape& tape, const std::vector<std::size_t>& idx, std::size_t dim) {
  std::vector<double> sel(idx.size() * dim, 0.0);
  for (std::size_t r = 0; r < idx.size(); ++r) sel[r * dim + idx[r]] = 1.0;
  return tape.leaf(sel, {idx.size(), dim}, false);
}

}  // namespace

LossValue rows_loss(std::span<const adiff::Var> pred_rows, const Matrix& obs,
                    const LossConfig& cfg, const Denormalization* denorm, adiff::Tape& tape,
                    std::optional<LossCounts> counts) {
  const std::size_t dim = obs.cols();
  if (pred_rows.size() != obs.rows() || pred_rows.empty())
    throw ShapeError("loss: prediction has " + std::to_string(pred_rows.size()) +
                     " rows, observation has " + std::to_string(obs.rows()));
  for (double v : obs.data())
    if (!std::isfinite(v)) throw NumericalError("loss: observation contains non-finite values");
  cfg.validate(dim);
  const bool physical = cfg.pir_space == PirSpace::physical && denorm != nullptr;
  if (physical && (denorm->scale.size() != dim || denorm->offset.size() != dim))
    throw ShapeError("loss: denormalization does not match feature count");

  if (!counts) {
    counts = LossCounts{obs.rows() * mse_cells_per_row(cfg, dim), obs.rows() * dim};
  }

  std::optional<adiff::Var> select;
  if (cfg.features == LossFeatures::states_only) select = selection(tape, cfg.state_indices, dim);
  std::optional<adiff::Var> diag, offset;
  if (physical) {
    std::vector<double> d(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) d[i * dim + i] = denorm->scale[i];
    diag = tape.leaf(d, {dim, dim}, false);
    offset = tape.constant(denorm->offset);
  }

  std::optional<adiff::Var> sse, neg;
  std::vector<double> minus_obs(dim);
  for (std::size_t r = 0; r < obs.rows(); ++r) {
    const adiff::Var& p = pred_rows[r];
    if (p.shape() != adiff::Shape{dim, 1})
      throw ShapeError("loss: prediction row has " + std::to_string(p.shape().size()) +
                       " features, observation has " + std::to_string(dim));
    for (std::size_t c = 0; c < dim; ++c) minus_obs[c] = -obs(r, c);
    adiff::Var resid = adiff::add(tape, p, tape.constant(minus_obs));
    if (select) resid = adiff::matmul(tape, *select, resid);
    const adiff::Var row_sse = adiff::sum(tape, adiff::square(tape, resid));
    sse = sse ? adiff::add(tape, *sse, row_sse) : row_sse;

    adiff::Var y = p;
    if (physical) y = adiff::add(tape, adiff::matmul(tape, *diag, p), *offset);
    const adiff::Var row_neg = adiff::sum(tape, adiff::square(tape, adiff::min_zero(tape, y)));
    neg = neg ? adiff::add(tape, *neg, row_neg) : row_neg;
  }

  LossValue out;
  out.mse = adiff::scale(tape, 1.0 / static_cast<double>(counts->mse_cells), *sse);
  out.pir = adiff::scale(tape, 1.0 / static_cast<double>(counts->pir_cells), *neg);
  out.total = adiff::add(tape, out.mse, adiff::scale(tape, cfg.lambda, out.pir));
  return out;
}

LossValue trajectory_loss(const odeint::TapedTrajectory& pred, const odeint::Trajectory& obs,
                          const LossConfig& cfg, const Denormalization* denorm,
                          adiff::Tape& tape, std::optional<LossCounts> counts) {
  if (!(pred.trajectory.grid.t == obs.grid.t))
    throw ShapeError("loss: prediction and observation are on different time grids");
  if (pred.trajectory.values.cols() != obs.values.cols())
    throw ShapeError("loss: prediction and observation have different feature counts");
  return rows_loss(pred.rows, obs.values, cfg, denorm, tape, counts);
}

double negative_mass(const Matrix& values) {
  double acc = 0.0;
  for (double v : values.data())
    if (v < 0.0) acc += v * v;
  return acc;
}

}  // namespace metanode::loss
