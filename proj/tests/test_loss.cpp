#include <cmath>

#include "doctest.h"
#include "metanode/errors.hpp"
#include "metanode/loss.hpp"
#include "support.hpp"

using namespace metanode;
using namespace metanode::loss;
using testsupport::central_diff;
using testsupport::rel_error;
using testsupport::uniform_vector;

namespace {

struct Evaluated {
  double total, mse, pir;
  std::vector<double> grad;  // d total / d pred, row-major
};

Evaluated evaluate(const Matrix& pred, const Matrix& obs, const LossConfig& cfg,
                   const Denormalization* denorm = nullptr) {
  adiff::Tape tape;
  std::vector<adiff::Var> rows;
  for (std::size_t r = 0; r < pred.rows(); ++r) rows.push_back(tape.variable(pred.row(r)));
  const LossValue v = rows_loss(rows, obs, cfg, denorm, tape);
  const auto g = tape.backward(v.total);
  Evaluated out{v.total.scalar(), v.mse.scalar(), v.pir.scalar(), {}};
  for (const auto& row : rows) out.grad.insert(out.grad.end(), g.wrt(row).begin(), g.wrt(row).end());
  return out;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo, double hi) {
  Matrix m(r, c);
  const auto v = uniform_vector(rng, r * c, lo, hi);
  std::copy(v.begin(), v.end(), m.data().begin());
  return m;
}

}  // namespace

TEST_CASE("hand-evaluated loss values") {
  std::mt19937_64 rng(1);
  const Matrix obs = random_matrix(rng, 20, 20, 0.1, 3.0);
  LossConfig cfg;
  cfg.pir_space = PirSpace::normalized;

  SUBCASE("perfect fit without negatives") {
    CHECK(evaluate(obs, obs, cfg).total == 0.0);
  }
  SUBCASE("single -1 cell among 400, lambda 1000") {
    Matrix o = obs, p = obs;
    o(7, 3) = -1.0;
    p(7, 3) = -1.0;
    cfg.lambda = 1000.0;
    const auto e = evaluate(p, o, cfg);
    CHECK(e.mse == 0.0);
    CHECK(e.pir == 1.0 / 400.0);
    CHECK(e.total == 2.5);
  }
  SUBCASE("unit residual everywhere") {
    Matrix p = obs;
    for (double& v : p.data()) v += 1.0;
    for (double lambda : {0.0, 0.01, 1.0, 1000.0}) {
      cfg.lambda = lambda;
      CHECK(evaluate(p, obs, cfg).total == 1.0);
    }
  }
}

TEST_CASE("PIR uses physical units when a denormalization is supplied") {
  Matrix obs(2, 2);
  obs.data()[0] = 0.0;
  Matrix pred = obs;
  pred(0, 0) = -1.0;  // physical: 2 * -1 + 1 = -1
  pred(1, 1) = -0.4;  // physical: 3 * -0.4 + 2 = 0.8
  const Denormalization d{{2.0, 3.0}, {1.0, 2.0}};
  LossConfig cfg;
  cfg.lambda = 1.0;
  const auto phys = evaluate(pred, obs, cfg, &d);
  CHECK(phys.pir == doctest::Approx(1.0 / 4.0));
  cfg.pir_space = PirSpace::normalized;
  const auto norm = evaluate(pred, obs, cfg, &d);
  CHECK(norm.pir == doctest::Approx((1.0 + 0.16) / 4.0));
}

TEST_CASE("states_only restricts the MSE") {
  Matrix obs(3, 4);
  Matrix pred = obs;
  for (std::size_t r = 0; r < 3; ++r) {
    pred(r, 0) = 5.0;  // control column, ignored
    pred(r, 2) = 2.0;
  }
  LossConfig cfg;
  cfg.features = LossFeatures::states_only;
  cfg.state_indices = {2, 3};
  CHECK(evaluate(pred, obs, cfg).mse == doctest::Approx(4.0 / 2.0));
  CHECK(mse_cells_per_row(cfg, 4) == 2);
  cfg.state_indices = {};
  CHECK_THROWS_AS(evaluate(pred, obs, cfg), ConfigError);
}

TEST_CASE("total is strictly increasing in lambda with a negative prediction") {
  std::mt19937_64 rng(2);
  LossConfig cfg;
  cfg.pir_space = PirSpace::normalized;
  const Matrix obs = random_matrix(rng, 5, 3, -1.0, 1.0);
  const Matrix pred = random_matrix(rng, 5, 3, -1.0, 1.0);
  double previous = -1.0;
  for (double lambda : {0.0, 0.01, 0.1, 1.0, 10.0, 1000.0}) {
    cfg.lambda = lambda;
    const auto e = evaluate(pred, obs, cfg);
    CHECK(e.total > previous);
    CHECK(e.total == e.mse + lambda * e.pir);
    previous = e.total;
  }
}

TEST_CASE("gradient: PIR part and finite differences") {
  std::mt19937_64 rng(4);
  const std::size_t T = 6, D = 3;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix obs = random_matrix(rng, T, D, -1.0, 1.0);
    Matrix pred = random_matrix(rng, T, D, -2.0, 2.0);
    for (double& v : pred.data())
      if (std::abs(v) < 1e-3) v = 0.5;
    LossConfig cfg;
    cfg.lambda = 7.0;
    cfg.pir_space = PirSpace::normalized;

    const auto e = evaluate(pred, obs, cfg);
    auto total = [&](std::span<const double> flat) {
      Matrix p(T, D);
      std::copy(flat.begin(), flat.end(), p.data().begin());
      return evaluate(p, obs, cfg).total;
    };
    const std::vector<double> flat(pred.data().begin(), pred.data().end());
    CHECK(rel_error(e.grad, central_diff(total, flat)) <= 1e-6);

    // PIR alone: zero at non-negative cells, 2 lambda y / n at negative ones.
    Matrix same = pred;
    const auto pir_only = evaluate(pred, pred, cfg);
    const double n = static_cast<double>(T * D);
    for (std::size_t i = 0; i < flat.size(); ++i) {
      const double expect = flat[i] < 0.0 ? 2.0 * cfg.lambda * flat[i] / n : 0.0;
      CHECK(pir_only.grad[i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("loss is invariant to a consistent feature permutation") {
  std::mt19937_64 rng(6);
  const Matrix obs = random_matrix(rng, 8, 4, -1.0, 1.0);
  const Matrix pred = random_matrix(rng, 8, 4, -1.0, 1.0);
  const std::size_t perm[] = {2, 0, 3, 1};
  Matrix po(8, 4), pp(8, 4);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      po(r, c) = obs(r, perm[c]);
      pp(r, c) = pred(r, perm[c]);
    }
  LossConfig cfg;
  cfg.lambda = 3.0;
  cfg.pir_space = PirSpace::normalized;
  CHECK(evaluate(pp, po, cfg).total == doctest::Approx(evaluate(pred, obs, cfg).total).epsilon(1e-14));
}

TEST_CASE("shape and value checks") {
  adiff::Tape tape;
  Matrix obs(2, 2);
  std::vector<adiff::Var> rows{tape.variable(std::vector<double>{0, 0})};
  LossConfig cfg;
  CHECK_THROWS_AS(rows_loss(rows, obs, cfg, nullptr, tape), ShapeError);
  rows.push_back(tape.variable(std::vector<double>{0, 0, 0}));
  CHECK_THROWS_AS(rows_loss(rows, obs, cfg, nullptr, tape), ShapeError);
  rows.back() = tape.variable(std::vector<double>{0, 0});
  obs(1, 1) = NAN;
  CHECK_THROWS_AS(rows_loss(rows, obs, cfg, nullptr, tape), NumericalError);
  cfg.lambda = -1.0;
  obs(1, 1) = 0.0;
  CHECK_THROWS_AS(rows_loss(rows, obs, cfg, nullptr, tape), ConfigError);

  odeint::TapedTrajectory pred;
  pred.rows = {tape.variable(std::vector<double>{0, 0}), tape.variable(std::vector<double>{0, 0})};
  pred.trajectory.grid = odeint::TimeGrid::uniform(2);
  odeint::Trajectory o;
  o.grid = odeint::TimeGrid::uniform(2, 0.0, 2.0);
  o.values = Matrix(2, 2);
  CHECK_THROWS_AS(trajectory_loss(pred, o, LossConfig{}, nullptr, tape), ShapeError);
}

TEST_CASE("negative mass") {
  Matrix m(2, 2);
  m(0, 0) = -1.0;
  m(1, 1) = -0.5;
  m(0, 1) = 3.0;
  CHECK(negative_mass(m) == 1.25);
}
