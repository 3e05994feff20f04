#include <cmath>

#include "doctest.h"
#include "metanode/errors.hpp"
#include "metanode/kernels.hpp"
#include "support.hpp"

using namespace metanode;
using namespace metanode::kernels;
using testsupport::central_diff;
using testsupport::rel_error;
using testsupport::uniform_vector;

namespace {

TrainingObjective toy_objective(std::mt19937_64& rng, std::size_t dim, std::size_t points,
                                std::size_t strains) {
  TrainingObjective obj;
  obj.spec = field::FieldSpec{dim, 5, 2};
  obj.grid = odeint::TimeGrid::uniform(points);
  obj.solve.method = odeint::Method::rk4_fixed;
  obj.loss.lambda = 2.0;
  obj.denorm.scale = uniform_vector(rng, dim, 0.5, 2.0);
  obj.denorm.offset = uniform_vector(rng, dim, -0.2, 1.0);
  for (std::size_t s = 0; s < strains; ++s) {
    Matrix m(points, dim);
    const auto v = uniform_vector(rng, points * dim, -1.5, 1.5);
    std::copy(v.begin(), v.end(), m.data().begin());
    obj.strains.push_back({"S" + std::to_string(s), m});
  }
  return obj;
}

}  // namespace

TEST_CASE("batched field evaluation matches row-by-row eval") {
  std::mt19937_64 rng(51);
  const auto params = field::init_params(field::FieldSpec{6, 8, 3}, 7);
  Matrix states(300, 6);
  const auto v = uniform_vector(rng, 300 * 6, -3.0, 3.0);
  std::copy(v.begin(), v.end(), states.data().begin());
  const Matrix serial = eval_field_batch(params, states, Execution::serial);
  const Matrix parallel = eval_field_batch(params, states, Execution::parallel);
  CHECK(serial == parallel);
  for (std::size_t r = 0; r < 300; r += 37) {
    const auto du = field::eval(params, states.row(r));
    for (std::size_t i = 0; i < 6; ++i) CHECK(serial(r, i) == du[i]);
  }
  CHECK_THROWS_AS(eval_field_batch(params, Matrix(2, 5), Execution::serial), ShapeError);
}

TEST_CASE("objective: serial and parallel agree bitwise") {
  std::mt19937_64 rng(52);
  for (bool per_point : {false, true}) {
    TrainingObjective obj = toy_objective(rng, 3, 12, 4);
    obj.per_point = per_point;
    const auto theta = uniform_vector(rng, obj.spec.parameter_count(), -1.0, 1.0);
    std::vector<double> gs(theta.size()), gp(theta.size());
    const LossParts a = obj.evaluate(theta, gs, Execution::serial);
    const LossParts b = obj.evaluate(theta, gp, Execution::parallel);
    CHECK(a.total == b.total);
    CHECK(a.mse == b.mse);
    CHECK(a.pir == b.pir);
    CHECK(gs == gp);
    CHECK(a.total == doctest::Approx(a.mse + 2.0 * a.pir).epsilon(1e-14));
  }
}

TEST_CASE("objective gradient matches central differences") {
  std::mt19937_64 rng(53);
  for (bool per_point : {false, true}) {
    for (int trial = 0; trial < 5; ++trial) {
      TrainingObjective obj = toy_objective(rng, 3, 8, 2);
      obj.per_point = per_point;
      const auto theta = uniform_vector(rng, obj.spec.parameter_count(), -1.0, 1.0);
      std::vector<double> grad(theta.size()), scratch(theta.size());
      obj.evaluate(theta, grad, Execution::serial);
      const auto fd = central_diff(
          [&](std::span<const double> th) { return obj.evaluate(th, scratch, Execution::serial).total; }, theta);
      CHECK(rel_error(grad, fd) <= 1e-5);
    }
  }
}

TEST_CASE("objective with a zero field equals the data-only loss") {
  // u stays at the first observed row, so the loss is the mean squared
  // distance of every row from row 0.
  TrainingObjective obj;
  obj.spec = field::FieldSpec{2, 3, 1};
  obj.grid = odeint::TimeGrid::uniform(3);
  obj.loss.lambda = 0.0;
  obj.denorm = {{1.0, 1.0}, {0.0, 0.0}};
  Matrix m(3, 2);
  m(0, 0) = 1.0;
  m(1, 0) = 2.0;
  m(2, 1) = -1.0;
  obj.strains.push_back({"S", m});
  std::vector<double> theta(obj.spec.parameter_count(), 0.0), grad(theta.size());
  const auto parts = obj.evaluate(theta, grad, Execution::serial);
  // Residuals: row1 (-1, 0), row2 (1, 1); six cells in total.
  CHECK(parts.mse == doctest::Approx(3.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("objective errors") {
  std::mt19937_64 rng(54);
  TrainingObjective obj = toy_objective(rng, 3, 6, 2);
  std::vector<double> theta(obj.spec.parameter_count(), 0.0), grad(theta.size() - 1);
  CHECK_THROWS_AS(obj.evaluate(theta, grad, Execution::serial), ShapeError);
  obj.strains[1].observed = Matrix(5, 3);
  grad.resize(theta.size());
  CHECK_THROWS_AS(obj.evaluate(theta, grad, Execution::parallel), ShapeError);
}
