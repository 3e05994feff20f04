#include "metanode/kernels.hpp"

#include <exception>

#include "metanode/adiff.hpp"
#include "metanode/errors.hpp"

namespace metanode::kernels {

Matrix eval_field_batch(const field::FieldParams& params, const Matrix& states, Execution exec) {
  const std::size_t dim = params.spec().input_dim;
  if (states.cols() != dim) throw ShapeError("eval_field_batch: state width does not match field");
  Matrix out(states.rows(), dim);
  const auto n = static_cast<std::ptrdiff_t>(states.rows());
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < n; ++r) field::eval(params, states.row(r), out.row(r));
  } else {
    for (std::ptrdiff_t r = 0; r < n; ++r) field::eval(params, states.row(r), out.row(r));
  }
  return out;
}

namespace {

struct StrainResult {
  LossParts parts;
  std::vector<double> grad;
  std::exception_ptr error;
};

void strain_loss(const TrainingObjective& obj, const StrainTarget& strain,
                 const field::FieldParams& params, const loss::LossCounts& counts,
                 StrainResult& out) {
  adiff::Tape tape;
  const std::size_t T = obj.grid.size();
  tape.reserve(T * obj.solve.substeps * 4 * 24 + 64, T * obj.solve.substeps * 4 * 160);
  const field::TapedField taped(params, tape);
  const odeint::TapedRhs rhs = [&taped](adiff::Var u) { return taped(u); };

  std::vector<adiff::Var> rows;
  if (obj.per_point) {
    rows.push_back(tape.constant(strain.observed.row(0)));
    odeint::TimeGrid interval;
    interval.t.resize(2);
    for (std::size_t i = 0; i + 1 < T; ++i) {
      interval.t = {obj.grid.t[i], obj.grid.t[i + 1]};
      const auto step = odeint::solve(rhs, tape.constant(strain.observed.row(i)), interval,
                                      obj.solve, tape);
      rows.push_back(step.rows.back());
    }
  } else {
    rows = odeint::solve(rhs, tape.constant(strain.observed.row(0)), obj.grid, obj.solve, tape).rows;
  }

  const loss::LossValue value =
      loss::rows_loss(rows, strain.observed, obj.loss, &obj.denorm, tape, counts);
  const adiff::Gradients grads = tape.backward(value.total);
  out.grad.assign(params.theta().size(), 0.0);
  taped.gather_gradient(grads, out.grad);
  out.parts = {value.total.scalar(), value.mse.scalar(), value.pir.scalar()};
}

}  // namespace

LossParts TrainingObjective::evaluate(std::span<const double> theta, std::span<double> grad,
                                      Execution exec) const {
  if (strains.empty()) throw ConfigError("training objective has no strains");
  const field::FieldParams params(spec, std::vector<double>(theta.begin(), theta.end()));
  if (grad.size() != theta.size()) throw ShapeError("gradient buffer has wrong length");

  const std::size_t dim = spec.input_dim;
  const std::size_t cells = strains.size() * grid.size();
  const loss::LossCounts counts{cells * loss::mse_cells_per_row(loss, dim), cells * dim};

  std::vector<StrainResult> results(strains.size());
  const auto n = static_cast<std::ptrdiff_t>(strains.size());
  auto run = [&](std::ptrdiff_t s) {
    try {
      strain_loss(*this, strains[s], params, counts, results[s]);
    } catch (...) {
      results[s].error = std::current_exception();
    }
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t s = 0; s < n; ++s) run(s);
  } else {
    for (std::ptrdiff_t s = 0; s < n; ++s) run(s);
  }

  for (const StrainResult& r : results)
    if (r.error) std::rethrow_exception(r.error);

  LossParts total;
  std::fill(grad.begin(), grad.end(), 0.0);
  for (const StrainResult& r : results) {
    total.total += r.parts.total;
    total.mse += r.parts.mse;
    total.pir += r.parts.pir;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += r.grad[i];
  }
  return total;
}

}  // namespace metanode::kernels
