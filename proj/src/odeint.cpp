#include "metanode/odeint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "metanode/errors.hpp"

namespace metanode::odeint {

TimeGrid TimeGrid::uniform(std::size_t points, double t0, double t1) {
  TimeGrid g;
  if (points == 0) return g;
  g.t.resize(points);
  if (points == 1) {
    g.t[0] = t0;
    return g;
  }
  const double span = t1 - t0;
  for (std::size_t i = 0; i < points; ++i)
    g.t[i] = t0 + span * static_cast<double>(i) / static_cast<double>(points - 1);
  g.t.back() = t1;
  return g;
}

void TimeGrid::validate() const {
  if (t.empty()) throw ConfigError("time grid is empty");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) throw ConfigError("time grid contains a non-finite time");
    if (i > 0 && !(t[i] > t[i - 1]))
      throw ConfigError("time grid must be strictly increasing (index " + std::to_string(i) + ")");
  }
}

std::string to_string(Method m) {
  switch (m) {
    case Method::rk4_fixed: return "rk4";
    case Method::dopri8_adaptive: return "dopri8";
    case Method::dopri8_fixed: return "dopri8_fixed";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "rk4" || name == "rk4_fixed") return Method::rk4_fixed;
  if (name == "dopri8" || name == "dopri8_adaptive") return Method::dopri8_adaptive;
  if (name == "dopri8_fixed") return Method::dopri8_fixed;
  throw ConfigError("unknown integration method '" + name + "'");
}

void SolveOptions::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw ConfigError("rtol and atol must be positive");
  if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
  if (substeps < 1) throw ConfigError("substeps must be at least 1");
  if (initial_step && !(*initial_step > 0.0)) throw ConfigError("initial_step must be positive");
}

namespace {

// Backends let one stepping routine drive both plain vectors and tape records.
// combine() accumulates u + sum_j w_j k_j left to right in both backends, so
// taped and untaped trajectories agree bitwise.

struct ValueBackend {
  using State = std::vector<double>;
  const Rhs& rhs;
  std::size_t dim;
  SolveStats& stats;

  State eval(const State& u) {
    State du(dim);
    rhs(u, du);
    ++stats.evaluations;
    return du;
  }
  State combine(const State& u, std::span<const double> w, std::span<const State> ks) {
    State y = u;
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (w[j] == 0.0) continue;
      const State& k = ks[j];
      for (std::size_t i = 0; i < dim; ++i) y[i] += w[j] * k[i];
    }
    return y;
  }
  std::vector<double> values(const State& s) const { return s; }
};

struct TapeBackend {
  using State = adiff::Var;
  const TapedRhs& rhs;
  adiff::Tape& tape;
  SolveStats& stats;

  State eval(State u) {
    ++stats.evaluations;
    return rhs(u);
  }
  State combine(State u, std::span<const double> w, std::span<const State> ks) {
    State y = u;
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (w[j] == 0.0) continue;
      y = adiff::add(tape, y, adiff::scale(tape, w[j], ks[j]));
    }
    return y;
  }
  std::vector<double> values(const State& s) const {
    auto v = s.value();
    return {v.begin(), v.end()};
  }
};

template <class B>
typename B::State rk4_step(B& be, const typename B::State& u, double h) {
  using S = typename B::State;
  const S k1 = be.eval(u);
  const double half[] = {0.5 * h};
  const S k2 = be.eval(be.combine(u, half, std::span<const S>(&k1, 1)));
  const S k3 = be.eval(be.combine(u, half, std::span<const S>(&k2, 1)));
  const double full[] = {h};
  const S k4 = be.eval(be.combine(u, full, std::span<const S>(&k3, 1)));
  const S ks[] = {k1, k2, k3, k4};
  const double w[] = {h / 6.0, h / 3.0, h / 3.0, h / 6.0};
  return be.combine(u, w, ks);
}

template <class B>
struct Dopri8Step {
  typename B::State next;
  std::vector<double> error;  // h * sum (b - b_hat)_j k_j
};

template <class B>
Dopri8Step<B> dopri8_step(B& be, const typename B::State& u, double h, bool want_error) {
  using S = typename B::State;
  const Dopri8Tableau& tab = dopri8_tableau();
  std::vector<S> k;
  k.reserve(Dopri8Tableau::stages);
  double w[Dopri8Tableau::stages];
  k.push_back(be.eval(u));
  for (std::size_t s = 1; s < Dopri8Tableau::stages; ++s) {
    for (std::size_t j = 0; j < s; ++j) w[j] = h * tab.a[s][j];
    k.push_back(be.eval(be.combine(u, std::span<const double>(w, s), std::span<const S>(k.data(), s))));
  }
  for (std::size_t j = 0; j < Dopri8Tableau::stages; ++j) w[j] = h * tab.b[j];
  Dopri8Step<B> out{be.combine(u, w, k), {}};
  if (want_error) {
    std::vector<std::vector<double>> kv;
    kv.reserve(k.size());
    for (const S& kj : k) kv.push_back(be.values(kj));
    out.error.assign(kv[0].size(), 0.0);
    for (std::size_t j = 0; j < Dopri8Tableau::stages; ++j) {
      const double e = h * (tab.b[j] - tab.b_hat[j]);
      if (e == 0.0) continue;
      for (std::size_t i = 0; i < out.error.size(); ++i) out.error[i] += e * kv[j][i];
    }
  }
  return out;
}

template <class B>
typename B::State fixed_step(B& be, Method method, const typename B::State& u, double h) {
  if (method == Method::rk4_fixed) return rk4_step(be, u, h);
  return dopri8_step(be, u, h, false).next;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double rms_scaled(std::span<const double> v, std::span<const double> scale) {
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double r = v[i] / scale[i];
    acc += r * r;
  }
  return v.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(v.size()));
}

constexpr double kSafety = 0.9;
constexpr double kBeta = 0.04;                       // PI integral gain
constexpr double kAlpha = 1.0 / 8.0 - 0.75 * kBeta;  // error estimate is O(h^8)
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;

// Automatic initial step (Hairer, Norsett & Wanner, Solving ODEs I, II.4):
// balance the scaled sizes of u0, f(u0) and a finite-difference estimate of
// the second derivative against the error exponent 1/(order+1).
template <class B>
double select_initial_step(B& be, const typename B::State& u0, const typename B::State& f0,
                           const SolveOptions& opts, double span) {
  using S = typename B::State;
  const auto u = be.values(u0);
  const auto f = be.values(f0);
  std::vector<double> scale(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) scale[i] = opts.atol + opts.rtol * std::abs(u[i]);
  const double d0 = rms_scaled(u, scale);
  const double d1 = rms_scaled(f, scale);
  const double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  const double w[] = {h0};
  const S f1_state = be.eval(be.combine(u0, w, std::span<const S>(&f0, 1)));
  const auto f1 = be.values(f1_state);
  std::vector<double> diff(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) diff[i] = f1[i] - f[i];
  const double d2 = rms_scaled(diff, scale) / h0;
  const double dmax = std::max(d1, d2);
  const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 1.0 / 9.0);
  return std::min({100.0 * h0, h1, span});
}

template <class B>
void integrate(B& be, typename B::State u, const TimeGrid& grid, const SolveOptions& opts,
               SolveStats& stats, std::vector<typename B::State>& rows) {
  rows.push_back(u);
  if (grid.size() == 1) return;

  if (opts.method != Method::dopri8_adaptive) {
    for (std::size_t i = 1; i < grid.size(); ++i) {
      const double h = (grid.t[i] - grid.t[i - 1]) / static_cast<double>(opts.substeps);
      for (std::size_t s = 0; s < opts.substeps; ++s) {
        u = fixed_step(be, opts.method, u, h);
        ++stats.steps;
      }
      if (!all_finite(be.values(u)))
        throw NumericalError("solver produced a non-finite state at t = " + std::to_string(grid.t[i]));
      rows.push_back(u);
    }
    return;
  }

  double t = grid.t.front();
  const double span = grid.t.back() - grid.t.front();
  double h = opts.initial_step ? *opts.initial_step
                               : select_initial_step(be, u, be.eval(u), opts, span);
  double err_prev = 1e-4;
  std::size_t attempts = 0;
  bool last_nonfinite = false;
  auto u_values = be.values(u);

  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double target = grid.t[i];
    while (t < target) {
      const double remaining = target - t;
      double h_try = h;
      bool clamped = false;
      if (h_try >= remaining * (1.0 - 1e-12)) {
        h_try = remaining;
        clamped = true;
      }
      if (++attempts > opts.max_steps)
        throw StiffnessError("step budget of " + std::to_string(opts.max_steps) +
                                 " exhausted at t = " + std::to_string(t),
                             t);
      if (h_try <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1.0)) {
        if (last_nonfinite)
          throw NumericalError("solver produced a non-finite state near t = " + std::to_string(t));
        throw StiffnessError("step size underflow at t = " + std::to_string(t), t);
      }

      auto step = dopri8_step(be, u, h_try, true);
      const auto next = be.values(step.next);
      double err;
      if (all_finite(next) && all_finite(step.error)) {
        std::vector<double> scale(next.size());
        for (std::size_t j = 0; j < next.size(); ++j)
          scale[j] = opts.atol + opts.rtol * std::max(std::abs(u_values[j]), std::abs(next[j]));
        err = rms_scaled(step.error, scale);
        last_nonfinite = false;
      } else {
        err = std::numeric_limits<double>::infinity();
        last_nonfinite = true;
      }

      if (err <= 1.0) {
        t = clamped ? target : t + h_try;
        u = step.next;
        u_values = next;
        ++stats.steps;
        const double factor =
            err == 0.0 ? kMaxFactor
                       : std::clamp(kSafety * std::pow(err, -kAlpha) * std::pow(err_prev, kBeta),
                                    kMinFactor, kMaxFactor);
        err_prev = std::max(err, 1e-4);
        h = (clamped && factor >= 1.0) ? std::max(h, h_try * factor) : h_try * factor;
      } else {
        ++stats.rejected;
        const double factor =
            std::isfinite(err) ? std::max(kMinFactor, kSafety * std::pow(err, -kAlpha)) : kMinFactor;
        h = h_try * factor;
      }
    }
    rows.push_back(u);
  }
}

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  return m;
}

}  // namespace

Trajectory solve(const Rhs& rhs, std::span<const double> u0, const TimeGrid& grid,
                 const SolveOptions& opts) {
  grid.validate();
  opts.validate();
  if (!all_finite(u0)) throw NumericalError("initial state is not finite");
  Trajectory out;
  out.grid = grid;
  ValueBackend be{rhs, u0.size(), out.stats};
  std::vector<std::vector<double>> rows;
  integrate(be, std::vector<double>(u0.begin(), u0.end()), grid, opts, out.stats, rows);
  out.values = to_matrix(rows);
  return out;
}

Trajectory solve(const field::FieldParams& params, std::span<const double> u0,
                 const TimeGrid& grid, const SolveOptions& opts) {
  if (u0.size() != params.spec().input_dim)
    throw ShapeError("initial state has dimension " + std::to_string(u0.size()) +
                     ", field expects " + std::to_string(params.spec().input_dim));
  const Rhs rhs = [&params](std::span<const double> u, std::span<double> du) {
    field::eval(params, u, du);
  };
  return solve(rhs, u0, grid, opts);
}

TapedTrajectory solve(const TapedRhs& rhs, adiff::Var u0, const TimeGrid& grid,
                      const SolveOptions& opts, adiff::Tape& tape) {
  grid.validate();
  opts.validate();
  if (!all_finite(u0.value())) throw NumericalError("initial state is not finite");
  TapedTrajectory out;
  out.trajectory.grid = grid;
  TapeBackend be{rhs, tape, out.trajectory.stats};
  integrate(be, u0, grid, opts, out.trajectory.stats, out.rows);
  Matrix values(out.rows.size(), u0.shape().size());
  for (std::size_t r = 0; r < out.rows.size(); ++r) {
    const auto v = out.rows[r].value();
    std::copy(v.begin(), v.end(), values.row(r).begin());
  }
  out.trajectory.values = std::move(values);
  return out;
}

std::vector<double> fixed_steps(const Rhs& rhs, Method method, std::span<const double> u0,
                                double h, std::size_t steps) {
  if (method == Method::dopri8_adaptive) method = Method::dopri8_fixed;
  SolveStats stats;
  ValueBackend be{rhs, u0.size(), stats};
  std::vector<double> u(u0.begin(), u0.end());
  for (std::size_t s = 0; s < steps; ++s) u = fixed_step(be, method, u, h);
  return u;
}

double convergence_order(const FixedStepper& stepper, const TestProblem& problem) {
  const auto exact = problem.exact(problem.t_end);
  auto error = [&](std::size_t n) {
    const auto u = stepper(problem.rhs, problem.u0, problem.t_end / static_cast<double>(n), n);
    double e = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) e = std::max(e, std::abs(u[i] - exact[i]));
    return e;
  };
  const double coarse = error(problem.coarse_steps);
  const double fine = error(2 * problem.coarse_steps);
  return std::log2(coarse / fine);
}

double convergence_order(Method method, const TestProblem& problem) {
  return convergence_order(
      [method](const Rhs& rhs, std::span<const double> u0, double h, std::size_t steps) {
        return fixed_steps(rhs, method, u0, h, steps);
      },
      problem);
}

}  // namespace metanode::odeint
