#include "metanode/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "metanode/errors.hpp"

namespace metanode::optim {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("adam: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("adam: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be positive");
}

void LbfgsConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lbfgs: lr must be positive");
  if (!(grad_tol > 0.0) || !(change_tol > 0.0)) throw ConfigError("lbfgs: tolerances must be positive");
  if (history < 1) throw ConfigError("lbfgs: history must be at least 1");
  if (!(0.0 < c1 && c1 < c2 && c2 < 1.0)) throw ConfigError("lbfgs: need 0 < c1 < c2 < 1");
  if (max_line_search_evals < 1) throw ConfigError("lbfgs: line search needs at least one evaluation");
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::grad_tol: return "grad_tol";
    case Termination::change_tol: return "change_tol";
    case Termination::max_iters: return "max_iters";
    case Termination::line_search_failed: return "line_search_failed";
    case Termination::adam_epochs: return "epochs";
    case Termination::diverged: return "diverged";
  }
  return "unknown";
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adam: gradient length differs from parameters");
  for (double g : grads)
    if (!std::isfinite(g)) throw DivergenceError("adam: non-finite gradient");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

bool finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

struct LinePoint {
  double t = 0.0;
  double f = 0.0;
  double gtd = 0.0;
  std::vector<double> g;
};

// Minimizer of the cubic matching values and slopes at two points, clamped to
// [lo, hi]; bisects when the cubic has no real minimizer.
double cubic_interpolate(const LinePoint& p1, const LinePoint& p2, double lo, double hi) {
  const double d1 = p1.gtd + p2.gtd - 3.0 * (p1.f - p2.f) / (p1.t - p2.t);
  const double d2_sq = d1 * d1 - p1.gtd * p2.gtd;
  if (d2_sq >= 0.0 && std::isfinite(d2_sq)) {
    const double d2 = std::sqrt(d2_sq);
    double pos;
    if (p1.t <= p2.t)
      pos = p2.t - (p2.t - p1.t) * ((p2.gtd + d2 - d1) / (p2.gtd - p1.gtd + 2.0 * d2));
    else
      pos = p1.t - (p1.t - p2.t) * ((p1.gtd + d2 - d1) / (p1.gtd - p2.gtd + 2.0 * d2));
    if (std::isfinite(pos)) return std::clamp(pos, lo, hi);
  }
  return 0.5 * (lo + hi);
}

struct LineSearchResult {
  LinePoint point;   // t == 0 means no acceptable point
  std::size_t evals = 0;
  bool any_finite = false;
};

// Strong-Wolfe search (Nocedal & Wright, Algorithms 3.5/3.6) with cubic
// interpolation in both the bracketing and zoom phases.
LineSearchResult strong_wolfe(const Objective& objective, std::span<const double> x,
                              const LinePoint& start, std::span<const double> d, double t,
                              const LbfgsConfig& cfg) {
  const std::size_t n = x.size();
  const double f0 = start.f;
  const double gtd0 = start.gtd;
  const double d_max = max_abs(d);
  std::vector<double> xt(n);
  LineSearchResult res;

  auto evaluate = [&](double step) {
    LinePoint p;
    p.t = step;
    p.g.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + step * d[i];
    p.f = objective(xt, p.g);
    ++res.evals;
    if (!std::isfinite(p.f) || !finite(p.g)) {
      p.f = std::numeric_limits<double>::infinity();
      return p;
    }
    res.any_finite = true;
    p.gtd = dot(p.g, d);
    return p;
  };
  auto armijo = [&](const LinePoint& p) { return p.f <= f0 + cfg.c1 * p.t * gtd0; };
  auto curvature = [&](const LinePoint& p) { return std::abs(p.gtd) <= -cfg.c2 * gtd0; };

  LinePoint prev = start;
  prev.t = 0.0;
  LinePoint lo, hi;
  bool bracketed = false;
  LinePoint best = prev;  // best Armijo point seen

  while (res.evals < cfg.max_line_search_evals) {
    LinePoint cur = evaluate(t);
    if (!std::isfinite(cur.f)) {
      t = 0.5 * (prev.t + t);  // backtrack toward the last finite point
      continue;
    }
    if (!armijo(cur) || (prev.t > 0.0 && cur.f >= prev.f)) {
      lo = prev;
      hi = cur;
      bracketed = true;
      break;
    }
    if (cur.f < best.f) best = cur;
    if (curvature(cur)) {
      res.point = cur;
      return res;
    }
    if (cur.gtd >= 0.0) {
      lo = cur;
      hi = prev;
      bracketed = true;
      break;
    }
    const double next = cubic_interpolate(prev, cur, t + 0.01 * (t - prev.t), 10.0 * t);
    prev = cur;
    t = next;
  }

  if (bracketed) {
    while (res.evals < cfg.max_line_search_evals) {
      const double a = std::min(lo.t, hi.t), b = std::max(lo.t, hi.t);
      if ((b - a) * d_max < 1e-14) break;
      double step = std::isfinite(hi.f) ? cubic_interpolate(lo, hi, a, b) : 0.5 * (a + b);
      const double margin = 0.1 * (b - a);
      if (step - a < margin || b - step < margin) step = 0.5 * (a + b);
      LinePoint cur = evaluate(step);
      if (!std::isfinite(cur.f) || !armijo(cur) || cur.f >= lo.f) {
        hi = cur;
        continue;
      }
      if (cur.f < best.f) best = cur;
      if (curvature(cur)) {
        res.point = cur;
        return res;
      }
      if (cur.gtd * (hi.t - lo.t) >= 0.0) hi = lo;
      lo = cur;
    }
  }
  res.point = best;
  return res;
}

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& objective, std::vector<double> x0,
                           const LbfgsConfig& cfg) {
  cfg.validate();
  if (!finite(x0)) throw NumericalError("lbfgs: initial point is not finite");
  const std::size_t n = x0.size();

  LbfgsResult out;
  LinePoint cur;
  cur.g.assign(n, 0.0);
  cur.f = objective(x0, cur.g);
  out.evaluations = 1;
  if (!std::isfinite(cur.f) || !finite(cur.g))
    throw LineSearchError("lbfgs: objective is not finite at the initial point");
  std::vector<double> x = std::move(x0);
  out.values.push_back(cur.f);

  auto finish = [&](Termination reason) {
    out.x = x;
    out.value = cur.f;
    out.reason = reason;
    return out;
  };
  if (max_abs(cur.g) <= cfg.grad_tol) return finish(Termination::grad_tol);

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> d(n), alpha(cfg.history);

  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    // Two-loop recursion: d = -H g.
    for (std::size_t i = 0; i < n; ++i) d[i] = -cur.g[i];
    const std::size_t m = s_hist.size();
    for (std::size_t k = m; k-- > 0;) {
      alpha[k] = rho_hist[k] * dot(s_hist[k], d);
      for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[k] * y_hist[k][i];
    }
    if (m > 0) {
      const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
      for (double& v : d) v *= gamma;
    }
    for (std::size_t k = 0; k < m; ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], d);
      for (std::size_t i = 0; i < n; ++i) d[i] += (alpha[k] - beta) * s_hist[k][i];
    }
    cur.gtd = dot(cur.g, d);
    if (!(cur.gtd < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -cur.g[i];
      cur.gtd = dot(cur.g, d);
    }

    double l1 = 0.0;
    for (double v : cur.g) l1 += std::abs(v);
    const double t0 = it == 1 ? std::min(1.0, 1.0 / l1) * cfg.lr : cfg.lr;
    const LineSearchResult ls = strong_wolfe(objective, x, cur, d, t0, cfg);
    out.evaluations += ls.evals;
    if (!ls.any_finite && it == 1)
      throw LineSearchError("lbfgs: no finite objective value along the search direction");
    if (ls.point.t == 0.0 || !(ls.point.f < cur.f)) return finish(Termination::line_search_failed);

    const LinePoint& nxt = ls.point;
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = nxt.t * d[i];
      y[i] = nxt.g[i] - cur.g[i];
    }
    const double ys = dot(y, s);
    if (ys > 1e-10) {
      if (s_hist.size() == cfg.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      rho_hist.push_back(1.0 / ys);
      s_hist.push_back(s);
      y_hist.push_back(y);
    }

    const double df = std::abs(cur.f - nxt.f);
    const double dx = max_abs(s);
    for (std::size_t i = 0; i < n; ++i) x[i] += s[i];
    cur.f = nxt.f;
    cur.g = nxt.g;
    out.iterations = it;
    out.values.push_back(cur.f);

    if (max_abs(cur.g) <= cfg.grad_tol) return finish(Termination::grad_tol);
    if (df <= cfg.change_tol && dx <= cfg.change_tol) return finish(Termination::change_tol);
  }
  return finish(Termination::max_iters);
}

nlohmann::json FitResult::to_json(bool include_timing) const {
  nlohmann::json curve_json = nlohmann::json::array();
  for (const LossPoint& p : curve)
    curve_json.push_back({{"stage", p.stage}, {"step", p.step}, {"value", p.value}});
  nlohmann::json j = {
      {"final_loss", final_loss},
      {"parameter_count", theta.size()},
      {"termination", {{"adam", to_string(adam_reason)}, {"lbfgs", to_string(lbfgs_reason)}}},
      {"failures", failures},
      {"curve", curve_json},
  };
  if (include_timing) j["timings"] = {{"adam_s", adam_seconds}, {"lbfgs_s", lbfgs_seconds}};
  return j;
}

FitResult two_stage_fit(const Objective& objective, std::vector<double> theta0,
                        const AdamConfig& adam, const LbfgsConfig& lbfgs) {
  adam.validate();
  lbfgs.validate();
  using clock = std::chrono::steady_clock;
  FitResult fit;
  std::vector<double> x = std::move(theta0);
  std::vector<double> grad(x.size());
  std::vector<double> best_x = x;
  double best_f = std::numeric_limits<double>::infinity();

  const auto adam_start = clock::now();
  AdamState state;
  for (std::size_t epoch = 0; epoch < adam.epochs; ++epoch) {
    const double f = objective(x, grad);
    if (!std::isfinite(f)) {
      fit.failures.push_back("adam: non-finite loss at epoch " + std::to_string(epoch));
      fit.adam_reason = Termination::diverged;
      break;
    }
    fit.curve.push_back({"adam", epoch, f});
    if (f < best_f) {
      best_f = f;
      best_x = x;
    }
    try {
      adam_step(x, grad, state, adam);
    } catch (const DivergenceError& e) {
      fit.failures.push_back(std::string(e.what()) + " at epoch " + std::to_string(epoch));
      fit.adam_reason = Termination::diverged;
      break;
    }
  }
  fit.adam_seconds = std::chrono::duration<double>(clock::now() - adam_start).count();

  const auto lbfgs_start = clock::now();
  const std::vector<double>& lbfgs_x0 = fit.adam_reason == Termination::diverged ? best_x : x;
  try {
    const LbfgsResult res = lbfgs_minimize(objective, lbfgs_x0, lbfgs);
    for (std::size_t i = 0; i < res.values.size(); ++i) fit.curve.push_back({"lbfgs", i, res.values[i]});
    fit.lbfgs_reason = res.reason;
    if (res.value < best_f) {
      best_f = res.value;
      best_x = res.x;
    }
  } catch (const Error& e) {
    fit.failures.push_back(std::string("lbfgs: ") + e.what());
    fit.lbfgs_reason = Termination::diverged;
  }
  fit.lbfgs_seconds = std::chrono::duration<double>(clock::now() - lbfgs_start).count();

  fit.theta = std::move(best_x);
  fit.final_loss = best_f;
  return fit;
}

}  // namespace metanode::optim
