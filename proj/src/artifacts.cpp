#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "metanode/errors.hpp"
#include "metanode/harness.hpp"

namespace metanode::harness {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

// File-name-safe version of a feature name ("IPP/DMAPP" -> "IPP_DMAPP").
std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_';
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::size_t index_of(const std::vector<std::string>& names, const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("unknown feature '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

}  // namespace

FieldSlice vector_field_slice(const field::FieldParams& params,
                              const std::vector<std::string>& feature_names,
                              const std::string& feature_i, const std::string& feature_j,
                              std::span<const double> clamp, double lo_i, double hi_i,
                              double lo_j, double hi_j, std::size_t grid,
                              kernels::Execution exec) {
  if (grid < 2) throw ConfigError("field slice grid must be at least 2");
  if (clamp.size() != params.spec().input_dim) throw ShapeError("field slice: clamp point has wrong length");
  const std::size_t i = index_of(feature_names, feature_i);
  const std::size_t j = index_of(feature_names, feature_j);
  if (i == j) throw ConfigError("field slice needs two distinct features");

  Matrix states(grid * grid, clamp.size());
  for (std::size_t a = 0; a < grid; ++a) {
    for (std::size_t b = 0; b < grid; ++b) {
      auto row = states.row(a * grid + b);
      std::copy(clamp.begin(), clamp.end(), row.begin());
      row[i] = lo_i + (hi_i - lo_i) * static_cast<double>(a) / static_cast<double>(grid - 1);
      row[j] = lo_j + (hi_j - lo_j) * static_cast<double>(b) / static_cast<double>(grid - 1);
    }
  }
  const Matrix du = kernels::eval_field_batch(params, states, exec);

  FieldSlice out{feature_i, feature_j, grid, Matrix(grid * grid, 4)};
  for (std::size_t r = 0; r < states.rows(); ++r) {
    out.samples(r, 0) = states(r, i);
    out.samples(r, 1) = states(r, j);
    out.samples(r, 2) = du(r, i);
    out.samples(r, 3) = du(r, j);
  }
  return out;
}

std::string slice_svg(const FieldSlice& slice) {
  const double size = 480.0, margin = 50.0;
  const Matrix& s = slice.samples;
  double xmin = s(0, 0), xmax = s(0, 0), ymin = s(0, 1), ymax = s(0, 1), vmax = 0.0;
  for (std::size_t r = 0; r < s.rows(); ++r) {
    xmin = std::min(xmin, s(r, 0));
    xmax = std::max(xmax, s(r, 0));
    ymin = std::min(ymin, s(r, 1));
    ymax = std::max(ymax, s(r, 1));
    vmax = std::max(vmax, std::hypot(s(r, 2), s(r, 3)));
  }
  const double sx = xmax > xmin ? size / (xmax - xmin) : 1.0;
  const double sy = ymax > ymin ? size / (ymax - ymin) : 1.0;
  const double cell = size / static_cast<double>(slice.grid - 1);
  const double arrow = 0.45 * cell;

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(size + 2 * margin) +
                    "\" height=\"" + num(size + 2 * margin) + "\">\n";
  svg += "<title>" + escape_xml(slice.feature_i + " vs " + slice.feature_j) + "</title>\n";
  for (std::size_t r = 0; r < s.rows(); ++r) {
    const double x = margin + (s(r, 0) - xmin) * sx;
    const double y = margin + size - (s(r, 1) - ymin) * sy;
    const double mag = std::hypot(s(r, 2), s(r, 3));
    // Zero field: every cell gets the same color and no arrow.
    const int shade = vmax > 0.0 ? static_cast<int>(std::lround(230.0 - 180.0 * mag / vmax)) : 200;
    svg += "<rect x=\"" + num(x - cell / 2) + "\" y=\"" + num(y - cell / 2) + "\" width=\"" + num(cell) +
           "\" height=\"" + num(cell) + "\" fill=\"rgb(" + std::to_string(shade) + "," +
           std::to_string(shade) + ",255)\"/>\n";
    if (vmax > 0.0 && mag > 0.0) {
      const double dx = arrow * s(r, 2) / vmax, dy = -arrow * s(r, 3) / vmax;
      svg += "<line x1=\"" + num(x) + "\" y1=\"" + num(y) + "\" x2=\"" + num(x + dx) + "\" y2=\"" +
             num(y + dy) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    }
  }
  svg += "<text x=\"" + num(margin + size / 2) + "\" y=\"" + num(size + 1.7 * margin) +
         "\" text-anchor=\"middle\">" + escape_xml(slice.feature_i) + "</text>\n";
  svg += "<text x=\"15\" y=\"" + num(margin + size / 2) + "\" transform=\"rotate(-90 15 " +
         num(margin + size / 2) + ")\" text-anchor=\"middle\">" + escape_xml(slice.feature_j) + "</text>\n";
  svg += "</svg>\n";
  return svg;
}

std::string overlay_svg(const std::string& title, const std::vector<double>& hours,
                        const std::vector<double>& observed, const std::vector<double>& predicted) {
  if (hours.size() != observed.size() || hours.size() != predicted.size() || hours.empty())
    throw ShapeError("overlay: series lengths differ");
  const double w = 560.0, h = 320.0, margin = 50.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t k = 0; k < hours.size(); ++k) {
    lo = std::min({lo, observed[k], predicted[k]});
    hi = std::max({hi, observed[k], predicted[k]});
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double t0 = hours.front(), t1 = hours.back() > hours.front() ? hours.back() : hours.front() + 1.0;
  auto px = [&](double t) { return margin + (t - t0) / (t1 - t0) * w; };
  auto py = [&](double v) { return margin + h - (v - lo) / (hi - lo) * h; };
  auto polyline = [&](const std::vector<double>& v, const char* color, const char* dash) {
    std::string pts;
    for (std::size_t k = 0; k < v.size(); ++k) pts += num(px(hours[k])) + "," + num(py(v[k])) + " ";
    return "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\"" +
           dash + " points=\"" + pts + "\"/>\n";
  };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w + 2 * margin) +
                    "\" height=\"" + num(h + 2 * margin) + "\">\n";
  svg += "<title>" + escape_xml(title) + "</title>\n";
  svg += "<rect x=\"" + num(margin) + "\" y=\"" + num(margin) + "\" width=\"" + num(w) + "\" height=\"" +
         num(h) + "\" fill=\"none\" stroke=\"gray\"/>\n";
  svg += polyline(observed, "black", "");
  svg += polyline(predicted, "crimson", " stroke-dasharray=\"6 3\"");
  svg += "<text x=\"" + num(margin) + "\" y=\"" + num(margin - 15) + "\">" + escape_xml(title) + "</text>\n";
  svg += "<text x=\"" + num(margin + w / 2) + "\" y=\"" + num(h + 1.8 * margin) +
         "\" text-anchor=\"middle\">time (h)</text>\n";
  svg += "<text x=\"" + num(margin + w - 120) + "\" y=\"" + num(margin - 15) +
         "\">observed / predicted</text>\n";
  svg += "</svg>\n";
  return svg;
}

std::string metrics_table(const MetricsReport& report) {
  std::size_t width = std::string("% Improvement").size();
  for (const auto& [name, _] : report.per_feature_rmse) width = std::max(width, name.size());
  auto line = [&](const std::string& name, const std::string& value) {
    return name + std::string(width - std::min(width, name.size()) + 2, ' ') + value + "\n";
  };
  char buf[64];
  std::string out = "pathway " + report.pathway + ", lambda " + lambda_label(report.lambda) +
                    ", RMSE (" + report.rmse_space + ")\n";
  if (report.status != "ok") return out + "status: failed: " + report.error + "\n";
  for (const auto& [name, v] : report.per_feature_rmse) {
    std::snprintf(buf, sizeof buf, "%.4f", v);
    out += line(name, buf);
  }
  std::snprintf(buf, sizeof buf, "%.4f", report.mean_rmse);
  out += line("Mean RMSE", buf);
  if (report.pct_improvement) {
    std::snprintf(buf, sizeof buf, "%.2f", *report.pct_improvement);
    out += line("% Improvement", buf);
  }
  return out;
}

void emit_artifacts(const MetricsReport& report, const odeint::Trajectory& prediction,
                    const dataio::Dataset& dataset, const field::FieldParams& params,
                    const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "metrics.json", report.to_json().dump(2) + "\n");
  write_text(dir / "metrics.txt", metrics_table(report));

  const odeint::TimeGrid& grid = dataset.grid();
  std::vector<double> hours(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) hours[k] = grid.origin_hours + grid.t[k] * grid.span_hours;

  const Matrix& obs = dataset.observed(dataset.split().test);
  const Matrix physical = dataset.norm_stats().denormalize(prediction.values);
  dataio::write_trajectory_csv(dir / "prediction.csv", hours, dataset.feature_names(), physical);
  dataio::write_trajectory_csv(dir / "prediction_normalized.csv", hours, dataset.feature_names(),
                               prediction.values);

  const std::filesystem::path plots = dir / "plots";
  std::filesystem::create_directories(plots);
  const bool phys = cfg.rmse_space == "physical";
  const Matrix obs_shown = phys ? dataset.norm_stats().denormalize(obs) : obs;
  const Matrix& pred_shown = phys ? physical : prediction.values;
  for (std::size_t c : dataset.state_indices()) {
    const std::string& name = dataset.feature_names()[c];
    write_text(plots / ("overlay_" + slug(name) + ".svg"),
               overlay_svg(name + " (" + dataset.split().test + ")", hours, obs_shown.column(c),
                           pred_shown.column(c)));
  }

  // Slice through the two chosen features, other features held at their
  // mean over the predicted trajectory (normalized).
  std::vector<std::string> pair = cfg.slice_features;
  if (pair.empty()) {
    const auto& s = dataset.state_indices();
    if (s.size() < 2) return;
    pair = {dataset.feature_names()[s[0]], dataset.feature_names()[s[1]]};
  }
  const std::size_t i = index_of(dataset.feature_names(), pair[0]);
  const std::size_t j = index_of(dataset.feature_names(), pair[1]);
  auto range = [&](std::size_t c) {
    double lo = obs(0, c), hi = obs(0, c);
    for (std::size_t r = 0; r < obs.rows(); ++r) {
      lo = std::min(lo, obs(r, c));
      hi = std::max(hi, obs(r, c));
    }
    if (!(hi > lo)) {
      lo -= 1.0;
      hi += 1.0;
    }
    return std::pair{lo, hi};
  };
  const auto [lo_i, hi_i] = range(i);
  const auto [lo_j, hi_j] = range(j);
  std::vector<double> clamp(dataset.dim(), 0.0);
  for (std::size_t c = 0; c < clamp.size(); ++c) {
    for (std::size_t r = 0; r < prediction.values.rows(); ++r) clamp[c] += prediction.values(r, c);
    clamp[c] /= static_cast<double>(prediction.values.rows());
  }
  const FieldSlice slice = vector_field_slice(params, dataset.feature_names(), pair[0], pair[1], clamp,
                                              lo_i, hi_i, lo_j, hi_j, cfg.slice_grid, cfg.execution);
  std::string csv = "u_i,u_j,du_i,du_j\n";
  char buf[128];
  for (std::size_t r = 0; r < slice.samples.rows(); ++r) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", slice.samples(r, 0), slice.samples(r, 1),
                  slice.samples(r, 2), slice.samples(r, 3));
    csv += buf;
  }
  write_text(plots / "field_slice.csv", csv);
  write_text(plots / "field_slice.svg", slice_svg(slice));
}

}  // namespace metanode::harness
