#include "metanode/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "metanode/errors.hpp"
#include "metanode/rng.hpp"

namespace metanode::dataio {

namespace {

const std::vector<std::string> kControls = {
    "AtoB", "GPPS", "HMGR", "HMGS", "Idi", "Limonene Synthase", "MK", "NudB", "PMD", "PMK",
};

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_number(const std::string& text, const std::string& where) {
  if (text.empty()) throw DataError("empty value at " + where);
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || !std::isfinite(v))
    throw DataError("invalid number '" + text + "' at " + where);
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

FeatureSchema FeatureSchema::limonene() {
  return {"limonene", kControls,
          {"Acetyl-CoA", "HMG-CoA", "Mevalonate", "Mev-P", "IPP/DMAPP", "Limonene", "OD600", "GPP",
           "NAD", "NADP", "Acetate", "Pyruvate", "Citrate"}};
}

FeatureSchema FeatureSchema::isopentenol() {
  return {"isopentenol", kControls,
          {"Acetyl-CoA", "HMG-CoA", "Mevalonate", "Mev-P", "IPP/DMAPP", "OD600", "GPP", "NAD",
           "NADP", "Acetate", "Pyruvate", "Citrate", "Isopentenol"}};
}

FeatureSchema FeatureSchema::for_pathway(const std::string& pathway) {
  if (pathway == "limonene") return limonene();
  if (pathway == "isopentenol") return isopentenol();
  throw ConfigError("unknown pathway '" + pathway + "' (expected limonene or isopentenol)");
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out = controls;
  out.insert(out.end(), states.begin(), states.end());
  return out;
}

std::vector<std::size_t> FeatureSchema::state_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < states.size(); ++i) out.push_back(controls.size() + i);
  return out;
}

LoadResult parse_csv(std::istream& in, const FeatureSchema& schema, const std::string& source) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
  LoadResult out;
  out.checksum = hex64(fnv1a64(text.data(), text.size()));

  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(lines, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_fields(trim(line));
      break;
    }
  }
  if (header.size() < 2 || header[0] != "strain" || header[1] != "time_h")
    throw SchemaError(source + ": header must start with 'strain,time_h'");

  const std::vector<std::string> names = schema.names();
  std::vector<std::size_t> column_of(names.size());
  for (std::size_t f = 0; f < names.size(); ++f) {
    const auto it = std::find(header.begin() + 2, header.end(), names[f]);
    if (it == header.end())
      throw SchemaError(source + ": missing required feature column '" + names[f] + "'");
    column_of[f] = static_cast<std::size_t>(it - header.begin());
  }
  for (std::size_t c = 2; c < header.size(); ++c)
    if (std::find(names.begin(), names.end(), header[c]) == names.end())
      out.warnings.push_back(source + ": ignoring unknown column '" + header[c] + "'");

  std::map<std::string, std::size_t> index_of;
  std::vector<std::vector<std::vector<double>>> rows;  // strain -> row -> features
  while (std::getline(lines, line)) {
    ++line_no;
    const std::string trimmed = trim(line);
    if (trimmed.empty()) continue;
    const auto fields = split_fields(trimmed);
    const std::string where = source + ":" + std::to_string(line_no);
    if (fields.size() != header.size())
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    const std::string& id = fields[0];
    if (id.empty()) throw DataError(where + ": empty strain label");
    const double t = parse_number(fields[1], where);

    auto [it, inserted] = index_of.emplace(id, out.strains.size());
    if (inserted) {
      StrainSeries s;
      s.strain_id = id;
      s.pathway = schema.pathway;
      s.feature_names = names;
      out.strains.push_back(std::move(s));
      rows.emplace_back();
    }
    StrainSeries& s = out.strains[it->second];
    if (!s.raw_times.empty() && !(t > s.raw_times.back()))
      throw DataError(where + ": time " + fields[1] + " for strain " + id +
                      " is not strictly increasing");
    s.raw_times.push_back(t);
    std::vector<double> values(names.size());
    for (std::size_t f = 0; f < names.size(); ++f)
      values[f] = parse_number(fields[column_of[f]], where + " column '" + names[f] + "'");
    rows[it->second].push_back(std::move(values));
  }
  if (out.strains.empty()) throw DataError(source + ": no data rows");

  for (std::size_t s = 0; s < out.strains.size(); ++s) {
    Matrix m(rows[s].size(), names.size());
    for (std::size_t r = 0; r < rows[s].size(); ++r)
      std::copy(rows[s][r].begin(), rows[s][r].end(), m.row(r).begin());
    out.strains[s].values = std::move(m);
  }
  return out;
}

LoadResult load_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open data file: " + path.string());
  return parse_csv(in, schema, path.string());
}

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw DataError("monotone cubic needs at least two samples");
  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    if (!(h[i] > 0.0)) throw DataError("monotone cubic needs strictly increasing abscissae");
    delta[i] = (y_[i + 1] - y_[i]) / h[i];
  }
  slope_.assign(n, 0.0);
  if (n == 2) {
    slope_[0] = slope_[1] = delta[0];
    return;
  }
  // Interior: weighted harmonic mean of adjacent secants, zero at extrema.
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0.0) continue;
    const double w1 = 2.0 * h[i] + h[i - 1];
    const double w2 = h[i] + 2.0 * h[i - 1];
    slope_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
  }
  // Ends: one-sided three-point estimate, clipped to preserve shape.
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (d * d0 <= 0.0) return 0.0;
    if (d0 * d1 < 0.0 && std::abs(d) > std::abs(3.0 * d0)) return 3.0 * d0;
    return d;
  };
  slope_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  slope_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

double MonotoneCubic::operator()(double x) const {
  const std::size_t n = x_.size();
  std::size_t i;
  if (x <= x_.front()) {
    i = 0;
  } else if (x >= x_.back()) {
    i = n - 2;
  } else {
    i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
  }
  const double h = x_[i + 1] - x_[i];
  const double s = (x - x_[i]) / h;
  if (s == 0.0) return y_[i];
  if (s == 1.0) return y_[i + 1];
  const double s2 = s * s, s3 = s2 * s;
  const double h10 = s3 - 2.0 * s2 + s;
  const double h01 = -2.0 * s3 + 3.0 * s2;
  const double h11 = s3 - s2;
  // h00 = 1 - h01; this form keeps flat intervals exactly flat.
  return y_[i] + h01 * (y_[i + 1] - y_[i]) + h10 * h * slope_[i] + h11 * h * slope_[i + 1];
}

Matrix interpolate_to_grid(const StrainSeries& series, std::size_t n_points,
                           Interpolation method) {
  const std::size_t n = series.raw_times.size();
  if (n < 2) throw DataError("strain " + series.strain_id + " needs at least two time points");
  if (n_points < 2) throw ConfigError("interpolation grid needs at least two points");
  const double t0 = series.raw_times.front(), t1 = series.raw_times.back();
  std::vector<double> grid(n_points);
  for (std::size_t k = 0; k < n_points; ++k)
    grid[k] = t0 + (t1 - t0) * static_cast<double>(k) / static_cast<double>(n_points - 1);
  grid.back() = t1;

  Matrix out(n_points, series.values.cols());
  for (std::size_t f = 0; f < series.values.cols(); ++f) {
    const std::vector<double> y = series.values.column(f);
    if (method == Interpolation::monotone_cubic) {
      const MonotoneCubic interp(series.raw_times, y);
      for (std::size_t k = 0; k < n_points; ++k) out(k, f) = interp(grid[k]);
    } else {
      for (std::size_t k = 0; k < n_points; ++k) {
        const double t = grid[k];
        std::size_t i = static_cast<std::size_t>(
            std::upper_bound(series.raw_times.begin(), series.raw_times.end(), t) -
            series.raw_times.begin());
        i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
        const double s = (t - series.raw_times[i]) / (series.raw_times[i + 1] - series.raw_times[i]);
        out(k, f) = s == 1.0 ? y[i + 1] : y[i] + s * (y[i + 1] - y[i]);
      }
    }
  }
  return out;
}

Matrix NormStats::normalize(const Matrix& physical) const {
  Matrix out(physical.rows(), physical.cols());
  for (std::size_t r = 0; r < physical.rows(); ++r)
    for (std::size_t c = 0; c < physical.cols(); ++c)
      out(r, c) = (physical(r, c) - mean[c]) / std[c];
  return out;
}

Matrix NormStats::denormalize(const Matrix& normalized) const {
  Matrix out(normalized.rows(), normalized.cols());
  for (std::size_t r = 0; r < normalized.rows(); ++r)
    for (std::size_t c = 0; c < normalized.cols(); ++c)
      out(r, c) = normalized(r, c) * std[c] + mean[c];
  return out;
}

std::vector<double> NormStats::normalize_row(std::span<const double> physical) const {
  std::vector<double> out(physical.size());
  for (std::size_t c = 0; c < physical.size(); ++c) out[c] = (physical[c] - mean[c]) / std[c];
  return out;
}

loss::Denormalization NormStats::affine() const { return {std, mean}; }

NormStats compute_norm_stats(const std::vector<const Matrix*>& training) {
  if (training.empty()) throw ConfigError("normalization needs at least one training strain");
  const std::size_t dim = training.front()->cols();
  NormStats s;
  s.mean.assign(dim, 0.0);
  s.std.assign(dim, 1.0);
  s.zero_variance.assign(dim, false);
  for (std::size_t c = 0; c < dim; ++c) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const Matrix* m : training)
      for (std::size_t r = 0; r < m->rows(); ++r, ++count) sum += (*m)(r, c);
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (const Matrix* m : training)
      for (std::size_t r = 0; r < m->rows(); ++r) ss += ((*m)(r, c) - mean) * ((*m)(r, c) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(count));
    s.mean[c] = mean;
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      s.std[c] = sd;
    } else {
      s.zero_variance[c] = true;
    }
  }
  return s;
}

Split split(std::vector<std::string> strain_ids, const std::optional<std::string>& test_override) {
  std::sort(strain_ids.begin(), strain_ids.end());
  Split out;
  if (test_override) {
    if (std::find(strain_ids.begin(), strain_ids.end(), *test_override) == strain_ids.end())
      throw ConfigError("test strain '" + *test_override + "' is not in the dataset");
    if (strain_ids.size() < 2) throw ConfigError("need at least one training strain");
    out.test = *test_override;
  } else {
    if (strain_ids.size() != 3)
      throw ConfigError("expected exactly 3 strains (low, medium, high producer), found " +
                        std::to_string(strain_ids.size()) + "; pass an explicit test strain");
    out.test = strain_ids[1];
  }
  for (const auto& id : strain_ids)
    if (id != out.test) out.train.push_back(id);
  return out;
}

Dataset::Dataset(std::string pathway, std::vector<std::string> feature_names,
                 std::vector<std::size_t> state_indices, odeint::TimeGrid grid,
                 std::vector<std::pair<std::string, Matrix>> physical_strains, Split split)
    : pathway_(std::move(pathway)),
      feature_names_(std::move(feature_names)),
      state_indices_(std::move(state_indices)),
      grid_(std::move(grid)),
      split_(std::move(split)),
      test_reads_(std::make_shared<std::atomic<std::size_t>>(0)) {
  grid_.validate();
  for (auto& [id, m] : physical_strains) {
    if (m.rows() != grid_.size() || m.cols() != feature_names_.size())
      throw ShapeError("strain " + id + " matrix is " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", expected " + std::to_string(grid_.size()) +
                       "x" + std::to_string(feature_names_.size()));
    strains_.push_back({id, std::move(m), {}});
  }
  std::vector<const Matrix*> training;
  for (const auto& id : split_.train) training.push_back(&find(id).physical);
  find(split_.test);
  stats_ = compute_norm_stats(training);
  for (Strain& s : strains_) s.normalized = stats_.normalize(s.physical);
}

std::vector<std::string> Dataset::strain_ids() const {
  std::vector<std::string> ids;
  for (const Strain& s : strains_) ids.push_back(s.id);
  return ids;
}

const Dataset::Strain& Dataset::find(const std::string& id) const {
  for (const Strain& s : strains_)
    if (s.id == id) return s;
  throw ConfigError("unknown strain '" + id + "'");
}

const Matrix& Dataset::observed(const std::string& strain_id) const {
  if (strain_id == split_.test) test_reads_->fetch_add(1);
  return find(strain_id).normalized;
}

const Matrix& Dataset::physical(const std::string& strain_id) const {
  if (strain_id == split_.test) test_reads_->fetch_add(1);
  return find(strain_id).physical;
}

Dataset build_dataset(const LoadResult& loaded, const FeatureSchema& schema,
                      const BuildOptions& opts) {
  if (loaded.strains.empty()) throw DataError("no strains loaded");
  const double t0 = loaded.strains.front().raw_times.front();
  const double t1 = loaded.strains.front().raw_times.back();
  std::vector<std::string> ids;
  std::vector<std::pair<std::string, Matrix>> mats;
  for (const StrainSeries& s : loaded.strains) {
    if (s.raw_times.size() < 2)
      throw DataError("strain " + s.strain_id + " needs at least two time points");
    const double tol = 1e-9 * std::max(1.0, std::abs(t1));
    if (std::abs(s.raw_times.front() - t0) > tol || std::abs(s.raw_times.back() - t1) > tol)
      throw DataError("strain " + s.strain_id + " spans a different time range than " +
                      loaded.strains.front().strain_id);
    ids.push_back(s.strain_id);
    mats.emplace_back(s.strain_id, interpolate_to_grid(s, opts.n_points, opts.interpolation));
  }
  odeint::TimeGrid grid = odeint::TimeGrid::uniform(opts.n_points);
  grid.origin_hours = t0;
  grid.span_hours = t1 - t0;
  return Dataset(schema.pathway, schema.names(), schema.state_indices(), std::move(grid),
                 std::move(mats), split(ids, opts.test_strain));
}

void write_trajectory_csv(const std::filesystem::path& path, const std::vector<double>& times,
                          const std::vector<std::string>& feature_names, const Matrix& values) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "time";
  for (const auto& n : feature_names) out << ',' << csv_field(n);
  out << '\n';
  for (std::size_t r = 0; r < values.rows(); ++r) {
    out << format_double(times[r]);
    for (std::size_t c = 0; c < values.cols(); ++c) out << ',' << format_double(values(r, c));
    out << '\n';
  }
}

void write_processed(const Dataset& dataset, const std::filesystem::path& dir,
                     const std::string& source_checksum) {
  std::filesystem::create_directories(dir);
  nlohmann::json strains = nlohmann::json::array();
  for (const auto& id : dataset.strain_ids()) {
    const auto file = id + ".csv";
    std::ofstream out(dir / file);
    if (!out) throw IoError("cannot write " + (dir / file).string());
    out << "time_norm";
    for (const auto& n : dataset.feature_names()) out << ',' << csv_field(n);
    out << '\n';
    const Matrix& m = dataset.observed(id);
    for (std::size_t r = 0; r < m.rows(); ++r) {
      out << format_double(dataset.grid().t[r]);
      for (std::size_t c = 0; c < m.cols(); ++c) out << ',' << format_double(m(r, c));
      out << '\n';
    }
    strains.push_back({{"id", id}, {"file", file}});
  }
  const NormStats& s = dataset.norm_stats();
  nlohmann::json stats = nlohmann::json::object();
  for (std::size_t c = 0; c < dataset.dim(); ++c)
    stats[dataset.feature_names()[c]] = {
        {"mean", s.mean[c]}, {"std", s.std[c]}, {"zero_variance", static_cast<bool>(s.zero_variance[c])}};
  const nlohmann::json sidecar = {
      {"schema_version", 1},
      {"pathway", dataset.pathway()},
      {"feature_order", dataset.feature_names()},
      {"state_indices", dataset.state_indices()},
      {"grid", {{"points", dataset.grid().size()},
                {"origin_hours", dataset.grid().origin_hours},
                {"span_hours", dataset.grid().span_hours}}},
      {"split", {{"train", dataset.split().train}, {"test", dataset.split().test}}},
      {"norm_stats", stats},
      {"strains", strains},
      {"source_checksum", source_checksum},
  };
  std::ofstream out(dir / "dataset.json");
  if (!out) throw IoError("cannot write " + (dir / "dataset.json").string());
  out << sidecar.dump(2) << '\n';
}

std::string fixture_csv(const FeatureSchema& schema, std::uint64_t seed) {
  const auto names = schema.names();
  const std::size_t dim = names.size();
  NormalSampler rng(seed);
  std::vector<double> equilibrium(dim), rate(dim), spread(dim), sign(dim);
  for (std::size_t f = 0; f < dim; ++f) {
    equilibrium[f] = 0.5 + 1.5 * rng.uniform();
    rate[f] = 0.5 + 2.5 * rng.uniform();
    spread[f] = 0.5 + rng.uniform();
    sign[f] = rng.uniform() < 0.5 ? -1.0 : 1.0;
  }
  const std::string prefix = schema.pathway == "isopentenol" ? "I" : "L";
  const double level[3] = {0.3, 1.0, 1.7};  // low, medium, high producer

  std::ostringstream out;
  out << "strain,time_h";
  for (const auto& n : names) out << ',' << csv_field(n);
  out << '\n';
  constexpr std::size_t kSamples = 14;
  constexpr double kHours = 72.0;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < kSamples; ++k) {
      const double t = kHours * static_cast<double>(k) / static_cast<double>(kSamples - 1);
      out << prefix << (s + 1) << ',' << format_double(t);
      for (std::size_t f = 0; f < dim; ++f) {
        const double x0 = equilibrium[f] * std::exp(0.7 * sign[f] * level[s] * spread[f]);
        const double x = equilibrium[f] + (x0 - equilibrium[f]) * std::exp(-rate[f] * t / kHours);
        out << ',' << format_double(x);
      }
      out << '\n';
    }
  }
  return out.str();
}

void write_fixture(const std::filesystem::path& path, const FeatureSchema& schema,
                   std::uint64_t seed) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write fixture " + path.string());
  out << fixture_csv(schema, seed);
}

}  // namespace metanode::dataio
