#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "metanode/loss.hpp"
#include "metanode/matrix.hpp"
#include "metanode/odeint.hpp"

namespace metanode::dataio {

/// Ordered feature list of a pathway: controls (proteins) first, then states
/// (metabolites).
struct FeatureSchema {
  std::string pathway;
  std::vector<std::string> controls;
  std::vector<std::string> states;

  static FeatureSchema limonene();
  static FeatureSchema isopentenol();
  /// Known pathway by name; throws ConfigError otherwise.
  static FeatureSchema for_pathway(const std::string& pathway);

  std::vector<std::string> names() const;
  std::vector<std::size_t> state_indices() const;
  std::size_t dim() const { return controls.size() + states.size(); }
};

struct StrainSeries {
  std::string strain_id;
  std::string pathway;
  std::vector<double> raw_times;  // hours, strictly increasing
  std::vector<std::string> feature_names;
  Matrix values;  // raw_times.size() x features
};

struct LoadResult {
  std::vector<StrainSeries> strains;  // in order of first appearance
  std::vector<std::string> warnings;
  std::string checksum;  // FNV-1a 64 of the file bytes, hex
};

/// Reads `strain,time_h,<feature...>`. Throws SchemaError for a missing
/// required column, DataError for malformed numbers or non-increasing times.
/// Unknown columns are skipped and reported in `warnings`.
LoadResult load_csv(const std::filesystem::path& path, const FeatureSchema& schema);
LoadResult parse_csv(std::istream& in, const FeatureSchema& schema,
                     const std::string& source = "<stream>");

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch-Carlson
/// slopes with the Fritsch-Butland harmonic mean). Never overshoots the data
/// on any interval; reproduces linear data.
class MonotoneCubic {
 public:
  MonotoneCubic(std::vector<double> x, std::vector<double> y);
  double operator()(double x) const;

 private:
  std::vector<double> x_, y_, slope_;
};

enum class Interpolation { monotone_cubic, linear };

/// n_points x features matrix sampled on a uniform grid spanning the raw
/// sample times. Requires at least two raw samples.
Matrix interpolate_to_grid(const StrainSeries& series, std::size_t n_points = 200,
                           Interpolation method = Interpolation::monotone_cubic);

/// Per-feature z-score statistics. Zero-variance features keep std = 1 (they
/// are only centered) and are flagged.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<bool> zero_variance;

  Matrix normalize(const Matrix& physical) const;
  Matrix denormalize(const Matrix& normalized) const;
  std::vector<double> normalize_row(std::span<const double> physical) const;
  loss::Denormalization affine() const;
};

/// Population mean/std over all rows of the given matrices.
NormStats compute_norm_stats(const std::vector<const Matrix*>& training);

struct Split {
  std::vector<std::string> train;
  std::string test;
};

/// Held-out split. With three strains the medium producer (the middle id in
/// sorted order, e.g. L2 of L1..L3) is the test strain; an override names it
/// directly. Throws ConfigError for other strain counts without an override
/// or for an unknown override.
Split split(std::vector<std::string> strain_ids,
            const std::optional<std::string>& test_override = std::nullopt);

/// Interpolated, normalized per-strain matrices with split metadata.
/// Normalization statistics come from the training strains only. Reads of the
/// test strain through observed()/physical() are counted.
class Dataset {
 public:
  Dataset(std::string pathway, std::vector<std::string> feature_names,
          std::vector<std::size_t> state_indices, odeint::TimeGrid grid,
          std::vector<std::pair<std::string, Matrix>> physical_strains, Split split);

  const std::string& pathway() const { return pathway_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<std::size_t>& state_indices() const { return state_indices_; }
  const odeint::TimeGrid& grid() const { return grid_; }
  const NormStats& norm_stats() const { return stats_; }
  const Split& split() const { return split_; }
  std::vector<std::string> strain_ids() const;
  std::size_t dim() const { return feature_names_.size(); }

  const Matrix& observed(const std::string& strain_id) const;  // normalized
  const Matrix& physical(const std::string& strain_id) const;

  std::size_t test_access_count() const { return test_reads_->load(); }
  void reset_access_count() const { test_reads_->store(0); }

 private:
  struct Strain {
    std::string id;
    Matrix physical;
    Matrix normalized;
  };
  const Strain& find(const std::string& id) const;

  std::string pathway_;
  std::vector<std::string> feature_names_;
  std::vector<std::size_t> state_indices_;
  odeint::TimeGrid grid_;
  std::vector<Strain> strains_;
  Split split_;
  NormStats stats_;
  std::shared_ptr<std::atomic<std::size_t>> test_reads_;
};

struct BuildOptions {
  std::size_t n_points = 200;
  Interpolation interpolation = Interpolation::monotone_cubic;
  std::optional<std::string> test_strain;
};

/// Interpolates every strain onto the shared grid, splits, and normalizes.
Dataset build_dataset(const LoadResult& loaded, const FeatureSchema& schema,
                      const BuildOptions& opts = {});

/// Processed cache: one `<strain>.csv` per strain (`time_norm,<feature...>`,
/// normalized values) plus `dataset.json` with norm_stats, split, feature order
/// and the source checksum.
void write_processed(const Dataset& dataset, const std::filesystem::path& dir,
                     const std::string& source_checksum);

/// Synthetic stand-in for the supplementary dataset: three strains (low,
/// medium, high producer) x 14 samples over 72 h for every feature of the
/// schema, generated from independent first-order relaxations.
std::string fixture_csv(const FeatureSchema& schema, std::uint64_t seed);
void write_fixture(const std::filesystem::path& path, const FeatureSchema& schema,
                   std::uint64_t seed);

/// Writes `time,<feature...>` with one row per grid point.
void write_trajectory_csv(const std::filesystem::path& path, const std::vector<double>& times,
                          const std::vector<std::string>& feature_names, const Matrix& values);

std::string hex64(std::uint64_t v);

}  // namespace metanode::dataio
