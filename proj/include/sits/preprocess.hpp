#pragma once

#include <span>
#include <string>
#include <vector>

#include "sits/dataset.hpp"

namespace sits {

enum class Layout { kFlat, kChannels };

/// Per-band mean/std pooled over all pixels and all grid dates of the band.
struct BandStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population convention (divide by N)
  bool operator==(const BandStats&) const = default;
};

/// Gap-filled, standardized per-pixel features. Flat and channel views share
/// the same memory (flat index = band * n_steps + step, which is exactly the
/// row-major [band][step] order); the tag records which shape the consumer
/// expects.
struct FeatureMatrix {
  Layout layout = Layout::kFlat;
  int n_bands = 0;
  int n_steps = 0;
  std::vector<double> values;  // n_rows x (n_bands * n_steps)
  std::vector<std::int64_t> pixel_ids;
  std::vector<std::int64_t> plot_ids;
  std::vector<int> labels;

  std::size_t n_cols() const {
    return static_cast<std::size_t>(n_bands) * static_cast<std::size_t>(n_steps);
  }
  std::size_t n_rows() const { return pixel_ids.size(); }
  const double* row(std::size_t i) const { return values.data() + i * n_cols(); }
  double* row(std::size_t i) { return values.data() + i * n_cols(); }

  static std::size_t flat_index(int band, int step, int n_steps) {
    return static_cast<std::size_t>(band) * static_cast<std::size_t>(n_steps) +
           static_cast<std::size_t>(step);
  }
};

/// Linear interpolation of the valid acquisitions onto the grid days, with
/// constant extrapolation of the nearest valid value beyond the ends.
/// Returns band-major values of length n_bands * n_steps.
std::vector<double> gapfill(const PixelSample& pixel, const TimeGrid& grid);

/// Gap-fills every pixel of the dataset into a flat-layout matrix.
FeatureMatrix gapfill_dataset(const SitsDataset& ds);

BandStats standardize_fit(const FeatureMatrix& m);
void standardize_apply(FeatureMatrix& m, const BandStats& stats);

FeatureMatrix as_layout(const FeatureMatrix& m, Layout target);

FeatureMatrix select_rows(const FeatureMatrix& m, std::span<const std::size_t> rows);

/// Persists/reads a preprocessed matrix in the columnar format with a
/// #preprocessed=true header (class names are needed to round-trip labels).
void write_features(const FeatureMatrix& m, const std::vector<std::string>& class_names,
                    const TimeGrid& grid, const std::string& path);
FeatureMatrix load_features(const std::string& path, std::vector<std::string>& class_names,
                            TimeGrid& grid);

}  // namespace sits
