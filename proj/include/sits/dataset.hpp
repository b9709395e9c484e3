#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sits/common.hpp"

namespace sits {

/// Regular temporal grid the irregular acquisitions are resampled onto.
struct TimeGrid {
  int start_day = 0;
  int step_days = 10;
  int n_steps = 74;
  int n_bands = 10;

  int day(int step) const { return start_day + step * step_days; }
  int end_day() const { return day(n_steps - 1); }
  std::size_t feature_count() const {
    return static_cast<std::size_t>(n_bands) * static_cast<std::size_t>(n_steps);
  }
  void validate() const;
  bool operator==(const TimeGrid&) const = default;
};

/// One labeled pixel: a multi-band irregular time series with a shared
/// per-acquisition validity flag (clouds mask all bands of a date at once).
struct PixelSample {
  std::int64_t pixel_id = 0;
  std::int64_t plot_id = 0;
  int label = 0;
  std::vector<int> days;               // strictly increasing
  std::vector<double> values;          // band-major: values[b * days.size() + t]
  std::vector<std::uint8_t> valid;     // one flag per acquisition

  std::size_t n_acquisitions() const { return days.size(); }
  double value(int band, std::size_t acq) const {
    return values[static_cast<std::size_t>(band) * days.size() + acq];
  }
  bool operator==(const PixelSample&) const = default;
};

/// A pure stand: every member pixel carries the plot's label.
struct Plot {
  std::int64_t plot_id = 0;
  int label = 0;
  std::vector<std::int64_t> pixel_ids;
  bool operator==(const Plot&) const = default;
};

struct SitsDataset {
  TimeGrid grid;
  std::vector<std::string> class_names;
  std::vector<PixelSample> pixels;
  std::vector<Plot> plots;  // ordered by first appearance in pixel order

  void validate() const;
  bool operator==(const SitsDataset&) const = default;
};

/// Double-logistic seasonal profile of one synthetic species.
struct ClassPhenology {
  std::string name;
  std::vector<double> base;  // per band
  std::vector<double> amp;   // per band
  double greenup_day = 120;
  double senescence_day = 280;
  double greenup_slope = 0.12;
  double senescence_slope = 0.10;
};

struct SynthConfig {
  TimeGrid grid;
  std::vector<int> plots_per_class;
  std::vector<ClassPhenology> classes;
  int pixels_per_plot_min = 6;
  int pixels_per_plot_max = 20;
  int acq_step_days = 5;       // cadence of the raw (pre-gap-fill) acquisitions
  double noise_std = 0.02;     // per-value Gaussian noise
  double gap_prob = 0.1;       // chance an acquisition is cloud-masked
  double plot_jitter = 0.0;    // per-plot variation of base level / amplitude
  std::uint64_t seed = 0;

  void validate() const;
};

struct ClassSummary {
  std::string name;
  std::size_t n_plots = 0;
  std::size_t n_pixels = 0;
  double plot_share = 0.0;
  double pixel_share = 0.0;
};

struct DatasetSummary {
  std::vector<ClassSummary> per_class;
  std::size_t n_plots = 0;
  std::size_t n_pixels = 0;
  std::size_t plot_pixels_min = 0;
  std::size_t plot_pixels_max = 0;
  double plot_pixels_mean = 0.0;
  // values outside the nominal [0, 1] reflectance range are kept but counted
  std::size_t out_of_range_values = 0;
};

SitsDataset load_dataset(const std::string& path);
SitsDataset read_dataset(std::istream& in);
void write_dataset(const SitsDataset& ds, const std::string& path);
void write_dataset(const SitsDataset& ds, std::ostream& out);

SitsDataset generate_synthetic(const SynthConfig& cfg);
DatasetSummary dataset_summary(const SitsDataset& ds);
std::string summary_table(const DatasetSummary& s);

/// Ten-species imbalanced benchmark: one dominant broadleaf class (~73% of
/// plots), two near-flat conifer profiles, and several broadleaf species with
/// overlapping seasonal curves. `scale` multiplies the per-class plot counts.
SynthConfig benchmark_config(double scale = 0.25, std::uint64_t seed = 1);

}  // namespace sits
