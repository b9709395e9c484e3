#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sits/preprocess.hpp"

namespace sits::imbalance {

enum class Method { kNone, kClassWeight, kSmote, kAdasyn, kUndersample };

std::string to_string(Method m);
std::optional<Method> method_from_string(const std::string& s);

struct ResampleConfig {
  Method method = Method::kNone;
  int k_neighbors = 5;
  int undersample_plots = 400;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Balanced inverse-frequency weights w_k = N / (K * N_k); classes with zero
/// count get weight 0 and are reported back through `absent`.
std::vector<double> compute_class_weights(std::span<const int> labels, int n_classes,
                                          std::vector<int>* absent = nullptr);

/// Rows synthesized by SMOTE/ADASYN carry this plot id so plot-level logic
/// can exclude them.
inline constexpr std::int64_t kSyntheticPlotId = -1;

struct AdasynAllocation {
  int class_index = 0;
  std::vector<double> hardness;          // r_i per class member
  std::vector<std::size_t> per_member;   // synthetic budget per class member
};

struct ResampleResult {
  FeatureMatrix data;
  std::vector<std::string> warnings;
  std::vector<AdasynAllocation> allocations;  // ADASYN only
};

/// Oversamples every minority class up to the majority count. Synthetic rows
/// are interpolations x_i + u * (x_nn - x_i) between a uniformly chosen class
/// member and one of its k same-class nearest neighbors; originals are
/// preserved verbatim as a prefix. k is capped at class size - 1 (with a
/// warning); singleton classes are an error.
ResampleResult smote(const FeatureMatrix& m, int n_classes, int k, std::uint64_t seed);

/// SMOTE variant that allocates the synthetic budget per sample according to
/// hardness r_i = (majority-class neighbors among the k nearest in the full
/// training set) / k, with largest-remainder rounding to the exact deficit.
ResampleResult adasyn(const FeatureMatrix& m, int n_classes, int k, std::uint64_t seed);

/// Uniformly keeps `target_plots` of the majority class's plots (all their
/// pixels); other classes are untouched. Plot-level: never splits a plot.
FeatureMatrix undersample_majority(const FeatureMatrix& m, int n_classes, int target_plots,
                                   std::uint64_t seed);

/// Applies the configured strategy to a training slice. Returns the possibly
/// resampled matrix and the class weights the loss should use (uniform unless
/// method == kClassWeight).
struct AppliedResample {
  FeatureMatrix data;
  std::vector<double> class_weights;
  std::vector<std::string> warnings;
};
AppliedResample apply(const FeatureMatrix& train, int n_classes, const ResampleConfig& cfg);

}  // namespace sits::imbalance
