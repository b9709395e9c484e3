#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "sits/forest.hpp"
#include "sits/training.hpp"

namespace sits::evaluation {

struct FoldAssignment {
  int k = 0;
  std::map<std::int64_t, int> fold_of_plot;
};

/// Plots are shuffled within each class and dealt round-robin to folds, so
/// per-class plot counts differ by at most one across folds and no plot's
/// pixels ever straddle the train/test divide.
FoldAssignment stratified_group_kfold(const std::vector<Plot>& plots, int k,
                                      std::uint64_t seed);

struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<std::size_t> counts;  // row = true class, column = predicted

  std::size_t& at(int t, int p) {
    return counts[static_cast<std::size_t>(t) * static_cast<std::size_t>(n_classes) +
                  static_cast<std::size_t>(p)];
  }
  std::size_t at(int t, int p) const {
    return counts[static_cast<std::size_t>(t) * static_cast<std::size_t>(n_classes) +
                  static_cast<std::size_t>(p)];
  }
  std::size_t total() const;
  /// Rows divided by their sums; all-zero rows stay zero.
  std::vector<double> row_normalized() const;
};

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred,
                                 int n_classes);

struct MetricsReport {
  ConfusionMatrix cm;
  std::vector<double> precision, recall, f1;
  std::vector<bool> class_present;  // row sum > 0
  double f1_macro = 0.0;
  double oa = 0.0;
  double ba = 0.0;
};

/// Per-class precision/recall/F1 plus F1-macro, overall accuracy and balanced
/// accuracy. Classes with no true samples contribute recall 0 and are
/// flagged; macro averages run over present classes only.
MetricsReport metrics(const ConfusionMatrix& cm);

struct PlotRecall {
  double threshold = 0.5;
  std::vector<double> per_class;      // retrieved / total plots
  std::vector<std::size_t> plots_per_class;
  double mean = 0.0;                  // over classes with at least one plot
};

/// A plot counts as retrieved when strictly more than `threshold` of its
/// pixels are classified correctly.
PlotRecall plot_level_recall(std::span<const std::int64_t> plot_ids,
                             std::span<const int> y_true, std::span<const int> y_pred,
                             int n_classes, double threshold);

enum class ClassifierKind { kNeural, kForest };

struct ClassifierConfig {
  ClassifierKind kind = ClassifierKind::kNeural;
  ModelConfig model;
  training::TrainConfig train;
  forest::ForestConfig forest;
  imbalance::ResampleConfig imbalance;
  int threads = 1;
};

struct CvReport {
  int k = 0;
  std::vector<MetricsReport> folds;
  double f1_mean = 0.0, f1_ci = 0.0;
  double oa_mean = 0.0, oa_ci = 0.0;
  double ba_mean = 0.0, ba_ci = 0.0;
  std::vector<double> mean_confusion;  // mean of per-fold row-normalized matrices
  std::vector<std::string> warnings;

  std::string to_csv() const;
  std::string table(const std::vector<std::string>& class_names) const;
};

/// Trains a classifier on the given training rows of a gap-filled matrix and
/// returns predictions for the test rows. Standardization statistics come
/// from the training rows only.
struct SplitOutcome {
  std::vector<int> predicted;  // aligned to test_rows
  MetricsReport metrics;
  std::vector<std::string> warnings;
};
SplitOutcome evaluate_split(const FeatureMatrix& gapfilled, std::span<const std::size_t> train_rows,
                            std::span<const std::size_t> test_rows, int n_classes,
                            const ClassifierConfig& cc, std::uint64_t seed);

/// Stratified plot-level k-fold cross-validation: per fold, fit preprocessing
/// on the train side, resample the train side only, train, evaluate the test
/// pixels; aggregate means with a 1.96 * s / sqrt(k) confidence half-width.
CvReport run_cv(const SitsDataset& ds, const ClassifierConfig& cc, int k, std::uint64_t seed);

}  // namespace sits::evaluation
