#pragma once

#include <span>
#include <string>
#include <vector>

#include "sits/common.hpp"
#include "sits/preprocess.hpp"

namespace sits::forest {

struct ForestConfig {
  int n_trees = 100;
  int max_depth = -1;            // -1: fully grown
  int min_samples_split = 2;
  int features_per_split = 0;    // 0: floor(sqrt(F))
  std::vector<double> class_weights;  // empty: uniform
  std::uint64_t seed = 0;
  bool bootstrap = true;
  int threads = 1;

  void validate(std::size_t n_features) const;
};

/// Binary CART tree stored as a flat node table. Internal nodes route
/// x[feature] <= threshold to the left child; leaves hold the weighted class
/// vote histogram.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> histogram;  // weighted class counts, leaves only

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  int predict(const double* row) const;
  bool operator==(const DecisionTree&) const = default;
};

struct RandomForest {
  ForestConfig config;
  std::size_t n_features = 0;
  int n_classes = 0;
  std::vector<DecisionTree> trees;
};

/// Weighted Gini impurity 1 - sum_k p_k^2 over weighted class shares.
double gini(std::span<const double> weighted_counts);

/// Grows one CART tree on the given rows (duplicates encode bootstrap
/// multiplicity). `weights` maps class index -> weight.
DecisionTree train_tree(const std::vector<const double*>& rows, std::span<const int> labels,
                        std::span<const std::size_t> sample_idx, std::size_t n_features,
                        int n_classes, std::span<const double> weights, const ForestConfig& cfg,
                        Rng& rng);

RandomForest train_forest(const std::vector<const double*>& rows, std::span<const int> labels,
                          std::size_t n_features, int n_classes, const ForestConfig& cfg);

struct ForestPrediction {
  std::vector<int> labels;
  std::vector<double> vote_shares;  // n_rows x n_classes
};

ForestPrediction predict_forest(const RandomForest& forest,
                                const std::vector<const double*>& rows);

/// Convenience wrappers over a feature matrix.
RandomForest train_forest(const FeatureMatrix& m, int n_classes, const ForestConfig& cfg);
ForestPrediction predict_forest(const RandomForest& forest, const FeatureMatrix& m);

/// Checkpoint: text manifest (config, grid, band stats, class names)
/// followed by one node table per tree.
void save_forest(const std::string& path, const RandomForest& forest, const TimeGrid& grid,
                 const BandStats& stats, const std::vector<std::string>& class_names);

struct LoadedForest {
  RandomForest forest;
  TimeGrid grid;
  BandStats stats;
  std::vector<std::string> class_names;
};

LoadedForest load_forest(const std::string& path);
bool is_forest_checkpoint(const std::string& path);

}  // namespace sits::forest
