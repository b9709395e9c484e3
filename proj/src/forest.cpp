#include "sits/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace sits::forest {

void ForestConfig::validate(std::size_t n_features) const {
  require(n_trees >= 1, "n_trees must be >= 1");
  require(min_samples_split >= 2, "min_samples_split must be >= 2");
  require(features_per_split >= 0 &&
              static_cast<std::size_t>(features_per_split) <= n_features,
          "features_per_split must be in [0, n_features]");
  for (double w : class_weights) require(w >= 0.0, "class weights must be >= 0");
}

double gini(std::span<const double> weighted_counts) {
  double total = 0.0;
  for (double c : weighted_counts) total += c;
  if (total <= 0.0) return 0.0;
  double sumsq = 0.0;
  for (double c : weighted_counts) sumsq += c * c;
  return 1.0 - sumsq / (total * total);
}

int DecisionTree::predict(const double* row) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    i = row[n.feature] <= n.threshold ? n.left : n.right;
  }
  const auto& hist = nodes[static_cast<std::size_t>(i)].histogram;
  std::size_t best = 0;
  for (std::size_t k = 1; k < hist.size(); ++k)
    if (hist[k] > hist[best]) best = k;
  return static_cast<int>(best);
}

namespace {

constexpr double kMinGain = 1e-12;

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

struct Pending {
  std::vector<std::size_t> samples;
  int depth;
  int node_index;
};

// Partial Fisher-Yates draw without replacement, returned in ascending index
// order so equal-gain candidates resolve to the lower feature, then the
// lower threshold.
std::vector<std::size_t> sample_features(std::vector<std::size_t>& pool, std::size_t mtry,
                                         Rng& rng) {
  std::vector<std::size_t> out(mtry);
  for (std::size_t i = 0; i < mtry; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
    out[i] = pool[i];
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DecisionTree train_tree(const std::vector<const double*>& rows, std::span<const int> labels,
                        std::span<const std::size_t> sample_idx, std::size_t n_features,
                        int n_classes, std::span<const double> weights, const ForestConfig& cfg,
                        Rng& rng) {
  require(!sample_idx.empty(), "cannot train a tree on an empty sample set");
  const std::size_t mtry =
      cfg.features_per_split > 0
          ? static_cast<std::size_t>(cfg.features_per_split)
          : std::max<std::size_t>(
                1, static_cast<std::size_t>(std::sqrt(static_cast<double>(n_features))));

  DecisionTree tree;
  std::vector<Pending> stack;
  tree.nodes.emplace_back();
  stack.push_back({std::vector<std::size_t>(sample_idx.begin(), sample_idx.end()), 0, 0});

  std::vector<std::size_t> feature_pool(n_features);
  std::iota(feature_pool.begin(), feature_pool.end(), std::size_t{0});
  std::vector<double> hist(static_cast<std::size_t>(n_classes));
  std::vector<std::pair<double, int>> column;
  std::vector<double> left_counts(static_cast<std::size_t>(n_classes));

  while (!stack.empty()) {
    Pending p = std::move(stack.back());
    stack.pop_back();

    std::fill(hist.begin(), hist.end(), 0.0);
    for (std::size_t i : p.samples)
      hist[static_cast<std::size_t>(labels[i])] += weights[static_cast<std::size_t>(labels[i])];
    double total_w = 0.0, total_sumsq = 0.0;
    int present = 0;
    for (double c : hist) {
      total_w += c;
      total_sumsq += c * c;
      present += c > 0.0 ? 1 : 0;
    }
    const double parent_gini = 1.0 - total_sumsq / (total_w * total_w);

    auto make_leaf = [&]() {
      tree.nodes[static_cast<std::size_t>(p.node_index)].feature = -1;
      tree.nodes[static_cast<std::size_t>(p.node_index)].histogram = hist;
    };

    if (present <= 1 || p.samples.size() < static_cast<std::size_t>(cfg.min_samples_split) ||
        (cfg.max_depth >= 0 && p.depth >= cfg.max_depth)) {
      make_leaf();
      continue;
    }

    SplitChoice best;
    for (std::size_t f : sample_features(feature_pool, mtry, rng)) {
      column.clear();
      for (std::size_t i : p.samples) column.emplace_back(rows[i][f], labels[i]);
      std::sort(column.begin(), column.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      if (column.front().first == column.back().first) continue;

      std::fill(left_counts.begin(), left_counts.end(), 0.0);
      double left_w = 0.0, left_sumsq = 0.0, right_sumsq = total_sumsq;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        const auto cls = static_cast<std::size_t>(column[i].second);
        const double w = weights[cls];
        left_sumsq += w * (2.0 * left_counts[cls] + w);
        right_sumsq -= w * (2.0 * (hist[cls] - left_counts[cls]) - w);
        left_counts[cls] += w;
        left_w += w;
        if (column[i + 1].first <= column[i].first) continue;
        const double right_w = total_w - left_w;
        const double gini_left = 1.0 - left_sumsq / (left_w * left_w);
        const double gini_right = 1.0 - right_sumsq / (right_w * right_w);
        const double gain = parent_gini - (left_w * gini_left + right_w * gini_right) / total_w;
        if (gain > best.gain + kMinGain) {
          best.found = true;
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (column[i].first + column[i + 1].first);
          best.gain = gain;
        }
      }
    }

    if (!best.found) {
      make_leaf();
      continue;
    }

    std::vector<std::size_t> left_samples, right_samples;
    for (std::size_t i : p.samples) {
      if (rows[i][static_cast<std::size_t>(best.feature)] <= best.threshold)
        left_samples.push_back(i);
      else
        right_samples.push_back(i);
    }
    TreeNode& node = tree.nodes[static_cast<std::size_t>(p.node_index)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = static_cast<int>(tree.nodes.size());
    node.right = node.left + 1;
    const int left_index = node.left, right_index = node.right, depth = p.depth;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    stack.push_back({std::move(right_samples), depth + 1, right_index});
    stack.push_back({std::move(left_samples), depth + 1, left_index});
  }
  return tree;
}

RandomForest train_forest(const std::vector<const double*>& rows, std::span<const int> labels,
                          std::size_t n_features, int n_classes, const ForestConfig& cfg) {
  require(!rows.empty(), "cannot train a forest on an empty sample set");
  require(n_classes >= 1, "need at least one class");
  require(labels.size() == rows.size(), "label count does not match rows");
  cfg.validate(n_features);
  for (int l : labels) require(l >= 0 && l < n_classes, "label out of range");

  std::vector<double> weights = cfg.class_weights;
  if (weights.empty()) weights.assign(static_cast<std::size_t>(n_classes), 1.0);
  require(weights.size() == static_cast<std::size_t>(n_classes),
          "class weight count does not match classes");

  RandomForest forest;
  forest.config = cfg;
  forest.n_features = n_features;
  forest.n_classes = n_classes;
  forest.trees.resize(static_cast<std::size_t>(cfg.n_trees));

  parallel_for(static_cast<std::size_t>(cfg.n_trees), cfg.threads, [&](std::size_t t) {
    Rng rng(derive_seed(cfg.seed, 101, t));
    std::vector<std::size_t> sample_idx;
    sample_idx.reserve(rows.size());
    if (cfg.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
      for (std::size_t i = 0; i < rows.size(); ++i) sample_idx.push_back(pick(rng));
    } else {
      sample_idx.resize(rows.size());
      std::iota(sample_idx.begin(), sample_idx.end(), std::size_t{0});
    }
    forest.trees[t] =
        train_tree(rows, labels, sample_idx, n_features, n_classes, weights, cfg, rng);
  });
  return forest;
}

ForestPrediction predict_forest(const RandomForest& forest,
                                const std::vector<const double*>& rows) {
  ForestPrediction out;
  const auto k = static_cast<std::size_t>(forest.n_classes);
  out.labels.resize(rows.size());
  out.vote_shares.assign(rows.size() * k, 0.0);
  parallel_for(rows.size(), forest.config.threads, [&](std::size_t i) {
    double* shares = out.vote_shares.data() + i * k;
    for (const auto& tree : forest.trees)
      shares[static_cast<std::size_t>(tree.predict(rows[i]))] += 1.0;
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (shares[c] > shares[best]) best = c;
    out.labels[i] = static_cast<int>(best);
    for (std::size_t c = 0; c < k; ++c) shares[c] /= static_cast<double>(forest.trees.size());
  });
  return out;
}

namespace {
std::vector<const double*> matrix_rows(const FeatureMatrix& m) {
  std::vector<const double*> rows(m.n_rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = m.row(i);
  return rows;
}
}  // namespace

RandomForest train_forest(const FeatureMatrix& m, int n_classes, const ForestConfig& cfg) {
  return train_forest(matrix_rows(m), m.labels, m.n_cols(), n_classes, cfg);
}

ForestPrediction predict_forest(const RandomForest& forest, const FeatureMatrix& m) {
  require(m.n_cols() == forest.n_features, "feature count does not match the forest");
  return predict_forest(forest, matrix_rows(m));
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kMagic = "sits-forest v1";
}

void save_forest(const std::string& path, const RandomForest& forest, const TimeGrid& grid,
                 const BandStats& stats, const std::vector<std::string>& class_names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << kMagic << '\n';
  out << "n_trees=" << forest.trees.size() << '\n';
  out << "n_features=" << forest.n_features << '\n';
  out << "n_classes=" << forest.n_classes << '\n';
  out << "grid_start=" << grid.start_day << '\n';
  out << "grid_step=" << grid.step_days << '\n';
  out << "n_steps=" << grid.n_steps << '\n';
  out << "n_bands=" << grid.n_bands << '\n';
  out << "classes=";
  for (std::size_t i = 0; i < class_names.size(); ++i) out << (i ? "," : "") << class_names[i];
  out << '\n';
  out << "band_mean=";
  for (std::size_t i = 0; i < stats.mean.size(); ++i)
    out << (i ? "," : "") << format_double(stats.mean[i]);
  out << '\n';
  out << "band_std=";
  for (std::size_t i = 0; i < stats.stddev.size(); ++i)
    out << (i ? "," : "") << format_double(stats.stddev[i]);
  out << '\n';
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const auto& tree = forest.trees[t];
    out << "tree=" << t << " nodes=" << tree.nodes.size() << '\n';
    for (const auto& n : tree.nodes) {
      if (n.is_leaf()) {
        out << 'l';
        for (double h : n.histogram) out << ' ' << format_double(h);
        out << '\n';
      } else {
        out << "n " << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' '
            << n.right << '\n';
      }
    }
  }
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

bool is_forest_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::string line;
  std::getline(in, line);
  return line == kMagic;
}

LoadedForest load_forest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open forest checkpoint '" + path + "'");
  std::string line;
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) throw ParseError(path + ": truncated forest checkpoint");
    return line;
  };
  if (next() != kMagic) throw ParseError(path + ": not a forest checkpoint");

  LoadedForest lf;
  std::size_t n_trees = 0;
  auto split_kv = [&](const std::string& l) -> std::pair<std::string, std::string> {
    auto pos = l.find('=');
    if (pos == std::string::npos) throw ParseError(path + ": malformed line '" + l + "'");
    return {l.substr(0, pos), l.substr(pos + 1)};
  };
  auto to_int = [&](const std::string& s) {
    std::int64_t v = 0;
    if (!parse_int64(s, v)) throw ParseError(path + ": bad integer '" + s + "'");
    return v;
  };
  auto to_doubles = [&](const std::string& s) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= s.size()) {
      auto pos = s.find(',', start);
      std::string tok = s.substr(start, pos == std::string::npos ? pos : pos - start);
      double v = 0;
      if (!parse_double(tok, v)) throw ParseError(path + ": bad number '" + tok + "'");
      out.push_back(v);
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    return out;
  };

  for (int i = 0; i < 10; ++i) {
    auto [key, value] = split_kv(next());
    if (key == "n_trees") n_trees = static_cast<std::size_t>(to_int(value));
    else if (key == "n_features") lf.forest.n_features = static_cast<std::size_t>(to_int(value));
    else if (key == "n_classes") lf.forest.n_classes = static_cast<int>(to_int(value));
    else if (key == "grid_start") lf.grid.start_day = static_cast<int>(to_int(value));
    else if (key == "grid_step") lf.grid.step_days = static_cast<int>(to_int(value));
    else if (key == "n_steps") lf.grid.n_steps = static_cast<int>(to_int(value));
    else if (key == "n_bands") lf.grid.n_bands = static_cast<int>(to_int(value));
    else if (key == "classes") {
      std::size_t start = 0;
      while (start <= value.size()) {
        auto pos = value.find(',', start);
        lf.class_names.push_back(
            value.substr(start, pos == std::string::npos ? pos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
      }
    } else if (key == "band_mean") lf.stats.mean = to_doubles(value);
    else if (key == "band_std") lf.stats.stddev = to_doubles(value);
    else throw ParseError(path + ": unknown key '" + key + "'");
  }

  lf.forest.config.n_trees = static_cast<int>(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    auto [key, value] = split_kv(next());
    auto pos = value.find(" nodes=");
    if (key != "tree" || pos == std::string::npos)
      throw ParseError(path + ": expected tree header, got '" + line + "'");
    const auto n_nodes = static_cast<std::size_t>(to_int(value.substr(pos + 7)));
    DecisionTree tree;
    tree.nodes.resize(n_nodes);
    for (auto& node : tree.nodes) {
      auto& l = next();
      if (l.starts_with("n ")) {
        std::istringstream ss(l.substr(2));
        if (!(ss >> node.feature >> node.threshold >> node.left >> node.right))
          throw ParseError(path + ": malformed internal node '" + l + "'");
      } else if (l.starts_with("l")) {
        node.feature = -1;
        std::istringstream ss(l.substr(1));
        double h = 0;
        while (ss >> h) node.histogram.push_back(h);
        if (node.histogram.size() != static_cast<std::size_t>(lf.forest.n_classes))
          throw ParseError(path + ": leaf histogram size mismatch");
      } else {
        throw ParseError(path + ": malformed node line '" + l + "'");
      }
    }
    lf.forest.trees.push_back(std::move(tree));
  }
  return lf;
}

}  // namespace sits::forest
