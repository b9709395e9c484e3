#include <doctest.h>

#include <random>
#include <set>

#include "sits/evaluation.hpp"

using namespace sits;
using namespace sits::evaluation;

namespace {

std::vector<Plot> plots_of(int count_a, int count_b) {
  std::vector<Plot> plots;
  std::int64_t id = 0;
  for (int i = 0; i < count_a; ++i) plots.push_back({id++, 0, {0}});
  for (int i = 0; i < count_b; ++i) plots.push_back({id++, 1, {0}});
  return plots;
}

SitsDataset small_separable(int plots_per_class, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.grid = TimeGrid{0, 10, 8, 2};
  cfg.plots_per_class = {plots_per_class, plots_per_class};
  ClassPhenology lush;
  lush.name = "lush";
  lush.base = {0.10, 0.15};
  lush.amp = {0.40, 0.35};
  lush.greenup_day = 20;
  lush.senescence_day = 60;
  ClassPhenology sparse = lush;
  sparse.name = "sparse";
  sparse.amp = {0.05, 0.04};
  cfg.classes = {lush, sparse};
  cfg.pixels_per_plot_min = 2;
  cfg.pixels_per_plot_max = 4;
  cfg.acq_step_days = 5;
  cfg.noise_std = 0.0;
  cfg.gap_prob = 0.0;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

}  // namespace

TEST_CASE("stratified folds balance class counts when divisible") {
  auto plots = plots_of(10, 10);
  FoldAssignment fa = stratified_group_kfold(plots, 2, 1);
  int counts[2][2] = {{0, 0}, {0, 0}};
  for (const auto& p : plots) counts[fa.fold_of_plot.at(p.plot_id)][p.label] += 1;
  for (int f = 0; f < 2; ++f)
    for (int c = 0; c < 2; ++c) CHECK(counts[f][c] == 5);
}

TEST_CASE("a 20-plot class spreads 2 per fold at k=10") {
  auto plots = plots_of(20, 0);
  std::vector<Plot> only_a(plots.begin(), plots.begin() + 20);
  FoldAssignment fa = stratified_group_kfold(only_a, 10, 3);
  std::map<int, int> per_fold;
  for (const auto& p : only_a) per_fold[fa.fold_of_plot.at(p.plot_id)] += 1;
  CHECK(per_fold.size() == 10);
  for (const auto& [fold, n] : per_fold) CHECK(n == 2);
}

TEST_CASE("folds partition the plots exactly") {
  std::mt19937_64 rng(7);
  std::vector<Plot> plots;
  std::uniform_int_distribution<int> label(0, 3);
  for (std::int64_t i = 0; i < 57; ++i) plots.push_back({i * 3 + 1, label(rng), {0}});
  const int k = 5;
  FoldAssignment fa = stratified_group_kfold(plots, k, 11);

  // brute force: union of fold members equals the plot set, pairwise disjoint
  std::set<std::int64_t> seen;
  for (const auto& p : plots) {
    const int fold = fa.fold_of_plot.at(p.plot_id);
    CHECK(fold >= 0);
    CHECK(fold < k);
    CHECK(seen.insert(p.plot_id).second);
  }
  CHECK(seen.size() == plots.size());
  CHECK(fa.fold_of_plot.size() == plots.size());

  // per-class counts differ by at most one across folds
  std::map<int, std::map<int, int>> per_class_fold;
  for (const auto& p : plots) per_class_fold[p.label][fa.fold_of_plot.at(p.plot_id)] += 1;
  for (const auto& [cls, folds] : per_class_fold) {
    int lo = 1 << 30, hi = 0;
    for (int f = 0; f < k; ++f) {
      auto it = folds.find(f);
      const int n = it == folds.end() ? 0 : it->second;
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("fold assignment is deterministic and rejects k > plots") {
  auto plots = plots_of(4, 3);
  auto a = stratified_group_kfold(plots, 3, 9);
  auto b = stratified_group_kfold(plots, 3, 9);
  CHECK(a.fold_of_plot == b.fold_of_plot);
  CHECK_THROWS_WITH(stratified_group_kfold(plots, 8, 9), doctest::Contains("exceeds"));
  CHECK_THROWS(stratified_group_kfold(plots, 1, 9));
}

TEST_CASE("confusion matrix counts match a naive loop oracle") {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> cls(0, 9);
  std::vector<int> y_true, y_pred;
  for (int i = 0; i < 500; ++i) {
    y_true.push_back(cls(rng));
    y_pred.push_back(cls(rng));
  }
  ConfusionMatrix cm = confusion_matrix(y_true, y_pred, 10);
  for (int t = 0; t < 10; ++t) {
    for (int p = 0; p < 10; ++p) {
      std::size_t count = 0;
      for (std::size_t i = 0; i < y_true.size(); ++i)
        if (y_true[i] == t && y_pred[i] == p) ++count;
      CHECK(cm.at(t, p) == count);
    }
  }
  CHECK(cm.total() == 500);
}

TEST_CASE("perfect predictions give a diagonal matrix and unit metrics") {
  std::vector<int> y = {0, 1, 2, 1, 0, 2, 2};
  ConfusionMatrix cm = confusion_matrix(y, y, 3);
  for (int t = 0; t < 3; ++t)
    for (int p = 0; p < 3; ++p)
      if (t != p) CHECK(cm.at(t, p) == 0);
  MetricsReport m = metrics(cm);
  CHECK(m.f1_macro == doctest::Approx(1.0));
  CHECK(m.oa == doctest::Approx(1.0));
  CHECK(m.ba == doctest::Approx(1.0));
}

TEST_CASE("all-predicted-zero leaves a single nonzero column") {
  std::vector<int> y_true = {0, 1, 2, 1};
  std::vector<int> y_pred = {0, 0, 0, 0};
  ConfusionMatrix cm = confusion_matrix(y_true, y_pred, 3);
  for (int t = 0; t < 3; ++t)
    for (int p = 1; p < 3; ++p) CHECK(cm.at(t, p) == 0);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(1, 0) == 2);
}

TEST_CASE("metrics match the hand-worked binary example") {
  // cm [[5,0],[5,0]]: class0 P=0.5 R=1 F1=2/3; class1 all zero
  ConfusionMatrix cm;
  cm.n_classes = 2;
  cm.counts = {5, 0, 5, 0};
  MetricsReport m = metrics(cm);
  CHECK(m.precision[0] == doctest::Approx(0.5));
  CHECK(m.recall[0] == doctest::Approx(1.0));
  CHECK(m.f1[0] == doctest::Approx(2.0 / 3.0));
  CHECK(m.precision[1] == doctest::Approx(0.0));
  CHECK(m.f1[1] == doctest::Approx(0.0));
  CHECK(m.f1_macro == doctest::Approx(1.0 / 3.0));
  CHECK(m.oa == doctest::Approx(0.5));
  CHECK(m.ba == doctest::Approx(0.5));
}

TEST_CASE("metrics agree with a brute-force counting oracle on random vectors") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> cls(0, 9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> y_true, y_pred;
    for (int i = 0; i < 1000; ++i) {
      y_true.push_back(cls(rng));
      y_pred.push_back(cls(rng));
    }
    MetricsReport m = metrics(confusion_matrix(y_true, y_pred, 10));

    double f1_sum = 0.0, recall_sum = 0.0;
    std::size_t correct = 0;
    int present = 0;
    for (int c = 0; c < 10; ++c) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] == c && y_pred[i] == c) ++tp;
        if (y_true[i] != c && y_pred[i] == c) ++fp;
        if (y_true[i] == c && y_pred[i] != c) ++fn;
      }
      correct += tp;
      const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
      const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
      const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
      CHECK(std::abs(m.precision[static_cast<std::size_t>(c)] - p) < 1e-12);
      CHECK(std::abs(m.recall[static_cast<std::size_t>(c)] - r) < 1e-12);
      CHECK(std::abs(m.f1[static_cast<std::size_t>(c)] - f1) < 1e-12);
      if (tp + fn > 0) {
        ++present;
        f1_sum += f1;
        recall_sum += r;
      }
    }
    CHECK(std::abs(m.f1_macro - f1_sum / present) < 1e-12);
    CHECK(std::abs(m.ba - recall_sum / present) < 1e-12);
    CHECK(std::abs(m.oa - static_cast<double>(correct) / 1000.0) < 1e-12);
  }
}

TEST_CASE("oa is the pixel-weighted mean of per-class recalls") {
  std::mt19937_64 rng(19);
  std::uniform_int_distribution<int> cls(0, 4);
  std::vector<int> y_true, y_pred;
  for (int i = 0; i < 400; ++i) {
    y_true.push_back(cls(rng));
    y_pred.push_back(cls(rng));
  }
  MetricsReport m = metrics(confusion_matrix(y_true, y_pred, 5));
  double weighted = 0.0;
  for (int c = 0; c < 5; ++c) {
    std::size_t n_c = 0;
    for (int t : y_true) n_c += t == c;
    weighted += m.recall[static_cast<std::size_t>(c)] * static_cast<double>(n_c) / 400.0;
  }
  CHECK(m.oa == doctest::Approx(weighted).epsilon(1e-12));
}

TEST_CASE("on a balanced test set oa equals ba") {
  std::mt19937_64 rng(23);
  std::vector<int> y_true, y_pred;
  std::uniform_int_distribution<int> cls(0, 3);
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 100; ++i) {
      y_true.push_back(c);
      y_pred.push_back(cls(rng));
    }
  MetricsReport m = metrics(confusion_matrix(y_true, y_pred, 4));
  CHECK(m.oa == doctest::Approx(m.ba).epsilon(1e-12));
}

TEST_CASE("row-normalized confusion rows sum to one or stay zero") {
  ConfusionMatrix cm;
  cm.n_classes = 3;
  cm.counts = {3, 1, 0, 0, 0, 0, 2, 2, 4};
  auto norm = cm.row_normalized();
  CHECK(norm[0] + norm[1] + norm[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(norm[3] + norm[4] + norm[5] == doctest::Approx(0.0));
  CHECK(norm[6] + norm[7] + norm[8] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("plot retrieval uses a strict threshold") {
  // one plot with 8 pixels and 5 correct, another with 8 pixels and 4 correct
  std::vector<std::int64_t> plot_ids;
  std::vector<int> y_true, y_pred;
  for (int i = 0; i < 8; ++i) {
    plot_ids.push_back(1);
    y_true.push_back(0);
    y_pred.push_back(i < 5 ? 0 : 1);
  }
  for (int i = 0; i < 8; ++i) {
    plot_ids.push_back(2);
    y_true.push_back(0);
    y_pred.push_back(i < 4 ? 0 : 1);
  }
  PlotRecall r = plot_level_recall(plot_ids, y_true, y_pred, 2, 0.5);
  // 5/8 > 0.5 retrieved; 4/8 is not strictly above the threshold
  CHECK(r.per_class[0] == doctest::Approx(0.5));

  std::vector<std::int64_t> p10(10, 7);
  std::vector<int> t10(10, 1);
  std::vector<int> q10(10, 0);
  q10[0] = q10[1] = q10[2] = 1;  // 3 of 10 correct
  CHECK(plot_level_recall(p10, t10, q10, 2, 0.2).per_class[1] == doctest::Approx(1.0));
  CHECK(plot_level_recall(p10, t10, q10, 2, 0.5).per_class[1] == doctest::Approx(0.0));
}

TEST_CASE("cross-validation never leaks a plot and tests each pixel once") {
  SitsDataset ds = small_separable(6, 21);
  FeatureMatrix gapfilled = gapfill_dataset(ds);
  const int k = 3;
  FoldAssignment fa = stratified_group_kfold(ds.plots, k, 5);

  std::map<std::int64_t, std::set<int>> plot_folds;
  std::size_t tested_total = 0;
  for (int f = 0; f < k; ++f) {
    std::set<std::int64_t> tested_pixels;
    for (std::size_t i = 0; i < gapfilled.n_rows(); ++i) {
      if (fa.fold_of_plot.at(gapfilled.plot_ids[i]) == f) {
        plot_folds[gapfilled.plot_ids[i]].insert(f);
        CHECK(tested_pixels.insert(gapfilled.pixel_ids[i]).second);
        ++tested_total;
      }
    }
  }
  CHECK(tested_total == gapfilled.n_rows());
  for (const auto& [plot, folds] : plot_folds) CHECK(folds.size() == 1);
}

TEST_CASE("run_cv on separable data reaches f1 above 0.99 and is deterministic") {
  SitsDataset ds = small_separable(8, 27);
  ClassifierConfig cc;
  cc.kind = ClassifierKind::kNeural;
  cc.model.variant = ModelVariant::kMlp;
  cc.model.mlp_widths = {16, 8};
  cc.train.learning_rate = 1e-2;
  cc.train.batch_size = 16;
  cc.train.max_epochs = 60;
  CvReport a = run_cv(ds, cc, 3, 77);
  CHECK(a.f1_mean >= 0.99);
  CvReport b = run_cv(ds, cc, 3, 77);
  CHECK(a.to_csv() == b.to_csv());

  // row-normalized mean confusion rows sum to ~1 for classes present everywhere
  double row0 = a.mean_confusion[0] + a.mean_confusion[1];
  CHECK(row0 == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("run_cv flags classes missing from a fold instead of failing") {
  SitsDataset ds = small_separable(1, 31);  // one plot per class, k=2
  ClassifierConfig cc;
  cc.kind = ClassifierKind::kForest;
  cc.forest.n_trees = 5;
  CvReport report = run_cv(ds, cc, 2, 9);
  bool flagged = false;
  for (const auto& w : report.warnings)
    flagged = flagged || w.find("absent from the test side") != std::string::npos;
  CHECK(flagged);
}

TEST_CASE("run_cv supports the forest classifier") {
  SitsDataset ds = small_separable(6, 33);
  ClassifierConfig cc;
  cc.kind = ClassifierKind::kForest;
  cc.forest.n_trees = 15;
  CvReport report = run_cv(ds, cc, 3, 13);
  CHECK(report.f1_mean >= 0.99);
}
