#include "sits/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace sits::evaluation {

FoldAssignment stratified_group_kfold(const std::vector<Plot>& plots, int k,
                                      std::uint64_t seed) {
  require(k >= 2, "k must be >= 2");
  require(static_cast<std::size_t>(k) <= plots.size(),
          "k exceeds the number of plots (" + std::to_string(plots.size()) + ")");
  std::map<int, std::vector<std::int64_t>> by_class;
  for (const auto& p : plots) by_class[p.label].push_back(p.plot_id);

  FoldAssignment fa;
  fa.k = k;
  for (auto& [label, ids] : by_class) {
    Rng rng(derive_seed(seed, 31, static_cast<std::uint64_t>(label)));
    std::shuffle(ids.begin(), ids.end(), rng);
    // per-class starting offset so classes with fewer plots than k do not
    // all stack into the first folds
    const auto offset = static_cast<std::size_t>(label) % static_cast<std::size_t>(k);
    for (std::size_t j = 0; j < ids.size(); ++j)
      fa.fold_of_plot[ids[j]] = static_cast<int>((j + offset) % static_cast<std::size_t>(k));
  }
  return fa;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

std::vector<double> ConfusionMatrix::row_normalized() const {
  std::vector<double> out(counts.size(), 0.0);
  const auto k = static_cast<std::size_t>(n_classes);
  for (std::size_t r = 0; r < k; ++r) {
    std::size_t row_sum = 0;
    for (std::size_t c = 0; c < k; ++c) row_sum += counts[r * k + c];
    if (row_sum == 0) continue;
    for (std::size_t c = 0; c < k; ++c)
      out[r * k + c] = static_cast<double>(counts[r * k + c]) / static_cast<double>(row_sum);
  }
  return out;
}

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred,
                                 int n_classes) {
  require(y_true.size() == y_pred.size(), "prediction and truth lengths differ");
  ConfusionMatrix cm;
  cm.n_classes = n_classes;
  cm.counts.assign(static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    require(y_true[i] >= 0 && y_true[i] < n_classes, "true label out of range");
    require(y_pred[i] >= 0 && y_pred[i] < n_classes, "predicted label out of range");
    cm.at(y_true[i], y_pred[i]) += 1;
  }
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  require(cm.total() > 0, "empty confusion matrix");
  MetricsReport r;
  r.cm = cm;
  const int k = cm.n_classes;
  r.precision.assign(static_cast<std::size_t>(k), 0.0);
  r.recall.assign(static_cast<std::size_t>(k), 0.0);
  r.f1.assign(static_cast<std::size_t>(k), 0.0);
  r.class_present.assign(static_cast<std::size_t>(k), false);

  std::size_t trace = 0;
  int present = 0;
  double f1_sum = 0.0, recall_sum = 0.0;
  for (int j = 0; j < k; ++j) {
    std::size_t row = 0, col = 0;
    for (int c = 0; c < k; ++c) {
      row += cm.at(j, c);
      col += cm.at(c, j);
    }
    const std::size_t tp = cm.at(j, j);
    trace += tp;
    const double p = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    const double rec = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    const double f1 = p + rec > 0.0 ? 2.0 * p * rec / (p + rec) : 0.0;
    r.precision[static_cast<std::size_t>(j)] = p;
    r.recall[static_cast<std::size_t>(j)] = rec;
    r.f1[static_cast<std::size_t>(j)] = f1;
    if (row > 0) {
      r.class_present[static_cast<std::size_t>(j)] = true;
      ++present;
      f1_sum += f1;
      recall_sum += rec;
    }
  }
  r.oa = static_cast<double>(trace) / static_cast<double>(cm.total());
  r.f1_macro = present ? f1_sum / present : 0.0;
  r.ba = present ? recall_sum / present : 0.0;
  return r;
}

PlotRecall plot_level_recall(std::span<const std::int64_t> plot_ids,
                             std::span<const int> y_true, std::span<const int> y_pred,
                             int n_classes, double threshold) {
  require(plot_ids.size() == y_true.size() && y_true.size() == y_pred.size(),
          "plot/truth/prediction lengths differ");
  struct Tally {
    int label = 0;
    std::size_t total = 0, correct = 0;
  };
  std::unordered_map<std::int64_t, Tally> per_plot;
  for (std::size_t i = 0; i < plot_ids.size(); ++i) {
    auto& t = per_plot[plot_ids[i]];
    t.label = y_true[i];
    t.total += 1;
    if (y_true[i] == y_pred[i]) t.correct += 1;
  }
  PlotRecall out;
  out.threshold = threshold;
  out.per_class.assign(static_cast<std::size_t>(n_classes), 0.0);
  out.plots_per_class.assign(static_cast<std::size_t>(n_classes), 0);
  std::vector<std::size_t> retrieved(static_cast<std::size_t>(n_classes), 0);
  for (const auto& [id, t] : per_plot) {
    out.plots_per_class[static_cast<std::size_t>(t.label)] += 1;
    const double frac = static_cast<double>(t.correct) / static_cast<double>(t.total);
    if (frac > threshold) retrieved[static_cast<std::size_t>(t.label)] += 1;
  }
  int present = 0;
  double sum = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    const auto idx = static_cast<std::size_t>(c);
    if (out.plots_per_class[idx] == 0) continue;
    out.per_class[idx] =
        static_cast<double>(retrieved[idx]) / static_cast<double>(out.plots_per_class[idx]);
    sum += out.per_class[idx];
    ++present;
  }
  out.mean = present ? sum / present : 0.0;
  return out;
}

SplitOutcome evaluate_split(const FeatureMatrix& gapfilled,
                            std::span<const std::size_t> train_rows,
                            std::span<const std::size_t> test_rows, int n_classes,
                            const ClassifierConfig& cc, std::uint64_t seed) {
  SplitOutcome out;
  FeatureMatrix train = select_rows(gapfilled, train_rows);
  FeatureMatrix test = select_rows(gapfilled, test_rows);
  const BandStats stats = standardize_fit(train);
  standardize_apply(train, stats);
  standardize_apply(test, stats);

  if (cc.kind == ClassifierKind::kNeural) {
    const Layout want = cc.model.variant == ModelVariant::kMlp ? Layout::kFlat : Layout::kChannels;
    train = as_layout(train, want);
    test = as_layout(test, want);
    ModelConfig mc = cc.model;
    mc.n_classes = n_classes;
    mc.n_bands = gapfilled.n_bands;
    mc.n_steps = gapfilled.n_steps;
    ModelInstance model = ModelInstance::build(mc, derive_seed(seed, 41));
    training::TrainConfig tc = cc.train;
    tc.seed = derive_seed(seed, 42);
    auto report = training::train(model, train, tc, cc.imbalance);
    out.warnings = std::move(report.warnings);
    out.predicted = model.predict(test).labels;
  } else {
    imbalance::ResampleConfig imb = cc.imbalance;
    imb.seed = derive_seed(seed, 43);
    auto applied = imbalance::apply(train, n_classes, imb);
    out.warnings = std::move(applied.warnings);
    forest::ForestConfig fc = cc.forest;
    fc.seed = derive_seed(seed, 44);
    fc.threads = cc.threads;
    fc.class_weights = imb.method == imbalance::Method::kClassWeight ? applied.class_weights
                                                                     : std::vector<double>{};
    auto rf = forest::train_forest(applied.data, n_classes, fc);
    out.predicted = forest::predict_forest(rf, test).labels;
  }

  std::vector<int> truth(test.labels.begin(), test.labels.end());
  out.metrics = metrics(confusion_matrix(truth, out.predicted, n_classes));
  return out;
}

namespace {

struct MeanCi {
  double mean = 0.0, ci = 0.0;
};

MeanCi mean_ci(std::span<const double> values) {
  MeanCi out;
  const double n = static_cast<double>(values.size());
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= n;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double s = std::sqrt(ss / (n - 1.0));
  out.ci = 1.96 * s / std::sqrt(n);
  return out;
}

}  // namespace

CvReport run_cv(const SitsDataset& ds, const ClassifierConfig& cc, int k, std::uint64_t seed) {
  const int n_classes = static_cast<int>(ds.class_names.size());
  {
    std::vector<std::size_t> plots_per_class(static_cast<std::size_t>(n_classes), 0);
    for (const auto& p : ds.plots) plots_per_class[static_cast<std::size_t>(p.label)] += 1;
    for (int c = 0; c < n_classes; ++c)
      require(plots_per_class[static_cast<std::size_t>(c)] >= 1,
              "class " + ds.class_names[static_cast<std::size_t>(c)] + " has no plots");
  }
  FeatureMatrix gapfilled = gapfill_dataset(ds);
  FoldAssignment fa = stratified_group_kfold(ds.plots, k, derive_seed(seed, 51));

  CvReport report;
  report.k = k;
  report.folds.resize(static_cast<std::size_t>(k));
  std::vector<std::vector<std::string>> fold_warnings(static_cast<std::size_t>(k));

  parallel_for(static_cast<std::size_t>(k), cc.threads, [&](std::size_t f) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < gapfilled.n_rows(); ++i) {
      if (fa.fold_of_plot.at(gapfilled.plot_ids[i]) == static_cast<int>(f))
        test_rows.push_back(i);
      else
        train_rows.push_back(i);
    }
    auto outcome = evaluate_split(gapfilled, train_rows, test_rows, n_classes, cc,
                                  derive_seed(seed, 52, f));
    report.folds[f] = std::move(outcome.metrics);
    for (auto& w : outcome.warnings)
      fold_warnings[f].push_back("fold " + std::to_string(f) + ": " + std::move(w));
    for (int c = 0; c < n_classes; ++c)
      if (!report.folds[f].class_present[static_cast<std::size_t>(c)])
        fold_warnings[f].push_back("fold " + std::to_string(f) + ": class " +
                                   std::to_string(c) + " absent from the test side; skipped");
  });
  for (auto& w : fold_warnings)
    for (auto& line : w) report.warnings.push_back(std::move(line));

  std::vector<double> f1s, oas, bas;
  for (const auto& m : report.folds) {
    f1s.push_back(m.f1_macro);
    oas.push_back(m.oa);
    bas.push_back(m.ba);
  }
  auto f1 = mean_ci(f1s), oa = mean_ci(oas), ba = mean_ci(bas);
  report.f1_mean = f1.mean;
  report.f1_ci = f1.ci;
  report.oa_mean = oa.mean;
  report.oa_ci = oa.ci;
  report.ba_mean = ba.mean;
  report.ba_ci = ba.ci;

  const auto kk = static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(n_classes);
  report.mean_confusion.assign(kk, 0.0);
  for (const auto& m : report.folds) {
    auto norm = m.cm.row_normalized();
    for (std::size_t i = 0; i < kk; ++i) report.mean_confusion[i] += norm[i] / k;
  }
  return report;
}

std::string CvReport::to_csv() const {
  std::string out = "fold,f1_macro,oa,ba\n";
  for (std::size_t f = 0; f < folds.size(); ++f) {
    out += std::to_string(f);
    out += ',';
    out += format_double(folds[f].f1_macro);
    out += ',';
    out += format_double(folds[f].oa);
    out += ',';
    out += format_double(folds[f].ba);
    out += '\n';
  }
  out += "mean," + format_double(f1_mean) + ',' + format_double(oa_mean) + ',' +
         format_double(ba_mean) + '\n';
  out += "ci95," + format_double(f1_ci) + ',' + format_double(oa_ci) + ',' +
         format_double(ba_ci) + '\n';
  return out;
}

std::string CvReport::table(const std::vector<std::string>& class_names) const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d-fold cross-validation (mean +/- 95%% CI)\n", k);
  os << buf;
  std::snprintf(buf, sizeof(buf), "  F1-macro: %.3f (%.3f)\n  OA:       %.3f (%.3f)\n  BA:       %.3f (%.3f)\n",
                f1_mean, f1_ci, oa_mean, oa_ci, ba_mean, ba_ci);
  os << buf;
  if (!folds.empty() && !class_names.empty()) {
    os << "per-class F1 (last fold): ";
    const auto& last = folds.back();
    for (std::size_t c = 0; c < class_names.size(); ++c) {
      std::snprintf(buf, sizeof(buf), "%s%s=%.3f", c ? ", " : "", class_names[c].c_str(),
                    last.f1[c]);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace sits::evaluation
