#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "sits/imbalance.hpp"

using namespace sits;
using namespace sits::imbalance;

namespace {

FeatureMatrix matrix_2d(const std::vector<std::pair<double, double>>& points,
                        const std::vector<int>& labels) {
  FeatureMatrix m;
  m.n_bands = 2;
  m.n_steps = 1;
  for (std::size_t i = 0; i < points.size(); ++i) {
    m.values.push_back(points[i].first);
    m.values.push_back(points[i].second);
    m.pixel_ids.push_back(static_cast<std::int64_t>(i));
    m.plot_ids.push_back(static_cast<std::int64_t>(i));
    m.labels.push_back(labels[i]);
  }
  return m;
}

std::vector<std::size_t> class_counts(const FeatureMatrix& m, int k) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (int l : m.labels) counts[static_cast<std::size_t>(l)] += 1;
  return counts;
}

}  // namespace

TEST_CASE("class weights follow the balanced inverse-frequency formula") {
  std::vector<int> labels;
  for (int i = 0; i < 9; ++i) labels.push_back(0);
  labels.push_back(1);
  auto w = compute_class_weights(labels, 2);
  CHECK(w[0] == doctest::Approx(10.0 / 18.0).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(5.0).epsilon(1e-12));

  std::vector<int> balanced = {0, 1, 2, 0, 1, 2};
  for (double v : compute_class_weights(balanced, 3)) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("weighted counts add back to N on random count vectors") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<int> k_dist(2, 8);
    const int k = k_dist(rng);
    std::vector<int> labels;
    std::uniform_int_distribution<int> count(1, 40);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
      counts[static_cast<std::size_t>(c)] = static_cast<std::size_t>(count(rng));
      for (std::size_t i = 0; i < counts[static_cast<std::size_t>(c)]; ++i) labels.push_back(c);
    }
    auto w = compute_class_weights(labels, k);
    double total = 0.0;
    for (int c = 0; c < k; ++c)
      total += w[static_cast<std::size_t>(c)] * static_cast<double>(counts[static_cast<std::size_t>(c)]);
    CHECK(total == doctest::Approx(static_cast<double>(labels.size())).epsilon(1e-9));
  }
}

TEST_CASE("absent classes get weight zero and are flagged") {
  std::vector<int> labels = {0, 0, 2};
  std::vector<int> absent;
  auto w = compute_class_weights(labels, 3, &absent);
  CHECK(w[1] == 0.0);
  CHECK(absent == std::vector<int>{1});
}

TEST_CASE("smote balances every class to the majority count") {
  std::mt19937_64 rng(17);
  std::vector<std::pair<double, double>> pts;
  std::vector<int> labels;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    pts.push_back({n01(rng), n01(rng)});
    labels.push_back(0);
  }
  for (int i = 0; i < 10; ++i) {
    pts.push_back({5.0 + n01(rng), 5.0 + n01(rng)});
    labels.push_back(1);
  }
  FeatureMatrix m = matrix_2d(pts, labels);
  auto res = smote(m, 2, 5, 42);
  auto counts = class_counts(res.data, 2);
  CHECK(counts[0] == 100);
  CHECK(counts[1] == 100);

  // originals are preserved verbatim as a prefix
  for (std::size_t i = 0; i < m.n_rows(); ++i) {
    CHECK(res.data.pixel_ids[i] == m.pixel_ids[i]);
    CHECK(res.data.row(i)[0] == m.row(i)[0]);
    CHECK(res.data.row(i)[1] == m.row(i)[1]);
  }
  // synthetic rows carry the sentinel plot id
  for (std::size_t i = m.n_rows(); i < res.data.n_rows(); ++i)
    CHECK(res.data.plot_ids[i] == kSyntheticPlotId);
}

TEST_CASE("every smote point lies on a segment between two same-class originals") {
  std::mt19937_64 rng(19);
  std::vector<std::pair<double, double>> pts;
  std::vector<int> labels;
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 30; ++i) {
    pts.push_back({u(rng), u(rng)});
    labels.push_back(0);
  }
  for (int i = 0; i < 8; ++i) {
    pts.push_back({u(rng), u(rng)});
    labels.push_back(1);
  }
  FeatureMatrix m = matrix_2d(pts, labels);
  auto res = smote(m, 2, 3, 7);

  for (std::size_t s = m.n_rows(); s < res.data.n_rows(); ++s) {
    const double px = res.data.row(s)[0], py = res.data.row(s)[1];
    const int cls = res.data.labels[s];
    bool on_some_segment = false;
    for (std::size_t a = 0; a < m.n_rows() && !on_some_segment; ++a) {
      if (m.labels[a] != cls) continue;
      for (std::size_t b = 0; b < m.n_rows(); ++b) {
        if (b == a || m.labels[b] != cls) continue;
        const double ax = m.row(a)[0], ay = m.row(a)[1];
        const double bx = m.row(b)[0], by = m.row(b)[1];
        // colinearity residual (cross product) and bounding box
        const double cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
        const bool in_box = px >= std::min(ax, bx) - 1e-9 && px <= std::max(ax, bx) + 1e-9 &&
                            py >= std::min(ay, by) - 1e-9 && py <= std::max(ay, by) + 1e-9;
        if (std::abs(cross) < 1e-9 && in_box) {
          on_some_segment = true;
          break;
        }
      }
    }
    CHECK(on_some_segment);
  }
}

TEST_CASE("smote midpoint interpolation with u=0.5 stays on the midpoint") {
  // a two-point minority class leaves a single possible neighbour, so every
  // synthetic row is x_i + u * (x_nn - x_i) on the segment between the pair
  FeatureMatrix m = matrix_2d({{0.0, 0.0}, {1.0, 1.0}, {5.0, 5.0}, {6.0, 5.0}, {5.5, 4.0}},
                              {1, 1, 0, 0, 0});
  auto res = smote(m, 2, 5, 3);
  REQUIRE(res.data.n_rows() == 6);
  const double x = res.data.row(5)[0], y = res.data.row(5)[1];
  CHECK(x == doctest::Approx(y).epsilon(1e-12));  // on the diagonal segment
  CHECK(x >= 0.0);
  CHECK(x <= 1.0);
  CHECK(!res.warnings.empty());  // k was capped at 1
}

TEST_CASE("smote rejects singleton minority classes by name") {
  FeatureMatrix m = matrix_2d({{0, 0}, {1, 1}, {2, 2}, {9, 9}}, {0, 0, 0, 1});
  CHECK_THROWS_WITH(smote(m, 2, 5, 1), doctest::Contains("class 1"));
}

TEST_CASE("smote and adasyn are deterministic under the seed") {
  std::mt19937_64 rng(23);
  std::vector<std::pair<double, double>> pts;
  std::vector<int> labels;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    pts.push_back({u(rng), u(rng)});
    labels.push_back(i < 14 ? 0 : 1);
  }
  FeatureMatrix m = matrix_2d(pts, labels);
  CHECK(smote(m, 2, 3, 5).data.values == smote(m, 2, 3, 5).data.values);
  CHECK(adasyn(m, 2, 3, 5).data.values == adasyn(m, 2, 3, 5).data.values);
  CHECK(smote(m, 2, 3, 5).data.values != smote(m, 2, 3, 6).data.values);
}

TEST_CASE("adasyn allocation matches a brute-force knn oracle on a 20-point instance") {
  // majority class 0 (12 points), minority class 1 (2 points), helper class 2
  // (6 points). M1 sits in the helper cluster (low hardness), M2 in the
  // majority cluster (high hardness).
  std::vector<std::pair<double, double>> pts;
  std::vector<int> labels;
  // majority cluster around (10, 10)
  for (int i = 0; i < 12; ++i) {
    pts.push_back({10.0 + 0.1 * i, 10.0 - 0.07 * i});
    labels.push_back(0);
  }
  // helper cluster around the origin
  for (int i = 0; i < 6; ++i) {
    pts.push_back({0.2 * i, -0.15 * i});
    labels.push_back(2);
  }
  pts.push_back({0.05, 0.05});   // M1 near the helpers
  labels.push_back(1);
  pts.push_back({10.05, 9.95});  // M2 inside the majority cluster
  labels.push_back(1);

  FeatureMatrix m = matrix_2d(pts, labels);
  const int k = 5;
  auto res = adasyn(m, 3, k, 11);

  // brute-force oracle: full-set kNN, majority share, largest remainder
  auto knn_oracle = [&](std::size_t q) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < m.n_rows(); ++i) {
      if (i == q) continue;
      const double dx = m.row(i)[0] - m.row(q)[0];
      const double dy = m.row(i)[1] - m.row(q)[1];
      d.push_back({dx * dx + dy * dy, i});
    }
    std::sort(d.begin(), d.end());
    std::size_t majority = 0;
    for (int i = 0; i < k; ++i)
      if (m.labels[d[static_cast<std::size_t>(i)].second] == 0) ++majority;
    return static_cast<double>(majority) / static_cast<double>(k);
  };
  const double r1 = knn_oracle(18), r2 = knn_oracle(19);
  CHECK(r1 == doctest::Approx(0.0));
  CHECK(r2 == doctest::Approx(1.0));

  const AdasynAllocation* minority_alloc = nullptr;
  for (const auto& a : res.allocations)
    if (a.class_index == 1) minority_alloc = &a;
  REQUIRE(minority_alloc != nullptr);
  CHECK(minority_alloc->hardness[0] == doctest::Approx(r1));
  CHECK(minority_alloc->hardness[1] == doctest::Approx(r2));
  // deficit 10, shares {0, 1} -> M1 gets nothing, M2 everything
  CHECK(minority_alloc->per_member[0] == 0);
  CHECK(minority_alloc->per_member[1] == 10);

  auto counts = class_counts(res.data, 3);
  CHECK(counts[0] == 12);
  CHECK(counts[1] == 12);
  CHECK(counts[2] == 12);
}

TEST_CASE("adasyn proportional rounding matches the 0.2/0.8 example") {
  // hardness shares 0.2 and 0.8 with deficit 10 must allocate {2, 8}
  std::vector<std::pair<double, double>> pts;
  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) {  // majority ring far away
    pts.push_back({30.0 + 0.3 * i, 40.0});
    labels.push_back(0);
  }
  // helpers near M1 (4 of its 5 neighbours), one majority point pulled close
  pts.push_back({0.10, 0.0});
  labels.push_back(2);
  pts.push_back({-0.10, 0.0});
  labels.push_back(2);
  pts.push_back({0.0, 0.10});
  labels.push_back(2);
  pts.push_back({0.0, -0.10});
  labels.push_back(2);
  pts.push_back({0.2, 0.2});
  labels.push_back(0);  // the single majority neighbour of M1
  // M2 surrounded by 4 majority + 1 helper
  pts.push_back({60.0, 0.1});
  labels.push_back(0);
  pts.push_back({60.0, -0.1});
  labels.push_back(0);
  pts.push_back({60.1, 0.0});
  labels.push_back(0);
  pts.push_back({59.9, 0.0});
  labels.push_back(0);
  pts.push_back({60.0, 0.2});
  labels.push_back(2);
  // the minority pair
  pts.push_back({0.0, 0.0});
  labels.push_back(1);  // M1: hardness 1/5
  pts.push_back({60.0, 0.0});
  labels.push_back(1);  // M2: hardness 4/5

  FeatureMatrix m = matrix_2d(pts, labels);
  auto res = adasyn(m, 3, 5, 2);
  const AdasynAllocation* alloc = nullptr;
  for (const auto& a : res.allocations)
    if (a.class_index == 1) alloc = &a;
  REQUIRE(alloc != nullptr);
  const std::size_t majority_total = 17;  // class 0 count after listing
  const std::size_t deficit = majority_total - 2;
  CHECK(alloc->hardness[0] == doctest::Approx(0.2));
  CHECK(alloc->hardness[1] == doctest::Approx(0.8));
  CHECK(alloc->per_member[0] == deficit / 5);      // 0.2 share
  CHECK(alloc->per_member[1] == deficit * 4 / 5);  // 0.8 share
}

TEST_CASE("adasyn falls back to uniform allocation when no majority is near") {
  // minority far from everything: hardness all zero
  std::vector<std::pair<double, double>> pts = {{0, 0}, {0.1, 0}, {0.2, 0},
                                                {50, 50}, {50.1, 50}, {50.2, 50}, {50.3, 50}};
  std::vector<int> labels = {1, 1, 1, 0, 0, 0, 0};
  FeatureMatrix m = matrix_2d(pts, labels);
  auto res = adasyn(m, 2, 2, 3);
  bool warned = false;
  for (const auto& w : res.warnings) warned = warned || w.find("uniform") != std::string::npos;
  CHECK(warned);
  CHECK(class_counts(res.data, 2)[1] == 4);
}

TEST_CASE("undersampling keeps exactly the target number of majority plots") {
  // plot-level rows: 3219 single-pixel majority plots, Robinia-scale minority
  FeatureMatrix m;
  m.n_bands = 1;
  m.n_steps = 1;
  std::int64_t next = 0;
  for (int i = 0; i < 3219; ++i) {
    m.values.push_back(0.5);
    m.pixel_ids.push_back(next);
    m.plot_ids.push_back(next++);
    m.labels.push_back(0);
  }
  for (int i = 0; i < 20; ++i) {
    m.values.push_back(0.7);
    m.pixel_ids.push_back(next);
    m.plot_ids.push_back(next++);
    m.labels.push_back(1);
  }
  FeatureMatrix reduced = undersample_majority(m, 2, 400, 9);
  auto counts = class_counts(reduced, 2);
  CHECK(counts[0] == 400);
  CHECK(counts[1] == 20);  // minority untouched

  // identity when the target equals the current count
  FeatureMatrix same = undersample_majority(m, 2, 3219, 9);
  CHECK(class_counts(same, 2)[0] == 3219);

  CHECK_THROWS_WITH(undersample_majority(m, 2, 5000, 9), doctest::Contains("exceeds"));
}

TEST_CASE("undersampling never splits a plot") {
  FeatureMatrix m;
  m.n_bands = 1;
  m.n_steps = 1;
  std::int64_t px = 0;
  for (int plot = 0; plot < 10; ++plot) {
    for (int i = 0; i < 4; ++i) {
      m.values.push_back(0.1 * plot);
      m.pixel_ids.push_back(px++);
      m.plot_ids.push_back(plot);
      m.labels.push_back(0);
    }
  }
  m.values.push_back(0.9);
  m.pixel_ids.push_back(px++);
  m.plot_ids.push_back(100);
  m.labels.push_back(1);

  FeatureMatrix reduced = undersample_majority(m, 2, 4, 1);
  std::map<std::int64_t, int> sizes;
  for (std::size_t i = 0; i < reduced.n_rows(); ++i)
    if (reduced.labels[i] == 0) sizes[reduced.plot_ids[i]] += 1;
  CHECK(sizes.size() == 4);
  for (const auto& [plot, n] : sizes) CHECK(n == 4);
}
