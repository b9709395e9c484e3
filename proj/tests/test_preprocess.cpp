#include <doctest.h>

#include <random>

#include "sits/preprocess.hpp"

using namespace sits;

namespace {

PixelSample make_pixel(std::vector<int> days, std::vector<double> band0,
                       std::vector<std::uint8_t> valid) {
  PixelSample px;
  px.pixel_id = 1;
  px.plot_id = 1;
  px.days = std::move(days);
  px.values = std::move(band0);
  px.valid = std::move(valid);
  return px;
}

FeatureMatrix random_matrix(std::size_t rows, int bands, int steps, std::uint64_t seed) {
  FeatureMatrix m;
  m.n_bands = bands;
  m.n_steps = steps;
  m.values.resize(rows * m.n_cols());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.3, 0.8);
  for (auto& v : m.values) v = dist(rng);
  for (std::size_t i = 0; i < rows; ++i) {
    m.pixel_ids.push_back(static_cast<std::int64_t>(i));
    m.plot_ids.push_back(static_cast<std::int64_t>(i / 3));
    m.labels.push_back(static_cast<int>(i % 2));
  }
  return m;
}

}  // namespace

TEST_CASE("gapfill interpolates linearly between valid acquisitions") {
  TimeGrid grid{0, 10, 3, 1};
  auto px = make_pixel({0, 20}, {0.1, 0.3}, {1, 1});
  auto out = gapfill(px, grid);
  CHECK(out[0] == doctest::Approx(0.1));
  CHECK(out[1] == doctest::Approx(0.2));
  CHECK(out[2] == doctest::Approx(0.3));
}

TEST_CASE("gapfill is the identity when grid days hit valid acquisitions") {
  TimeGrid grid{0, 10, 4, 1};
  auto px = make_pixel({0, 10, 20, 30}, {0.1, 0.4, 0.2, 0.9}, {1, 1, 1, 1});
  auto out = gapfill(px, grid);
  for (int s = 0; s < 4; ++s) CHECK(out[static_cast<std::size_t>(s)] == doctest::Approx(px.values[static_cast<std::size_t>(s)]));
}

TEST_CASE("gapfill extrapolates the nearest valid value at the edges") {
  TimeGrid grid{0, 10, 4, 1};
  auto px = make_pixel({10, 20}, {0.5, 0.7}, {1, 1});
  auto out = gapfill(px, grid);
  CHECK(out[0] == doctest::Approx(0.5));  // before the first valid point
  CHECK(out[3] == doctest::Approx(0.7));  // after the last
}

TEST_CASE("gapfill ignores invalid acquisitions entirely") {
  TimeGrid grid{0, 10, 3, 1};
  // the invalid middle point would bend the line if it leaked in
  auto px = make_pixel({0, 10, 20}, {0.1, 9.9, 0.3}, {1, 0, 1});
  auto out = gapfill(px, grid);
  CHECK(out[1] == doctest::Approx(0.2));
}

TEST_CASE("gapfill errors when no acquisition is valid") {
  TimeGrid grid{0, 10, 3, 1};
  auto px = make_pixel({0, 10}, {0.1, 0.2}, {0, 0});
  CHECK_THROWS_WITH(gapfill(px, grid), doctest::Contains("pixel 1"));
}

TEST_CASE("gapfill recovers a piecewise-linear signal exactly at grid days") {
  TimeGrid grid{0, 5, 9, 2};
  // knots at valid acquisitions; the signal is linear between them
  std::vector<int> days = {0, 15, 25, 40};
  std::vector<double> knots0 = {0.0, 0.6, 0.2, 0.8};
  std::vector<double> knots1 = {1.0, 0.1, 0.5, 0.3};
  PixelSample px;
  px.pixel_id = 2;
  px.days = days;
  px.valid = {1, 1, 1, 1};
  px.values = knots0;
  px.values.insert(px.values.end(), knots1.begin(), knots1.end());

  auto piecewise = [&](const std::vector<double>& k, double day) {
    if (day <= days.front()) return k.front();
    if (day >= days.back()) return k.back();
    for (std::size_t i = 0; i + 1 < days.size(); ++i)
      if (day <= days[i + 1])
        return k[i] + (k[i + 1] - k[i]) * (day - days[i]) / (days[i + 1] - days[i]);
    return k.back();
  };

  auto out = gapfill(px, grid);
  for (int s = 0; s < grid.n_steps; ++s) {
    const double day = grid.day(s);
    CHECK(out[FeatureMatrix::flat_index(0, s, grid.n_steps)] ==
          doctest::Approx(piecewise(knots0, day)).epsilon(1e-12));
    CHECK(out[FeatureMatrix::flat_index(1, s, grid.n_steps)] ==
          doctest::Approx(piecewise(knots1, day)).epsilon(1e-12));
  }
}

TEST_CASE("gapfill is idempotent on a complete series") {
  TimeGrid grid{0, 10, 5, 1};
  auto px = make_pixel({0, 10, 20, 30, 40}, {0.1, 0.7, 0.3, 0.5, 0.2}, {1, 1, 1, 1, 1});
  auto once = gapfill(px, grid);
  PixelSample again = px;
  again.values = once;
  auto twice = gapfill(again, grid);
  CHECK(once == twice);
}

TEST_CASE("standardize_fit pools all dates of a band") {
  FeatureMatrix m;
  m.n_bands = 1;
  m.n_steps = 3;
  m.values = {1.0, 2.0, 3.0};
  m.pixel_ids = {1};
  m.plot_ids = {1};
  m.labels = {0};
  BandStats stats = standardize_fit(m);
  CHECK(stats.mean[0] == doctest::Approx(2.0));
  CHECK(stats.stddev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));
}

TEST_CASE("standardize statistics match a naive two-pass oracle") {
  FeatureMatrix m = random_matrix(17, 3, 7, 42);
  BandStats stats = standardize_fit(m);
  for (int b = 0; b < m.n_bands; ++b) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.n_rows(); ++i)
      for (int s = 0; s < m.n_steps; ++s) {
        sum += m.row(i)[FeatureMatrix::flat_index(b, s, m.n_steps)];
        ++n;
      }
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < m.n_rows(); ++i)
      for (int s = 0; s < m.n_steps; ++s) {
        const double d = m.row(i)[FeatureMatrix::flat_index(b, s, m.n_steps)] - mean;
        sq += d * d;
      }
    CHECK(stats.mean[static_cast<std::size_t>(b)] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(stats.stddev[static_cast<std::size_t>(b)] ==
          doctest::Approx(std::sqrt(sq / static_cast<double>(n))).epsilon(1e-12));
  }
}

TEST_CASE("fit then apply yields pooled mean 0 and std 1") {
  FeatureMatrix m = random_matrix(25, 4, 6, 7);
  BandStats stats = standardize_fit(m);
  standardize_apply(m, stats);
  BandStats after = standardize_fit(m);
  for (int b = 0; b < m.n_bands; ++b) {
    CHECK(std::abs(after.mean[static_cast<std::size_t>(b)]) < 1e-9);
    CHECK(std::abs(after.stddev[static_cast<std::size_t>(b)] - 1.0) < 1e-9);
  }
}

TEST_CASE("apply with identity stats is the identity") {
  FeatureMatrix m = random_matrix(5, 2, 4, 9);
  FeatureMatrix copy = m;
  BandStats identity;
  identity.mean = {0.0, 0.0};
  identity.stddev = {1.0, 1.0};
  standardize_apply(m, identity);
  CHECK(m.values == copy.values);
}

TEST_CASE("a constant input shift moves the output by shift/std") {
  FeatureMatrix m = random_matrix(11, 2, 5, 13);
  BandStats stats = standardize_fit(m);
  FeatureMatrix shifted = m;
  for (auto& v : shifted.values) v += 0.25;
  FeatureMatrix a = m, b = shifted;
  standardize_apply(a, stats);
  standardize_apply(b, stats);
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const int band = static_cast<int>((i % a.n_cols()) / static_cast<std::size_t>(a.n_steps));
    CHECK(b.values[i] - a.values[i] ==
          doctest::Approx(0.25 / stats.stddev[static_cast<std::size_t>(band)]).epsilon(1e-9));
  }
}

TEST_CASE("train-fold stats applied to a test fold do not re-center it") {
  FeatureMatrix train = random_matrix(30, 2, 5, 100);
  FeatureMatrix test = random_matrix(30, 2, 5, 200);
  BandStats stats = standardize_fit(train);
  standardize_apply(test, stats);
  BandStats test_stats = standardize_fit(test);
  // no leakage: the test mean is generally nonzero
  CHECK(std::abs(test_stats.mean[0]) > 0.0);
}

TEST_CASE("zero-variance band is an error") {
  FeatureMatrix m = random_matrix(4, 2, 3, 5);
  for (std::size_t i = 0; i < m.n_rows(); ++i)
    for (int s = 0; s < m.n_steps; ++s)
      m.row(i)[FeatureMatrix::flat_index(1, s, m.n_steps)] = 0.5;
  CHECK_THROWS_WITH(standardize_fit(m), doctest::Contains("band 1"));
}

TEST_CASE("band count mismatch is an error") {
  FeatureMatrix m = random_matrix(4, 2, 3, 5);
  BandStats stats;
  stats.mean = {0.0};
  stats.stddev = {1.0};
  CHECK_THROWS_WITH(standardize_apply(m, stats), doctest::Contains("band count"));
}

TEST_CASE("layout round trip preserves values and the index formula holds") {
  FeatureMatrix m = random_matrix(6, 3, 74, 11);
  FeatureMatrix ch = as_layout(m, Layout::kChannels);
  CHECK(ch.layout == Layout::kChannels);
  FeatureMatrix back = as_layout(ch, Layout::kFlat);
  CHECK(back.values == m.values);
  CHECK(back.layout == Layout::kFlat);

  CHECK(FeatureMatrix::flat_index(2, 5, 74) == 153);

  // the channel view of a row is exactly its band-major block
  const double* row = ch.row(2);
  for (int b = 0; b < 3; ++b)
    for (int s = 0; s < 74; ++s)
      CHECK(row[FeatureMatrix::flat_index(b, s, 74)] ==
            m.row(2)[FeatureMatrix::flat_index(b, s, 74)]);

  double sum_flat = 0.0, sum_ch = 0.0;
  for (std::size_t j = 0; j < m.n_cols(); ++j) {
    sum_flat += m.row(2)[j];
    sum_ch += ch.row(2)[j];
  }
  CHECK(sum_flat == doctest::Approx(sum_ch).epsilon(1e-15));
}
