#include "sits/preprocess.hpp"

#include <cmath>
#include <fstream>

#include "sits/kernels.hpp"

namespace sits {

std::vector<double> gapfill(const PixelSample& pixel, const TimeGrid& grid) {
  const std::size_t n_acq = pixel.days.size();
  std::vector<std::size_t> valid_idx;
  valid_idx.reserve(n_acq);
  for (std::size_t t = 0; t < n_acq; ++t)
    if (pixel.valid[t]) valid_idx.push_back(t);
  if (valid_idx.empty())
    throw std::invalid_argument("pixel " + std::to_string(pixel.pixel_id) +
                                " has no valid acquisition to gap-fill");

  const std::size_t T = static_cast<std::size_t>(grid.n_steps);
  std::vector<double> out(static_cast<std::size_t>(grid.n_bands) * T);
  for (int b = 0; b < grid.n_bands; ++b) {
    const double* v = pixel.values.data() + static_cast<std::size_t>(b) * n_acq;
    double* o = out.data() + FeatureMatrix::flat_index(b, 0, grid.n_steps);
    std::size_t seg = 0;  // valid_idx[seg] is the first valid acquisition at or after g
    for (std::size_t s = 0; s < T; ++s) {
      const int g = grid.day(static_cast<int>(s));
      while (seg < valid_idx.size() && pixel.days[valid_idx[seg]] < g) ++seg;
      if (seg == 0) {
        o[s] = v[valid_idx.front()];  // before the first valid point
      } else if (seg == valid_idx.size()) {
        o[s] = v[valid_idx.back()];  // after the last valid point
      } else {
        const std::size_t i1 = valid_idx[seg];
        if (pixel.days[i1] == g) {
          o[s] = v[i1];
        } else {
          const std::size_t i0 = valid_idx[seg - 1];
          const double d0 = pixel.days[i0], d1 = pixel.days[i1];
          o[s] = v[i0] + (v[i1] - v[i0]) * (g - d0) / (d1 - d0);
        }
      }
    }
  }
  return out;
}

FeatureMatrix gapfill_dataset(const SitsDataset& ds) {
  FeatureMatrix m;
  m.layout = Layout::kFlat;
  m.n_bands = ds.grid.n_bands;
  m.n_steps = ds.grid.n_steps;
  m.values.resize(ds.pixels.size() * m.n_cols());
  m.pixel_ids.reserve(ds.pixels.size());
  m.plot_ids.reserve(ds.pixels.size());
  m.labels.reserve(ds.pixels.size());
  for (std::size_t i = 0; i < ds.pixels.size(); ++i) {
    const PixelSample& px = ds.pixels[i];
    std::vector<double> filled = gapfill(px, ds.grid);
    std::copy(filled.begin(), filled.end(), m.row(i));
    m.pixel_ids.push_back(px.pixel_id);
    m.plot_ids.push_back(px.plot_id);
    m.labels.push_back(px.label);
  }
  return m;
}

BandStats standardize_fit(const FeatureMatrix& m) {
  require(m.n_rows() > 0, "cannot fit statistics on an empty matrix");
  BandStats stats;
  stats.mean.resize(static_cast<std::size_t>(m.n_bands));
  stats.stddev.resize(static_cast<std::size_t>(m.n_bands));
  const std::size_t T = static_cast<std::size_t>(m.n_steps);
  const double n = static_cast<double>(m.n_rows() * T);
  for (int b = 0; b < m.n_bands; ++b) {
    double total = 0.0;
    for (std::size_t i = 0; i < m.n_rows(); ++i)
      total += kernels::sum(m.row(i) + FeatureMatrix::flat_index(b, 0, m.n_steps), T);
    const double mean = total / n;
    double sq = 0.0;
    for (std::size_t i = 0; i < m.n_rows(); ++i)
      sq += kernels::sumsqdiff(m.row(i) + FeatureMatrix::flat_index(b, 0, m.n_steps), mean, T);
    const double sd = std::sqrt(sq / n);
    if (!(sd > 0.0))
      throw std::invalid_argument("band " + std::to_string(b) + " has zero variance");
    stats.mean[static_cast<std::size_t>(b)] = mean;
    stats.stddev[static_cast<std::size_t>(b)] = sd;
  }
  return stats;
}

void standardize_apply(FeatureMatrix& m, const BandStats& stats) {
  require(stats.mean.size() == static_cast<std::size_t>(m.n_bands) &&
              stats.stddev.size() == static_cast<std::size_t>(m.n_bands),
          "band count mismatch between matrix and statistics");
  const std::size_t T = static_cast<std::size_t>(m.n_steps);
  for (std::size_t i = 0; i < m.n_rows(); ++i) {
    double* row = m.row(i);
    for (int b = 0; b < m.n_bands; ++b) {
      const double mean = stats.mean[static_cast<std::size_t>(b)];
      const double inv = 1.0 / stats.stddev[static_cast<std::size_t>(b)];
      double* p = row + FeatureMatrix::flat_index(b, 0, m.n_steps);
      for (std::size_t s = 0; s < T; ++s) p[s] = (p[s] - mean) * inv;
    }
  }
}

FeatureMatrix as_layout(const FeatureMatrix& m, Layout target) {
  // Both layouts are stored band-major, so the reindexing is the identity;
  // only the tag changes.
  FeatureMatrix out = m;
  out.layout = target;
  return out;
}

FeatureMatrix select_rows(const FeatureMatrix& m, std::span<const std::size_t> rows) {
  FeatureMatrix out;
  out.layout = m.layout;
  out.n_bands = m.n_bands;
  out.n_steps = m.n_steps;
  out.values.resize(rows.size() * m.n_cols());
  out.pixel_ids.reserve(rows.size());
  out.plot_ids.reserve(rows.size());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    std::copy(m.row(r), m.row(r) + m.n_cols(), out.row(i));
    out.pixel_ids.push_back(m.pixel_ids[r]);
    out.plot_ids.push_back(m.plot_ids[r]);
    out.labels.push_back(m.labels[r]);
  }
  return out;
}

void write_features(const FeatureMatrix& m, const std::vector<std::string>& class_names,
                    const TimeGrid& grid, const std::string& path) {
  require(!class_names.empty(), "dataset has no classes");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "#classes=";
  for (std::size_t i = 0; i < class_names.size(); ++i) out << (i ? "," : "") << class_names[i];
  out << "\n#bands=" << m.n_bands << "\n#days=";
  for (int s = 0; s < m.n_steps; ++s) out << (s ? "," : "") << grid.day(s);
  out << "\n#preprocessed=true\n";
  std::string row;
  for (std::size_t i = 0; i < m.n_rows(); ++i) {
    row.clear();
    row += std::to_string(m.pixel_ids[i]);
    row += ',';
    row += std::to_string(m.plot_ids[i]);
    row += ',';
    row += class_names[static_cast<std::size_t>(m.labels[i])];
    const double* v = m.row(i);
    for (std::size_t j = 0; j < m.n_cols(); ++j) {
      row += ',';
      row += format_double(v[j]);
    }
    for (int s = 0; s < m.n_steps; ++s) row += ",1";
    row += '\n';
    out << row;
  }
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

FeatureMatrix load_features(const std::string& path, std::vector<std::string>& class_names,
                            TimeGrid& grid) {
  // Standardized features can be negative, so bypass the reflectance range
  // check by reading the columnar structure directly here.
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open features file '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError(path + ": line " + std::to_string(lineno) + ": " + msg);
  };
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  };
  auto split = [](const std::string& s) {
    std::vector<std::string_view> out;
    std::string_view v = s;
    std::size_t start = 0;
    while (true) {
      auto pos = v.find(',', start);
      if (pos == std::string_view::npos) {
        out.push_back(v.substr(start));
        break;
      }
      out.push_back(v.substr(start, pos - start));
      start = pos + 1;
    }
    return out;
  };

  if (!next_line() || !line.starts_with("#classes=")) throw fail("malformed header, expected #classes=");
  class_names.clear();
  for (auto n : split(line.substr(9))) class_names.emplace_back(n);
  if (!next_line() || !line.starts_with("#bands=")) throw fail("malformed header, expected #bands=");
  std::int64_t bands = 0;
  if (!parse_int64(std::string_view(line).substr(7), bands) || bands < 1) throw fail("bad band count");
  if (!next_line() || !line.starts_with("#days=")) throw fail("malformed header, expected #days=");
  std::vector<int> days;
  for (auto tok : split(line.substr(6))) {
    std::int64_t d = 0;
    if (!parse_int64(tok, d)) throw fail("bad day value");
    if (!days.empty() && d <= days.back()) throw fail("non-monotone days");
    days.push_back(static_cast<int>(d));
  }
  if (days.size() < 2) throw fail("need at least two grid days");

  grid.n_bands = static_cast<int>(bands);
  grid.start_day = days.front();
  grid.step_days = days[1] - days[0];
  grid.n_steps = static_cast<int>(days.size());

  FeatureMatrix m;
  m.layout = Layout::kFlat;
  m.n_bands = grid.n_bands;
  m.n_steps = grid.n_steps;
  const std::size_t n_fields = 3 + m.n_cols() + days.size();
  while (next_line()) {
    if (line[0] == '#') continue;
    auto fields = split(line);
    if (fields.size() != n_fields)
      throw fail("expected " + std::to_string(n_fields) + " fields, got " +
                 std::to_string(fields.size()));
    std::int64_t pixel_id = 0, plot_id = 0;
    if (!parse_int64(fields[0], pixel_id)) throw fail("bad pixel_id");
    if (!parse_int64(fields[1], plot_id)) throw fail("bad plot_id");
    int label = -1;
    for (std::size_t c = 0; c < class_names.size(); ++c)
      if (fields[2] == class_names[c]) label = static_cast<int>(c);
    if (label < 0) throw fail("unknown class name '" + std::string(fields[2]) + "'");
    const std::size_t base = m.values.size();
    m.values.resize(base + m.n_cols());
    for (std::size_t j = 0; j < m.n_cols(); ++j) {
      double v = 0;
      if (!parse_double(fields[3 + j], v) || !std::isfinite(v)) throw fail("bad value");
      m.values[base + j] = v;
    }
    m.pixel_ids.push_back(pixel_id);
    m.plot_ids.push_back(plot_id);
    m.labels.push_back(label);
  }
  if (m.n_rows() == 0) throw fail("no pixels");
  return m;
}

}  // namespace sits
