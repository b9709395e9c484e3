#include "sits/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace sits {

void TimeGrid::validate() const {
  require(step_days >= 1, "grid step_days must be >= 1");
  require(n_steps >= 2, "grid n_steps must be >= 2");
  require(n_bands >= 1, "grid n_bands must be >= 1");
}

void SitsDataset::validate() const {
  grid.validate();
  require(!class_names.empty(), "dataset has no classes");
  std::unordered_map<std::int64_t, int> plot_label;
  std::unordered_map<std::int64_t, std::size_t> plot_sizes;
  for (const auto& p : plots) {
    require(!p.pixel_ids.empty(), "plot " + std::to_string(p.plot_id) + " has no pixels");
    require(plot_label.emplace(p.plot_id, p.label).second,
            "duplicate plot_id " + std::to_string(p.plot_id));
    plot_sizes[p.plot_id] = p.pixel_ids.size();
  }
  std::unordered_set<std::int64_t> seen_pixels;
  std::unordered_map<std::int64_t, std::size_t> counted;
  for (const auto& px : pixels) {
    require(seen_pixels.insert(px.pixel_id).second,
            "duplicate pixel_id " + std::to_string(px.pixel_id));
    auto it = plot_label.find(px.plot_id);
    require(it != plot_label.end(),
            "pixel " + std::to_string(px.pixel_id) + " references unknown plot " +
                std::to_string(px.plot_id));
    require(it->second == px.label,
            "pixel " + std::to_string(px.pixel_id) + " label differs from its plot");
    require(px.label >= 0 && px.label < static_cast<int>(class_names.size()),
            "pixel " + std::to_string(px.pixel_id) + " has out-of-range class index");
    const std::size_t a = px.days.size();
    require(a >= 1, "pixel " + std::to_string(px.pixel_id) + " has no acquisitions");
    require(px.valid.size() == a && px.values.size() == a * static_cast<std::size_t>(grid.n_bands),
            "pixel " + std::to_string(px.pixel_id) + " has inconsistent acquisition arrays");
    for (std::size_t t = 1; t < a; ++t)
      require(px.days[t] > px.days[t - 1],
              "pixel " + std::to_string(px.pixel_id) + " days not strictly increasing");
    bool any_valid = false;
    for (auto v : px.valid) any_valid = any_valid || v != 0;
    require(any_valid, "pixel " + std::to_string(px.pixel_id) + " has no valid acquisition");
    for (double v : px.values)
      require(std::isfinite(v) && v >= -1.0 && v <= 2.0,
              "pixel " + std::to_string(px.pixel_id) + " has value outside [-1, 2]");
    counted[px.plot_id] += 1;
  }
  for (const auto& [id, n] : plot_sizes)
    require(counted[id] == n, "plot " + std::to_string(id) +
                                  " pixel_ids do not match dataset pixels");
}

void SynthConfig::validate() const {
  grid.validate();
  require(!plots_per_class.empty(), "plots_per_class is empty");
  require(classes.size() == plots_per_class.size(),
          "classes and plots_per_class sizes differ");
  for (int n : plots_per_class) require(n >= 1, "plots_per_class entries must be >= 1");
  for (const auto& c : classes) {
    require(!c.name.empty(), "class name is empty");
    require(c.base.size() == static_cast<std::size_t>(grid.n_bands) &&
                c.amp.size() == static_cast<std::size_t>(grid.n_bands),
            "phenology profile of class '" + c.name + "' does not match band count");
  }
  require(pixels_per_plot_min >= 1 && pixels_per_plot_max >= pixels_per_plot_min,
          "invalid pixels_per_plot range");
  require(acq_step_days >= 1, "acq_step_days must be >= 1");
  require(noise_std >= 0.0, "noise_std must be >= 0");
  require(gap_prob >= 0.0 && gap_prob < 1.0, "gap_prob must be in [0, 1)");
  require(plot_jitter >= 0.0, "plot_jitter must be >= 0");
}

// ---------------------------------------------------------------------------
// Columnar text format
//
//   #classes=<name,...>
//   #bands=<B>
//   #days=<d1,...,dT>
//   [#key=value ...]                      (extra headers, e.g. #preprocessed)
//   pixel_id,plot_id,class_name,v(1,1),...,v(B,T),m1,...,mT
//
// Values are band-major (all dates of band 1, then band 2, ...). Missing
// acquisitions carry value 0 with m=0.
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view header_value(std::string_view line, std::string_view key, std::size_t lineno) {
  if (!line.starts_with(key)) throw ParseError(lineno, "malformed header, expected " + std::string(key));
  return line.substr(key.size());
}

}  // namespace

SitsDataset read_dataset(std::istream& in) {
  SitsDataset ds;
  std::string line;
  std::size_t lineno = 0;

  auto next_line = [&](bool required) {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    if (required) throw ParseError(lineno + 1, "malformed header, unexpected end of file");
    return false;
  };

  next_line(true);
  for (auto name : split_csv(header_value(line, "#classes=", lineno))) {
    if (name.empty()) throw ParseError(lineno, "malformed header, empty class name");
    ds.class_names.emplace_back(name);
  }

  next_line(true);
  std::int64_t bands = 0;
  if (!parse_int64(header_value(line, "#bands=", lineno), bands) || bands < 1)
    throw ParseError(lineno, "malformed header, bad band count");

  next_line(true);
  std::vector<int> days;
  for (auto tok : split_csv(header_value(line, "#days=", lineno))) {
    std::int64_t d = 0;
    if (!parse_int64(tok, d)) throw ParseError(lineno, "malformed header, bad day value");
    if (!days.empty() && d <= days.back()) throw ParseError(lineno, "non-monotone days");
    days.push_back(static_cast<int>(d));
  }
  if (days.empty()) throw ParseError(lineno, "malformed header, empty day list");

  const std::size_t n_acq = days.size();
  const std::size_t n_fields = 3 + n_acq * static_cast<std::size_t>(bands) + n_acq;

  std::unordered_map<std::string_view, int> class_index;
  for (std::size_t i = 0; i < ds.class_names.size(); ++i)
    class_index[ds.class_names[i]] = static_cast<int>(i);

  std::unordered_set<std::int64_t> seen_pixels;
  std::unordered_map<std::int64_t, std::size_t> plot_slot;

  while (next_line(false)) {
    if (line[0] == '#') continue;  // auxiliary header (e.g. #preprocessed=true)
    auto fields = split_csv(line);
    if (fields.size() != n_fields)
      throw ParseError(lineno, "expected " + std::to_string(n_fields) + " fields, got " +
                                   std::to_string(fields.size()));
    PixelSample px;
    if (!parse_int64(fields[0], px.pixel_id)) throw ParseError(lineno, "bad pixel_id");
    if (!parse_int64(fields[1], px.plot_id)) throw ParseError(lineno, "bad plot_id");
    if (!seen_pixels.insert(px.pixel_id).second)
      throw ParseError(lineno, "duplicate pixel_id " + std::to_string(px.pixel_id));
    auto ci = class_index.find(fields[2]);
    if (ci == class_index.end())
      throw ParseError(lineno, "unknown class name '" + std::string(fields[2]) + "'");
    px.label = ci->second;
    px.days = days;
    px.values.resize(n_acq * static_cast<std::size_t>(bands));
    for (std::size_t i = 0; i < px.values.size(); ++i) {
      double v = 0;
      if (!parse_double(fields[3 + i], v)) throw ParseError(lineno, "bad value in column " + std::to_string(4 + i));
      if (!std::isfinite(v) || v < -1.0 || v > 2.0)
        throw ParseError(lineno, "value outside [-1, 2] in column " + std::to_string(4 + i));
      px.values[i] = v;
    }
    px.valid.resize(n_acq);
    bool any_valid = false;
    for (std::size_t t = 0; t < n_acq; ++t) {
      auto tok = fields[3 + px.values.size() + t];
      if (tok == "0")
        px.valid[t] = 0;
      else if (tok == "1")
        px.valid[t] = 1, any_valid = true;
      else
        throw ParseError(lineno, "validity flag must be 0 or 1");
    }
    if (!any_valid) throw ParseError(lineno, "pixel " + std::to_string(px.pixel_id) +
                                                 " has no valid acquisition");

    auto slot = plot_slot.find(px.plot_id);
    if (slot == plot_slot.end()) {
      plot_slot.emplace(px.plot_id, ds.plots.size());
      ds.plots.push_back(Plot{px.plot_id, px.label, {px.pixel_id}});
    } else {
      Plot& p = ds.plots[slot->second];
      if (p.label != px.label)
        throw ParseError(lineno, "pixel " + std::to_string(px.pixel_id) +
                                     " label differs from plot " + std::to_string(px.plot_id));
      p.pixel_ids.push_back(px.pixel_id);
    }
    ds.pixels.push_back(std::move(px));
  }
  if (ds.pixels.empty()) throw ParseError(lineno, "no pixels");

  // Target grid: 10-day steps spanning the raw acquisitions (callers can
  // override grid parameters afterwards).
  ds.grid.n_bands = static_cast<int>(bands);
  ds.grid.start_day = days.front();
  ds.grid.step_days = 10;
  ds.grid.n_steps = std::max(2, (days.back() - days.front()) / 10 + 1);
  return ds;
}

SitsDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file '" + path + "'");
  try {
    return read_dataset(in);
  } catch (ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_dataset(const SitsDataset& ds, std::ostream& out) {
  ds.validate();
  const std::vector<int>* days = nullptr;
  for (const auto& px : ds.pixels) {
    if (!days) days = &px.days;
    require(px.days == *days,
            "columnar format requires all pixels to share the same acquisition days");
  }
  require(days != nullptr, "dataset has no pixels");

  out << "#classes=";
  for (std::size_t i = 0; i < ds.class_names.size(); ++i)
    out << (i ? "," : "") << ds.class_names[i];
  out << "\n#bands=" << ds.grid.n_bands << "\n#days=";
  for (std::size_t i = 0; i < days->size(); ++i) out << (i ? "," : "") << (*days)[i];
  out << '\n';

  std::string row;
  for (const auto& px : ds.pixels) {
    row.clear();
    row += std::to_string(px.pixel_id);
    row += ',';
    row += std::to_string(px.plot_id);
    row += ',';
    row += ds.class_names[static_cast<std::size_t>(px.label)];
    for (double v : px.values) {
      row += ',';
      row += format_double(v);
    }
    for (auto m : px.valid) {
      row += ',';
      row += m ? '1' : '0';
    }
    row += '\n';
    out << row;
  }
}

void write_dataset(const SitsDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: keep byte output identical
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_dataset(ds, out);
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Synthetic phenology generator
// ---------------------------------------------------------------------------

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clamp_reflectance(double v) { return std::clamp(v, -1.0, 2.0); }

}  // namespace

SitsDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  SitsDataset ds;
  ds.grid = cfg.grid;
  for (const auto& c : cfg.classes) ds.class_names.push_back(c.name);

  std::vector<int> days;
  for (int d = cfg.grid.start_day; d <= cfg.grid.end_day(); d += cfg.acq_step_days)
    days.push_back(d);

  const int n_bands = cfg.grid.n_bands;
  const std::size_t n_acq = days.size();

  std::int64_t next_pixel = 0;
  std::int64_t next_plot = 0;
  for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
    const ClassPhenology& ph = cfg.classes[c];
    for (int p = 0; p < cfg.plots_per_class[c]; ++p) {
      Rng plot_rng(derive_seed(cfg.seed, 1, c, static_cast<std::uint64_t>(p)));
      std::normal_distribution<double> jitter(0.0, cfg.plot_jitter);
      const double base_shift = cfg.plot_jitter > 0 ? jitter(plot_rng) : 0.0;
      const double amp_mult = cfg.plot_jitter > 0 ? 1.0 + jitter(plot_rng) : 1.0;
      const double day_shift = cfg.plot_jitter > 0 ? 100.0 * jitter(plot_rng) : 0.0;
      std::uniform_int_distribution<int> size_dist(cfg.pixels_per_plot_min,
                                                   cfg.pixels_per_plot_max);
      const int n_px = size_dist(plot_rng);

      Plot plot;
      plot.plot_id = next_plot++;
      plot.label = static_cast<int>(c);

      for (int i = 0; i < n_px; ++i) {
        Rng px_rng(derive_seed(cfg.seed, 2, static_cast<std::uint64_t>(plot.plot_id),
                               static_cast<std::uint64_t>(i)));
        std::normal_distribution<double> noise(0.0, cfg.noise_std);
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        PixelSample px;
        px.pixel_id = next_pixel++;
        px.plot_id = plot.plot_id;
        px.label = plot.label;
        px.days = days;
        px.values.resize(n_acq * static_cast<std::size_t>(n_bands));
        px.valid.resize(n_acq);

        for (std::size_t t = 0; t < n_acq; ++t)
          px.valid[t] = unit(px_rng) >= cfg.gap_prob ? 1 : 0;
        bool any = false;
        for (auto v : px.valid) any = any || v;
        if (!any) px.valid[n_acq / 2] = 1;  // keep the >=1 valid invariant

        for (int b = 0; b < n_bands; ++b) {
          for (std::size_t t = 0; t < n_acq; ++t) {
            const double day = static_cast<double>(days[t]);
            const double season =
                logistic(ph.greenup_slope * (day - (ph.greenup_day + day_shift))) -
                logistic(ph.senescence_slope * (day - (ph.senescence_day + day_shift)));
            double v = ph.base[static_cast<std::size_t>(b)] + base_shift +
                       amp_mult * ph.amp[static_cast<std::size_t>(b)] * season;
            if (cfg.noise_std > 0) v += noise(px_rng);
            px.values[static_cast<std::size_t>(b) * n_acq + t] = clamp_reflectance(v);
          }
        }
        plot.pixel_ids.push_back(px.pixel_id);
        ds.pixels.push_back(std::move(px));
      }
      ds.plots.push_back(std::move(plot));
    }
  }
  return ds;
}

DatasetSummary dataset_summary(const SitsDataset& ds) {
  ds.validate();
  DatasetSummary s;
  s.per_class.resize(ds.class_names.size());
  for (std::size_t c = 0; c < ds.class_names.size(); ++c) s.per_class[c].name = ds.class_names[c];

  s.n_plots = ds.plots.size();
  s.n_pixels = ds.pixels.size();
  s.plot_pixels_min = ds.pixels.size();
  s.plot_pixels_max = 0;
  for (const auto& p : ds.plots) {
    s.per_class[static_cast<std::size_t>(p.label)].n_plots += 1;
    s.plot_pixels_min = std::min(s.plot_pixels_min, p.pixel_ids.size());
    s.plot_pixels_max = std::max(s.plot_pixels_max, p.pixel_ids.size());
  }
  s.plot_pixels_mean = s.n_plots ? static_cast<double>(s.n_pixels) / static_cast<double>(s.n_plots) : 0.0;
  for (const auto& px : ds.pixels) {
    s.per_class[static_cast<std::size_t>(px.label)].n_pixels += 1;
    const std::size_t a = px.days.size();
    for (std::size_t t = 0; t < a; ++t) {
      if (!px.valid[t]) continue;
      for (int b = 0; b < ds.grid.n_bands; ++b) {
        double v = px.value(b, t);
        if (v < 0.0 || v > 1.0) s.out_of_range_values += 1;
      }
    }
  }
  for (auto& c : s.per_class) {
    c.plot_share = s.n_plots ? static_cast<double>(c.n_plots) / static_cast<double>(s.n_plots) : 0.0;
    c.pixel_share = s.n_pixels ? static_cast<double>(c.n_pixels) / static_cast<double>(s.n_pixels) : 0.0;
  }
  return s;
}

std::string summary_table(const DatasetSummary& s) {
  std::ostringstream out;
  out << "class            plots   share    pixels  share\n";
  for (const auto& c : s.per_class) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-16s %6zu  %6.3f  %8zu  %6.3f\n", c.name.c_str(), c.n_plots,
                  c.plot_share, c.n_pixels, c.pixel_share);
    out << buf;
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "total: %zu plots, %zu pixels; plot size min/mean/max = %zu/%.1f/%zu; "
                "values outside [0,1]: %zu\n",
                s.n_plots, s.n_pixels, s.plot_pixels_min, s.plot_pixels_mean, s.plot_pixels_max,
                s.out_of_range_values);
  out << buf;
  return out.str();
}

// ---------------------------------------------------------------------------
// Default benchmark
// ---------------------------------------------------------------------------

SynthConfig benchmark_config(double scale, std::uint64_t seed) {
  require(scale > 0.0, "scale must be > 0");

  // Leaf-off broadleaf baseline and the seasonal lift added when the canopy
  // closes; indices mimic visible / red-edge / NIR / SWIR ordering.
  const std::vector<double> decid_base = {0.040, 0.060, 0.050, 0.090, 0.160,
                                          0.190, 0.220, 0.230, 0.180, 0.110};
  const std::vector<double> decid_amp = {0.005, 0.030, -0.015, 0.060, 0.130,
                                         0.160, 0.190, 0.195, 0.020, -0.030};
  const std::vector<double> pine_base = {0.030, 0.045, 0.038, 0.070, 0.110,
                                         0.130, 0.160, 0.165, 0.140, 0.085};
  const std::vector<double> douglas_base = {0.0255, 0.039, 0.0305, 0.0595, 0.092,
                                            0.112, 0.142, 0.147, 0.1145, 0.067};

  struct Species {
    const char* name;
    int plots;            // full-scale plot count
    const std::vector<double>* base;
    double base_off;
    double amp_scale;
    double sos, eos, k_up, k_down;
  };
  const Species table[] = {
      {"oak", 3219, &decid_base, 0.000, 1.00, 122, 288, 0.110, 0.090},
      {"pine", 486, &pine_base, 0.000, 0.06, 115, 295, 0.100, 0.090},
      {"beech", 254, &decid_base, 0.006, 0.90, 135, 277, 0.100, 0.095},
      {"douglas", 131, &douglas_base, 0.000, 0.05, 118, 292, 0.100, 0.090},
      {"poplar", 78, &decid_base, 0.012, 1.22, 104, 308, 0.130, 0.080},
      {"chestnut", 61, &decid_base, -0.010, 1.12, 133, 299, 0.105, 0.090},
      {"birch", 52, &decid_base, 0.010, 0.70, 108, 271, 0.140, 0.110},
      {"hornbeam", 48, &decid_base, -0.008, 0.80, 125, 285, 0.100, 0.090},
      {"ash", 39, &decid_base, -0.012, 0.52, 143, 277, 0.090, 0.100},
      {"robinia", 20, &decid_base, 0.004, 0.26, 150, 290, 0.095, 0.100},
  };

  SynthConfig cfg;
  cfg.grid = TimeGrid{};  // 10 bands x 74 ten-day steps
  cfg.seed = seed;
  cfg.noise_std = 0.025;
  cfg.gap_prob = 0.12;
  cfg.plot_jitter = 0.008;
  cfg.pixels_per_plot_min = 6;
  cfg.pixels_per_plot_max = 20;

  for (const Species& sp : table) {
    cfg.plots_per_class.push_back(
        std::max(1, static_cast<int>(std::lround(sp.plots * scale))));
    ClassPhenology ph;
    ph.name = sp.name;
    ph.base.resize(decid_base.size());
    ph.amp.resize(decid_amp.size());
    for (std::size_t b = 0; b < decid_base.size(); ++b) {
      ph.base[b] = (*sp.base)[b] + sp.base_off;
      ph.amp[b] = decid_amp[b] * sp.amp_scale;
    }
    ph.greenup_day = sp.sos;
    ph.senescence_day = sp.eos;
    ph.greenup_slope = sp.k_up;
    ph.senescence_slope = sp.k_down;
    cfg.classes.push_back(std::move(ph));
  }
  return cfg;
}

}  // namespace sits
