#include "sits/models.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace sits {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian");

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::kMlp: return "mlp";
    case ModelVariant::kTempCnn: return "tempcnn";
    case ModelVariant::kLtae: return "ltae";
  }
  return "?";
}

std::optional<ModelVariant> variant_from_string(const std::string& s) {
  if (s == "mlp") return ModelVariant::kMlp;
  if (s == "tempcnn") return ModelVariant::kTempCnn;
  if (s == "ltae") return ModelVariant::kLtae;
  return std::nullopt;
}

void ModelConfig::validate() const {
  require(n_classes >= 2, "need at least two classes");
  require(n_bands >= 1 && n_steps >= 1, "input grid dims must be set");
  switch (variant) {
    case ModelVariant::kMlp:
      require(!mlp_widths.empty(), "mlp needs at least one hidden layer");
      for (int w : mlp_widths) require(w >= 1, "mlp widths must be positive");
      break;
    case ModelVariant::kTempCnn:
      require(!cnn_filters.empty() && cnn_filters.size() == cnn_kernels.size(),
              "tempcnn needs matching filter and kernel lists");
      for (int f : cnn_filters) require(f >= 1, "filter counts must be positive");
      for (int k : cnn_kernels)
        require(k >= 1 && k <= n_steps, "kernel sizes must be in [1, n_steps]");
      break;
    case ModelVariant::kLtae:
      require(heads >= 1, "need at least one attention head");
      require(key_dim >= 1, "key dimension must be positive");
      require(embed_size >= heads, "embedding size must be >= heads");
      require(attn_mlp_width >= 1, "attention mlp width must be positive");
      break;
  }
}

ModelInstance ModelInstance::build(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelInstance m;
  m.cfg_ = cfg;
  Rng rng(seed);
  const std::size_t in_features =
      static_cast<std::size_t>(cfg.n_bands) * static_cast<std::size_t>(cfg.n_steps);
  const std::size_t k = static_cast<std::size_t>(cfg.n_classes);

  using namespace nn;
  auto add = [&](std::unique_ptr<Layer> l) { m.layers_.push_back(std::move(l)); };

  switch (cfg.variant) {
    case ModelVariant::kMlp: {
      std::size_t prev = in_features;
      for (int w : cfg.mlp_widths) {
        add(std::make_unique<Linear>(prev, static_cast<std::size_t>(w), rng));
        add(std::make_unique<BatchNorm>(static_cast<std::size_t>(w)));
        add(std::make_unique<ReLU>());
        prev = static_cast<std::size_t>(w);
      }
      add(std::make_unique<Linear>(prev, k, rng));
      break;
    }
    case ModelVariant::kTempCnn: {
      std::size_t prev = static_cast<std::size_t>(cfg.n_bands);
      for (std::size_t i = 0; i < cfg.cnn_filters.size(); ++i) {
        const auto f = static_cast<std::size_t>(cfg.cnn_filters[i]);
        add(std::make_unique<Conv1d>(prev, f, static_cast<std::size_t>(cfg.cnn_kernels[i]), rng));
        add(std::make_unique<BatchNorm>(f));
        add(std::make_unique<ReLU>());
        prev = f;
      }
      add(std::make_unique<GlobalMaxPool>());
      add(std::make_unique<Linear>(prev, k, rng));
      break;
    }
    case ModelVariant::kLtae: {
      // Round the embedding up to a multiple of the head count so the
      // per-head slices are equal (370 -> 372 with 6 heads).
      int e = cfg.embed_size;
      if (e % cfg.heads != 0) e += cfg.heads - e % cfg.heads;
      m.effective_embed_ = e;
      add(std::make_unique<TimestepEmbedding>(static_cast<std::size_t>(cfg.n_bands),
                                              static_cast<std::size_t>(e),
                                              cfg.positional_encoding, rng));
      add(std::make_unique<TemporalAttention>(static_cast<std::size_t>(e),
                                              static_cast<std::size_t>(cfg.heads),
                                              static_cast<std::size_t>(cfg.key_dim), rng));
      add(std::make_unique<Linear>(static_cast<std::size_t>(e),
                                   static_cast<std::size_t>(cfg.attn_mlp_width), rng));
      add(std::make_unique<BatchNorm>(static_cast<std::size_t>(cfg.attn_mlp_width)));
      add(std::make_unique<ReLU>());
      add(std::make_unique<Linear>(static_cast<std::size_t>(cfg.attn_mlp_width), k, rng));
      break;
    }
  }

  for (std::size_t i = 0; i < m.layers_.size(); ++i)
    m.layers_[i]->register_params("layer" + std::to_string(i), m.params_);
  return m;
}

nn::Tensor ModelInstance::forward(const nn::Tensor& batch, nn::Mode mode) {
  nn::Tensor x = batch;
  for (auto& layer : layers_) x = layer->forward(x, mode);
  return x;
}

nn::Tensor ModelInstance::backward(const nn::Tensor& dlogits) {
  nn::Tensor g = dlogits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

nn::Tensor ModelInstance::make_batch(const FeatureMatrix& m,
                                     std::span<const std::size_t> rows) const {
  require(m.n_bands == cfg_.n_bands && m.n_steps == cfg_.n_steps,
          "feature matrix dims do not match the model input grid");
  const Layout want = cfg_.variant == ModelVariant::kMlp ? Layout::kFlat : Layout::kChannels;
  if (m.layout != want)
    throw std::invalid_argument("layout mismatch: " + to_string(cfg_.variant) + " expects " +
                                (want == Layout::kFlat ? std::string("flat") : std::string("channels")) +
                                " features");
  nn::Tensor batch;
  const auto b = static_cast<std::size_t>(cfg_.n_bands);
  const auto t = static_cast<std::size_t>(cfg_.n_steps);
  if (want == Layout::kFlat)
    batch.reshape({rows.size(), b * t});
  else
    batch.reshape({rows.size(), b, t});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(m.row(rows[i]), m.row(rows[i]) + m.n_cols(), batch.data.begin() + static_cast<std::ptrdiff_t>(i * m.n_cols()));
  return batch;
}

Prediction ModelInstance::predict(const FeatureMatrix& m, std::size_t batch_size) {
  Prediction out;
  const std::size_t n = m.n_rows();
  const auto k = static_cast<std::size_t>(cfg_.n_classes);
  out.labels.resize(n);
  out.probabilities.resize(n * k);
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    rows.resize(stop - start);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start + i;
    nn::Tensor probs = nn::softmax(forward(make_batch(m, rows), nn::Mode::kEval));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double* p = probs.row2(i);
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (p[j] > p[best]) best = j;  // first max -> lower index on ties
      out.labels[start + i] = static_cast<int>(best);
      std::copy(p, p + k, out.probabilities.begin() + static_cast<std::ptrdiff_t>((start + i) * k));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kMagic = "sits-model v1";

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t pos = s.find(',', start);
    std::string tok = s.substr(start, pos == std::string::npos ? pos : pos - start);
    std::int64_t v = 0;
    if (!parse_int64(tok, v)) throw ParseError("bad integer list entry '" + tok + "'");
    out.push_back(static_cast<int>(v));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelInstance& model, const TimeGrid& grid,
                     const BandStats& stats, const std::vector<std::string>& class_names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  const ModelConfig& cfg = model.config();
  out << kMagic << '\n';
  out << "variant=" << to_string(cfg.variant) << '\n';
  out << "n_classes=" << cfg.n_classes << '\n';
  out << "n_bands=" << cfg.n_bands << '\n';
  out << "n_steps=" << cfg.n_steps << '\n';
  out << "grid_start=" << grid.start_day << '\n';
  out << "grid_step=" << grid.step_days << '\n';
  out << "mlp_widths=" << join_ints(cfg.mlp_widths) << '\n';
  out << "cnn_filters=" << join_ints(cfg.cnn_filters) << '\n';
  out << "cnn_kernels=" << join_ints(cfg.cnn_kernels) << '\n';
  out << "heads=" << cfg.heads << '\n';
  out << "key_dim=" << cfg.key_dim << '\n';
  out << "embed_size=" << cfg.embed_size << '\n';
  out << "attn_mlp_width=" << cfg.attn_mlp_width << '\n';
  out << "positional_encoding=" << (cfg.positional_encoding ? 1 : 0) << '\n';
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

  auto items = model.params().items();
  out << "tensors=" << items.size() << '\n';
  std::size_t total = 0;
  for (const auto& it : items) {
    out << it.name << ' ' << (it.learnable ? 1 : 0);
    for (std::size_t d = 0; d < it.tensor->rank(); ++d) out << ' ' << it.tensor->dim(d);
    out << '\n';
    total += it.tensor->numel();
  }
  out << "blob=" << total << '\n';
  for (const auto& it : items)
    out.write(reinterpret_cast<const char*>(it.tensor->data.data()),
              static_cast<std::streamsize>(it.tensor->data.size() * sizeof(double)));
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

bool is_model_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::string line;
  std::getline(in, line);
  return line == kMagic;
}

LoadedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
  std::string line;
  auto next = [&](const std::string& what) -> std::string& {
    if (!std::getline(in, line)) throw ParseError(path + ": truncated checkpoint (" + what + ")");
    return line;
  };
  if (next("magic") != kMagic) throw ParseError(path + ": not a model checkpoint");

  ModelConfig cfg;
  TimeGrid grid;
  BandStats stats;
  std::vector<std::string> class_names;
  std::size_t n_tensors = 0, blob = 0;

  auto split_kv = [&](const std::string& l) -> std::pair<std::string, std::string> {
    auto pos = l.find('=');
    if (pos == std::string::npos) throw ParseError(path + ": malformed checkpoint line '" + l + "'");
    return {l.substr(0, pos), l.substr(pos + 1)};
  };
  auto to_int = [&](const std::string& s) {
    std::int64_t v = 0;
    if (!parse_int64(s, v)) throw ParseError(path + ": bad integer '" + s + "'");
    return static_cast<int>(v);
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

  while (true) {
    auto [key, value] = split_kv(next("header"));
    if (key == "variant") {
      auto v = variant_from_string(value);
      if (!v) throw ParseError(path + ": unknown variant '" + value + "'");
      cfg.variant = *v;
    } else if (key == "n_classes") cfg.n_classes = to_int(value);
    else if (key == "n_bands") { cfg.n_bands = to_int(value); grid.n_bands = cfg.n_bands; }
    else if (key == "n_steps") { cfg.n_steps = to_int(value); grid.n_steps = cfg.n_steps; }
    else if (key == "grid_start") grid.start_day = to_int(value);
    else if (key == "grid_step") grid.step_days = to_int(value);
    else if (key == "mlp_widths") cfg.mlp_widths = parse_int_list(value);
    else if (key == "cnn_filters") cfg.cnn_filters = parse_int_list(value);
    else if (key == "cnn_kernels") cfg.cnn_kernels = parse_int_list(value);
    else if (key == "heads") cfg.heads = to_int(value);
    else if (key == "key_dim") cfg.key_dim = to_int(value);
    else if (key == "embed_size") cfg.embed_size = to_int(value);
    else if (key == "attn_mlp_width") cfg.attn_mlp_width = to_int(value);
    else if (key == "positional_encoding") cfg.positional_encoding = to_int(value) != 0;
    else if (key == "classes") {
      std::size_t start = 0;
      while (start <= value.size()) {
        auto pos = value.find(',', start);
        class_names.push_back(value.substr(start, pos == std::string::npos ? pos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
      }
    } else if (key == "band_mean") stats.mean = to_doubles(value);
    else if (key == "band_std") stats.stddev = to_doubles(value);
    else if (key == "tensors") { n_tensors = static_cast<std::size_t>(to_int(value)); break; }
    else throw ParseError(path + ": unknown checkpoint key '" + key + "'");
  }

  LoadedModel lm{ModelInstance::build(cfg, 0), grid, std::move(stats), std::move(class_names)};
  auto items = lm.model.params().items();
  if (items.size() != n_tensors)
    throw ParseError(path + ": checkpoint lists " + std::to_string(n_tensors) +
                     " tensors, model has " + std::to_string(items.size()));
  for (auto& it : items) {
    auto& l = next("tensor manifest");
    std::string expect = it.name + ' ' + (it.learnable ? "1" : "0");
    for (std::size_t d = 0; d < it.tensor->rank(); ++d)
      expect += ' ' + std::to_string(it.tensor->dim(d));
    if (l != expect)
      throw ParseError(path + ": manifest entry '" + l + "' does not match model tensor '" +
                       expect + "'");
  }
  {
    auto [key, value] = split_kv(next("blob"));
    if (key != "blob") throw ParseError(path + ": missing blob header");
    std::size_t expect = 0;
    for (const auto& it : items) expect += it.tensor->numel();
    if (static_cast<std::size_t>(to_int(value)) != expect)
      throw ParseError(path + ": blob size mismatch");
    blob = expect;
  }
  for (auto& it : items) {
    in.read(reinterpret_cast<char*>(it.tensor->data.data()),
            static_cast<std::streamsize>(it.tensor->numel() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != it.tensor->numel() * sizeof(double))
      throw ParseError(path + ": truncated blob");
  }
  (void)blob;
  return lm;
}

}  // namespace sits
