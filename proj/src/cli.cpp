#include "sits/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sits/common.hpp"
#include "sits/evaluation.hpp"

namespace fs = std::filesystem;

namespace sits::cli {

namespace {

enum class Kind { kString, kInt, kUint, kDouble, kDoubleOrAuto, kIntList, kBool, kEnum };

struct KeySpec {
  const char* name;
  Kind kind;
  const char* default_value;
  std::vector<const char*> allowed;  // enums only
};

const std::vector<KeySpec>& registry() {
  static const std::vector<KeySpec> keys = {
      {"seed", Kind::kUint, "0", {}},
      {"out", Kind::kString, "out", {}},
      {"threads", Kind::kInt, "1", {}},
      {"data", Kind::kString, "", {}},
      {"checkpoint", Kind::kString, "", {}},
      {"model", Kind::kEnum, "mlp", {"mlp", "tempcnn", "ltae", "rf"}},
      {"folds", Kind::kInt, "10", {}},
      // synthetic benchmark generator
      {"scale", Kind::kDouble, "0.25", {}},
      {"plots-per-class", Kind::kIntList, "", {}},
      {"noise-std", Kind::kDouble, "0.025", {}},
      {"gap-prob", Kind::kDouble, "0.12", {}},
      {"plot-jitter", Kind::kDouble, "0.02", {}},
      {"pixels-min", Kind::kInt, "6", {}},
      {"pixels-max", Kind::kInt, "20", {}},
      {"acq-step-days", Kind::kInt, "5", {}},
      {"grid-steps", Kind::kInt, "74", {}},
      {"grid-step-days", Kind::kInt, "10", {}},
      // model hyperparameters
      {"mlp-widths", Kind::kIntList, "1024,512,256", {}},
      {"cnn-filters", Kind::kIntList, "128,128,128", {}},
      {"cnn-kernels", Kind::kIntList, "3,3,2", {}},
      {"heads", Kind::kInt, "6", {}},
      {"key-dim", Kind::kInt, "8", {}},
      {"embed-size", Kind::kInt, "370", {}},
      {"attn-mlp-width", Kind::kInt, "512", {}},
      {"positional-encoding", Kind::kBool, "1", {}},
      // optimization
      {"lr", Kind::kDoubleOrAuto, "auto", {}},
      {"batch-size", Kind::kInt, "4096", {}},
      {"max-epochs", Kind::kInt, "1000", {}},
      {"plateau-patience", Kind::kInt, "20", {}},
      {"plateau-factor", Kind::kDouble, "0.5", {}},
      {"lr-floor", Kind::kDouble, "1e-06", {}},
      {"stop-patience", Kind::kInt, "40", {}},
      {"val-fraction", Kind::kDouble, "0.1", {}},
      // imbalance handling
      {"imbalance", Kind::kEnum, "none",
       {"none", "class-weight", "smote", "adasyn", "undersample"}},
      {"smote-k", Kind::kInt, "5", {}},
      {"undersample-plots", Kind::kInt, "400", {}},
      // random forest
      {"trees", Kind::kInt, "100", {}},
      {"max-depth", Kind::kInt, "-1", {}},
      {"min-samples-split", Kind::kInt, "2", {}},
      {"features-per-split", Kind::kInt, "0", {}},
  };
  return keys;
}

const KeySpec* find_key(const std::string& name) {
  for (const auto& k : registry())
    if (name == k.name) return &k;
  return nullptr;
}

void check_value(const KeySpec& spec, const std::string& value) {
  auto bad = [&](const std::string& expect) {
    throw ConfigError("key '" + std::string(spec.name) + "': bad value '" + value +
                      "', expected " + expect);
  };
  std::int64_t i = 0;
  double d = 0;
  switch (spec.kind) {
    case Kind::kString:
      break;
    case Kind::kInt:
      if (!parse_int64(value, i)) bad("an integer");
      break;
    case Kind::kUint:
      if (!parse_int64(value, i) || i < 0) bad("a non-negative integer");
      break;
    case Kind::kDouble:
      if (!parse_double(value, d)) bad("a number");
      break;
    case Kind::kDoubleOrAuto:
      if (value != "auto" && !parse_double(value, d)) bad("a number or 'auto'");
      break;
    case Kind::kBool:
      if (value != "0" && value != "1") bad("0 or 1");
      break;
    case Kind::kIntList: {
      if (value.empty()) break;
      std::size_t start = 0;
      while (start <= value.size()) {
        auto pos = value.find(',', start);
        auto tok = value.substr(start, pos == std::string::npos ? pos : pos - start);
        if (!parse_int64(tok, i)) bad("a comma-separated integer list");
        if (pos == std::string::npos) break;
        start = pos + 1;
      }
      break;
    }
    case Kind::kEnum: {
      for (const char* a : spec.allowed)
        if (value == a) return;
      std::string allowed;
      for (const char* a : spec.allowed) {
        if (!allowed.empty()) allowed += ", ";
        allowed += a;
      }
      throw ConfigError("key '" + std::string(spec.name) + "': unknown value '" + value +
                        "', allowed values: " + allowed);
    }
  }
}

const std::set<std::string>& known_commands() {
  static const std::set<std::string> cmds = {"synth", "preprocess", "cv",
                                             "train", "predict", "evaluate"};
  return cmds;
}

void apply_pair(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "command") {
    if (value != cfg.command)
      throw ConfigError("config file command '" + value + "' does not match invoked command '" +
                        cfg.command + "'");
    return;
  }
  const KeySpec* spec = find_key(key);
  if (!spec) throw ConfigError("unknown key '" + key + "'");
  check_value(*spec, value);
  cfg.values[key] = value;
  cfg.provided.insert(key);
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto pos = line.find('=');
    if (pos == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    apply_pair(cfg, line.substr(0, pos), line.substr(pos + 1));
  }
}

}  // namespace

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  std::int64_t v = 0;
  if (!parse_int64(get(key), v))
    throw ConfigError("key '" + key + "': bad integer '" + get(key) + "'");
  return v;
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  return static_cast<std::uint64_t>(get_int(key));
}

double RunConfig::get_double(const std::string& key) const {
  double v = 0;
  if (!parse_double(get(key), v))
    throw ConfigError("key '" + key + "': bad number '" + get(key) + "'");
  return v;
}

bool RunConfig::get_bool(const std::string& key) const { return get(key) == "1"; }

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  const std::string& s = get(key);
  std::vector<int> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto pos = s.find(',', start);
    auto tok = s.substr(start, pos == std::string::npos ? pos : pos - start);
    std::int64_t v = 0;
    if (!parse_int64(tok, v))
      throw ConfigError("key '" + key + "': bad integer list '" + s + "'");
    out.push_back(static_cast<int>(v));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string RunConfig::echo() const {
  std::string out = "command=" + command + "\n";
  for (const auto& spec : registry()) out += std::string(spec.name) + "=" + get(spec.name) + "\n";
  return out;
}

RunConfig parse_config(const std::vector<std::string>& args) {
  if (args.empty())
    throw ConfigError("usage: sits <synth|preprocess|cv|train|predict|evaluate> [--key value]");
  RunConfig cfg;
  cfg.command = args[0];
  if (!known_commands().count(cfg.command))
    throw ConfigError("unknown command '" + cfg.command +
                      "', expected one of: synth, preprocess, cv, train, predict, evaluate");
  for (const auto& spec : registry()) cfg.values[spec.name] = spec.default_value;

  // two passes keep the precedence flags > file > defaults regardless of
  // where --config appears on the command line
  std::vector<std::pair<std::string, std::string>> flag_pairs;
  std::string config_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string arg = args[i];
    if (!arg.starts_with("--"))
      throw ConfigError("expected a --key argument, got '" + arg + "'");
    arg = arg.substr(2);
    std::string value;
    auto eq = arg.find('=');
    if (eq != std::string::npos) {
      value = arg.substr(eq + 1);
      arg = arg.substr(0, eq);
    } else {
      if (i + 1 >= args.size()) throw ConfigError("key '" + arg + "' is missing a value");
      value = args[++i];
    }
    if (arg == "config")
      config_path = value;
    else
      flag_pairs.emplace_back(arg, value);
  }
  if (!config_path.empty()) load_config_file(cfg, config_path);
  for (const auto& [k, v] : flag_pairs) apply_pair(cfg, k, v);

  // Resolve the adaptive defaults here so the echoed config reproduces this
  // run verbatim: the learning rate depends on the model family and the
  // MLP+SMOTE combination defaults to the large batch.
  if (cfg.values["lr"] == "auto")
    cfg.values["lr"] = cfg.values["model"] == "mlp" ? "0.0001" : "0.001";
  if (!cfg.was_provided("batch-size") && cfg.values["model"] == "mlp" &&
      cfg.values["imbalance"] == "smote")
    cfg.values["batch-size"] = "8192";
  return cfg;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

namespace {

/// Removes every tracked file if the command does not reach commit().
class OutputTracker {
 public:
  ~OutputTracker() {
    if (committed_) return;
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
  std::string track(const std::string& path) {
    paths_.push_back(path);
    return path;
  }
  void commit() { committed_ = true; }

 private:
  std::vector<std::string> paths_;
  bool committed_ = false;
};

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

std::string require_path(const RunConfig& cfg, const std::string& key) {
  const std::string& p = cfg.get(key);
  if (p.empty())
    throw ConfigError("command '" + cfg.command + "' requires --" + key);
  return p;
}

SynthConfig synth_config_from(const RunConfig& cfg) {
  SynthConfig sc = benchmark_config(cfg.get_double("scale"), cfg.get_uint("seed"));
  sc.noise_std = cfg.get_double("noise-std");
  sc.gap_prob = cfg.get_double("gap-prob");
  sc.plot_jitter = cfg.get_double("plot-jitter");
  sc.pixels_per_plot_min = static_cast<int>(cfg.get_int("pixels-min"));
  sc.pixels_per_plot_max = static_cast<int>(cfg.get_int("pixels-max"));
  sc.acq_step_days = static_cast<int>(cfg.get_int("acq-step-days"));
  sc.grid.n_steps = static_cast<int>(cfg.get_int("grid-steps"));
  sc.grid.step_days = static_cast<int>(cfg.get_int("grid-step-days"));
  auto plots = cfg.get_int_list("plots-per-class");
  if (!plots.empty()) {
    require(plots.size() == sc.plots_per_class.size(),
            "plots-per-class must list " + std::to_string(sc.plots_per_class.size()) +
                " values");
    sc.plots_per_class = plots;
  }
  return sc;
}

ModelConfig model_config_from(const RunConfig& cfg, int n_classes, const TimeGrid& grid) {
  ModelConfig mc;
  auto v = variant_from_string(cfg.get("model"));
  require(v.has_value(), "model 'rf' has no network configuration");
  mc.variant = *v;
  mc.mlp_widths = cfg.get_int_list("mlp-widths");
  mc.cnn_filters = cfg.get_int_list("cnn-filters");
  mc.cnn_kernels = cfg.get_int_list("cnn-kernels");
  mc.heads = static_cast<int>(cfg.get_int("heads"));
  mc.key_dim = static_cast<int>(cfg.get_int("key-dim"));
  mc.embed_size = static_cast<int>(cfg.get_int("embed-size"));
  mc.attn_mlp_width = static_cast<int>(cfg.get_int("attn-mlp-width"));
  mc.positional_encoding = cfg.get_bool("positional-encoding");
  mc.n_classes = n_classes;
  mc.n_bands = grid.n_bands;
  mc.n_steps = grid.n_steps;
  return mc;
}

training::TrainConfig train_config_from(const RunConfig& cfg) {
  training::TrainConfig tc;
  tc.learning_rate = cfg.get_double("lr");
  tc.batch_size = static_cast<std::size_t>(cfg.get_int("batch-size"));
  tc.max_epochs = static_cast<std::size_t>(cfg.get_int("max-epochs"));
  tc.plateau_patience = static_cast<int>(cfg.get_int("plateau-patience"));
  tc.plateau_factor = cfg.get_double("plateau-factor");
  tc.lr_floor = cfg.get_double("lr-floor");
  tc.stop_patience = static_cast<int>(cfg.get_int("stop-patience"));
  tc.val_fraction = cfg.get_double("val-fraction");
  tc.seed = derive_seed(cfg.get_uint("seed"), 61);
  return tc;
}

imbalance::ResampleConfig imbalance_config_from(const RunConfig& cfg) {
  imbalance::ResampleConfig rc;
  rc.method = *imbalance::method_from_string(cfg.get("imbalance"));
  rc.k_neighbors = static_cast<int>(cfg.get_int("smote-k"));
  rc.undersample_plots = static_cast<int>(cfg.get_int("undersample-plots"));
  rc.seed = derive_seed(cfg.get_uint("seed"), 62);
  return rc;
}

forest::ForestConfig forest_config_from(const RunConfig& cfg) {
  forest::ForestConfig fc;
  fc.n_trees = static_cast<int>(cfg.get_int("trees"));
  fc.max_depth = static_cast<int>(cfg.get_int("max-depth"));
  fc.min_samples_split = static_cast<int>(cfg.get_int("min-samples-split"));
  fc.features_per_split = static_cast<int>(cfg.get_int("features-per-split"));
  fc.seed = derive_seed(cfg.get_uint("seed"), 63);
  fc.threads = static_cast<int>(cfg.get_int("threads"));
  return fc;
}

std::string format_stats_csv(const BandStats& stats) {
  std::string out = "band,mean,std\n";
  for (std::size_t b = 0; b < stats.mean.size(); ++b) {
    out += std::to_string(b);
    out += ',';
    out += format_double(stats.mean[b]);
    out += ',';
    out += format_double(stats.stddev[b]);
    out += '\n';
  }
  return out;
}

std::string format_grid_csv(std::span<const double> values, int k) {
  std::string out;
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      if (c) out += ',';
      out += format_double(values[static_cast<std::size_t>(r) * static_cast<std::size_t>(k) +
                                  static_cast<std::size_t>(c)]);
    }
    out += '\n';
  }
  return out;
}

std::string format_counts_csv(const evaluation::ConfusionMatrix& cm) {
  std::string out;
  for (int r = 0; r < cm.n_classes; ++r) {
    for (int c = 0; c < cm.n_classes; ++c) {
      if (c) out += ',';
      out += std::to_string(cm.at(r, c));
    }
    out += '\n';
  }
  return out;
}

std::string format_metrics_csv(const evaluation::MetricsReport& m,
                               const std::vector<std::string>& class_names) {
  std::string out = "class,precision,recall,f1\n";
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    out += class_names[c];
    out += ',';
    out += format_double(m.precision[c]);
    out += ',';
    out += format_double(m.recall[c]);
    out += ',';
    out += format_double(m.f1[c]);
    out += '\n';
  }
  out += "f1_macro," + format_double(m.f1_macro) + "\n";
  out += "oa," + format_double(m.oa) + "\n";
  out += "ba," + format_double(m.ba) + "\n";
  return out;
}

struct PredictionRun {
  std::vector<std::string> class_names;
  Prediction prediction;
  FeatureMatrix features;  // standardized, aligned to prediction rows
};

PredictionRun run_prediction(const RunConfig& cfg) {
  const std::string ckpt_path = require_path(cfg, "checkpoint");
  SitsDataset ds = load_dataset(require_path(cfg, "data"));
  PredictionRun out;
  if (is_model_checkpoint(ckpt_path)) {
    LoadedModel lm = load_checkpoint(ckpt_path);
    require(ds.grid.n_bands == lm.grid.n_bands,
            "dataset has " + std::to_string(ds.grid.n_bands) + " bands, checkpoint expects " +
                std::to_string(lm.grid.n_bands));
    ds.grid = lm.grid;
    FeatureMatrix m = gapfill_dataset(ds);
    standardize_apply(m, lm.stats);
    if (lm.model.config().variant != ModelVariant::kMlp) m = as_layout(m, Layout::kChannels);
    out.prediction = lm.model.predict(m);
    out.class_names = std::move(lm.class_names);
    out.features = std::move(m);
  } else if (forest::is_forest_checkpoint(ckpt_path)) {
    forest::LoadedForest lf = forest::load_forest(ckpt_path);
    require(ds.grid.n_bands == lf.grid.n_bands,
            "dataset has " + std::to_string(ds.grid.n_bands) + " bands, checkpoint expects " +
                std::to_string(lf.grid.n_bands));
    ds.grid = lf.grid;
    FeatureMatrix m = gapfill_dataset(ds);
    standardize_apply(m, lf.stats);
    auto pred = forest::predict_forest(lf.forest, m);
    out.prediction.labels = std::move(pred.labels);
    out.prediction.probabilities = std::move(pred.vote_shares);
    out.class_names = std::move(lf.class_names);
    out.features = std::move(m);
  } else {
    throw ParseError(ckpt_path + ": not a recognized checkpoint");
  }
  require(out.class_names.size() >= 2, "checkpoint lists fewer than two classes");
  return out;
}

void cmd_synth(const RunConfig& cfg, OutputTracker& tracker, const fs::path& out_dir) {
  SynthConfig sc = synth_config_from(cfg);
  SitsDataset ds = generate_synthetic(sc);
  write_dataset(ds, tracker.track((out_dir / "dataset.sits").string()));
  std::cout << summary_table(dataset_summary(ds));
}

void cmd_preprocess(const RunConfig& cfg, OutputTracker& tracker, const fs::path& out_dir) {
  SitsDataset ds = load_dataset(require_path(cfg, "data"));
  FeatureMatrix m = gapfill_dataset(ds);
  BandStats stats = standardize_fit(m);
  standardize_apply(m, stats);
  write_features(m, ds.class_names, ds.grid,
                 tracker.track((out_dir / "features.sits").string()));
  write_text(tracker.track((out_dir / "stats.csv").string()), format_stats_csv(stats));
  std::cout << "preprocessed " << m.n_rows() << " pixels into " << m.n_cols()
            << " features each\n";
}

void cmd_train(const RunConfig& cfg, OutputTracker& tracker, const fs::path& out_dir) {
  SitsDataset ds = load_dataset(require_path(cfg, "data"));
  const int n_classes = static_cast<int>(ds.class_names.size());
  FeatureMatrix m = gapfill_dataset(ds);
  BandStats stats = standardize_fit(m);
  standardize_apply(m, stats);

  if (cfg.get("model") == "rf") {
    imbalance::ResampleConfig imb = imbalance_config_from(cfg);
    auto applied = imbalance::apply(m, n_classes, imb);
    for (const auto& w : applied.warnings) std::cerr << "warning: " << w << '\n';
    forest::ForestConfig fc = forest_config_from(cfg);
    fc.class_weights = imb.method == imbalance::Method::kClassWeight ? applied.class_weights
                                                                     : std::vector<double>{};
    auto rf = forest::train_forest(applied.data, n_classes, fc);
    forest::save_forest(tracker.track((out_dir / "forest.ckpt").string()), rf, ds.grid, stats,
                        ds.class_names);
    std::cout << "trained " << rf.trees.size() << " trees on " << applied.data.n_rows()
              << " pixels\n";
    return;
  }

  ModelConfig mc = model_config_from(cfg, n_classes, ds.grid);
  if (mc.variant != ModelVariant::kMlp) m = as_layout(m, Layout::kChannels);
  ModelInstance model = ModelInstance::build(mc, derive_seed(cfg.get_uint("seed"), 60));
  if (mc.variant == ModelVariant::kLtae && model.effective_embed_size() != mc.embed_size)
    std::cerr << "note: embedding size rounded from " << mc.embed_size << " to "
              << model.effective_embed_size() << " (multiple of " << mc.heads << " heads)\n";
  std::cout << "model " << to_string(mc.variant) << " with " << model.param_count()
            << " learnable parameters\n";

  auto report = training::train(model, m, train_config_from(cfg), imbalance_config_from(cfg));
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  save_checkpoint(tracker.track((out_dir / "model.ckpt").string()), model, ds.grid, stats,
                  ds.class_names);
  write_text(tracker.track((out_dir / "train_log.csv").string()), report.to_csv());
  std::cout << "stopped after epoch " << report.stop_epoch << ", best epoch "
            << report.best_epoch << " (" << report.wall_seconds << " s)\n";
}

void cmd_predict(const RunConfig& cfg, OutputTracker& tracker, const fs::path& out_dir) {
  PredictionRun run = run_prediction(cfg);
  const auto k = run.class_names.size();
  std::string out = "pixel_id,plot_id,true_class,predicted_class";
  for (const auto& name : run.class_names) out += ",p_" + name;
  out += '\n';
  for (std::size_t i = 0; i < run.features.n_rows(); ++i) {
    out += std::to_string(run.features.pixel_ids[i]);
    out += ',';
    out += std::to_string(run.features.plot_ids[i]);
    out += ',';
    out += run.class_names[static_cast<std::size_t>(run.features.labels[i])];
    out += ',';
    out += run.class_names[static_cast<std::size_t>(run.prediction.labels[i])];
    for (std::size_t c = 0; c < k; ++c) {
      out += ',';
      out += format_double(run.prediction.probabilities[i * k + c]);
    }
    out += '\n';
  }
  write_text(tracker.track((out_dir / "predictions.csv").string()), out);
  std::cout << "predicted " << run.features.n_rows() << " pixels\n";
}

void cmd_evaluate(const RunConfig& cfg, OutputTracker& tracker, const fs::path& out_dir) {
  PredictionRun run = run_prediction(cfg);
  const int k = static_cast<int>(run.class_names.size());
  auto m = evaluation::metrics(
      evaluation::confusion_matrix(run.features.labels, run.prediction.labels, k));
  auto recall_50 = evaluation::plot_level_recall(run.features.plot_ids, run.features.labels,
                                                 run.prediction.labels, k, 0.5);
  auto recall_20 = evaluation::plot_level_recall(run.features.plot_ids, run.features.labels,
                                                 run.prediction.labels, k, 0.2);

  write_text(tracker.track((out_dir / "metrics.csv").string()),
             format_metrics_csv(m, run.class_names));
  write_text(tracker.track((out_dir / "confusion.csv").string()), format_counts_csv(m.cm));
  std::string pr = "class,plots,recall_at_0.5,recall_at_0.2\n";
  for (std::size_t c = 0; c < run.class_names.size(); ++c) {
    pr += run.class_names[c];
    pr += ',';
    pr += std::to_string(recall_50.plots_per_class[c]);
    pr += ',';
    pr += format_double(recall_50.per_class[c]);
    pr += ',';
    pr += format_double(recall_20.per_class[c]);
    pr += '\n';
  }
  pr += "mean,," + format_double(recall_50.mean) + ',' + format_double(recall_20.mean) + '\n';
  write_text(tracker.track((out_dir / "plot_recall.csv").string()), pr);

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "F1-macro %.3f  OA %.3f  BA %.3f  plot recall@0.5 %.3f  @0.2 %.3f\n", m.f1_macro,
                m.oa, m.ba, recall_50.mean, recall_20.mean);
  std::cout << buf;
}

void cmd_cv(const RunConfig& cfg, OutputTracker& tracker, const fs::path& out_dir) {
  SitsDataset ds = load_dataset(require_path(cfg, "data"));
  evaluation::ClassifierConfig cc;
  cc.threads = static_cast<int>(cfg.get_int("threads"));
  cc.imbalance = imbalance_config_from(cfg);
  if (cfg.get("model") == "rf") {
    cc.kind = evaluation::ClassifierKind::kForest;
    cc.forest = forest_config_from(cfg);
    cc.forest.threads = 1;  // fold-level parallelism owns the budget
  } else {
    cc.kind = evaluation::ClassifierKind::kNeural;
    cc.model = model_config_from(cfg, static_cast<int>(ds.class_names.size()), ds.grid);
    cc.train = train_config_from(cfg);
  }
  auto report =
      evaluation::run_cv(ds, cc, static_cast<int>(cfg.get_int("folds")), cfg.get_uint("seed"));
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  write_text(tracker.track((out_dir / "cv_metrics.csv").string()), report.to_csv());
  write_text(tracker.track((out_dir / "cv_confusion.csv").string()),
             format_grid_csv(report.mean_confusion, static_cast<int>(ds.class_names.size())));
  std::cout << report.table(ds.class_names);
}

}  // namespace

void dispatch(const RunConfig& cfg) {
  const fs::path out_dir = cfg.get("out");
  fs::create_directories(out_dir);
  OutputTracker tracker;
  write_text(tracker.track((out_dir / "resolved.cfg").string()), cfg.echo());

  if (cfg.command == "synth") cmd_synth(cfg, tracker, out_dir);
  else if (cfg.command == "preprocess") cmd_preprocess(cfg, tracker, out_dir);
  else if (cfg.command == "train") cmd_train(cfg, tracker, out_dir);
  else if (cfg.command == "predict") cmd_predict(cfg, tracker, out_dir);
  else if (cfg.command == "evaluate") cmd_evaluate(cfg, tracker, out_dir);
  else if (cfg.command == "cv") cmd_cv(cfg, tracker, out_dir);
  else throw ConfigError("unknown command '" + cfg.command + "'");

  tracker.commit();
}

int run(const std::vector<std::string>& args) {
  try {
    dispatch(parse_config(args));
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace sits::cli
