#include "sits/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace sits::training {

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "learning rate must be > 0");
  require(batch_size >= 2, "batch size must be >= 2 (batch norm)");
  require(plateau_patience >= 1 && stop_patience >= 1, "patiences must be >= 1");
  require(plateau_factor > 0.0 && plateau_factor < 1.0, "plateau factor must be in (0, 1)");
  require(lr_floor > 0.0 && lr_floor <= learning_rate, "lr floor must be in (0, lr]");
  require(val_fraction >= 0.0 && val_fraction < 1.0, "validation fraction must be in [0, 1)");
  require(improve_tol >= 0.0, "improvement tolerance must be >= 0");
}

AdamState AdamState::init(const nn::ParamSet& params) {
  AdamState s;
  for (const auto& it : params.items()) {
    if (!it.learnable) continue;
    s.m.emplace_back(it.tensor->numel(), 0.0);
    s.v.emplace_back(it.tensor->numel(), 0.0);
  }
  return s;
}

void adam_step(nn::ParamSet& params, AdamState& state, double lr) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.step));
  std::size_t slot = 0;
  for (auto& it : params.items()) {
    if (!it.learnable) continue;
    auto& m = state.m[slot];
    auto& v = state.v[slot];
    ++slot;
    nn::Tensor& t = *it.tensor;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double g = t.grad[i];
      if (!std::isfinite(g))
        throw std::runtime_error("non-finite gradient in " + it.name + " at index " +
                                 std::to_string(i));
      m[i] = AdamState::kBeta1 * m[i] + (1.0 - AdamState::kBeta1) * g;
      v[i] = AdamState::kBeta2 * v[i] + (1.0 - AdamState::kBeta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      t.data[i] -= lr * m_hat / (std::sqrt(v_hat) + AdamState::kEps);
    }
  }
}

PlateauScheduler::PlateauScheduler(double lr, int plateau_patience, double factor,
                                   double lr_floor, int stop_patience, double tol)
    : lr_(lr),
      factor_(factor),
      floor_(lr_floor),
      tol_(tol),
      plateau_patience_(plateau_patience),
      stop_patience_(stop_patience),
      best_(std::numeric_limits<double>::infinity()) {}

PlateauScheduler::Update PlateauScheduler::observe(double val_loss) {
  if (val_loss < best_ - tol_) {
    best_ = val_loss;
    bad_for_lr_ = 0;
    bad_for_stop_ = 0;
    return {lr_, false};
  }
  ++bad_for_lr_;
  ++bad_for_stop_;
  if (bad_for_lr_ >= plateau_patience_) {
    lr_ = std::max(floor_, lr_ * factor_);
    bad_for_lr_ = 0;
  }
  return {lr_, bad_for_stop_ >= stop_patience_};
}

std::string TrainReport::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,learning_rate\n";
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    out += std::to_string(e + 1);
    out += ',';
    out += format_double(epochs[e].train_loss);
    out += ',';
    out += format_double(epochs[e].val_loss);
    out += ',';
    out += format_double(epochs[e].learning_rate);
    out += '\n';
  }
  out += "best_epoch," + std::to_string(best_epoch) + "\n";
  out += "stop_epoch," + std::to_string(stop_epoch) + "\n";
  return out;
}

ValidationSplit internal_validation_split(const FeatureMatrix& data, int n_classes,
                                          double val_fraction, std::uint64_t seed) {
  // Small classes can end up absent from the validation part; the caller
  // reports that, it is not fatal.
  std::vector<std::vector<std::int64_t>> plots(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    auto& list = plots[static_cast<std::size_t>(data.labels[i])];
    if (std::find(list.begin(), list.end(), data.plot_ids[i]) == list.end())
      list.push_back(data.plot_ids[i]);
  }
  std::unordered_map<std::int64_t, bool> in_val;
  for (std::size_t c = 0; c < plots.size(); ++c) {
    auto& list = plots[c];
    Rng rng(derive_seed(seed, 21, c));
    std::shuffle(list.begin(), list.end(), rng);
    const auto n_val = static_cast<std::size_t>(val_fraction * static_cast<double>(list.size()));
    for (std::size_t j = 0; j < list.size(); ++j) in_val[list[j]] = j < n_val;
  }
  ValidationSplit split;
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    if (in_val[data.plot_ids[i]])
      split.val_rows.push_back(i);
    else
      split.train_rows.push_back(i);
  }
  return split;
}

namespace {

double eval_loss(ModelInstance& model, const FeatureMatrix& data,
                 std::span<const std::size_t> rows, std::span<const double> class_weights,
                 std::size_t batch_size) {
  double weighted = 0.0, total_w = 0.0;
  std::vector<std::size_t> batch;
  std::vector<int> labels;
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const std::size_t stop = std::min(rows.size(), start + batch_size);
    batch.assign(rows.begin() + static_cast<std::ptrdiff_t>(start),
                 rows.begin() + static_cast<std::ptrdiff_t>(stop));
    labels.clear();
    for (std::size_t r : batch) labels.push_back(data.labels[r]);
    nn::Tensor logits = model.forward(model.make_batch(data, batch), nn::Mode::kEval);
    auto loss = nn::weighted_cross_entropy(logits, labels, class_weights);
    weighted += loss.value * loss.weight_total;
    total_w += loss.weight_total;
  }
  return total_w > 0.0 ? weighted / total_w : 0.0;
}

}  // namespace

TrainReport train(ModelInstance& model, const FeatureMatrix& data, const TrainConfig& cfg,
                  const imbalance::ResampleConfig& imb) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const int n_classes = model.config().n_classes;
  {
    std::vector<bool> present(static_cast<std::size_t>(n_classes), false);
    int distinct = 0;
    for (int l : data.labels) {
      require(l >= 0 && l < n_classes, "label out of range");
      if (!present[static_cast<std::size_t>(l)]) {
        present[static_cast<std::size_t>(l)] = true;
        ++distinct;
      }
    }
    require(distinct >= 2, "training data must contain at least two classes");
  }

  TrainReport report;

  auto [train_rows, val_rows] =
      internal_validation_split(data, n_classes, cfg.val_fraction, cfg.seed);
  if (val_rows.empty()) {
    report.val_on_train = true;
    report.warnings.push_back("validation split is empty; monitoring the training loss");
  }
  FeatureMatrix val_data = select_rows(data, val_rows);
  {
    std::vector<bool> in_val(static_cast<std::size_t>(n_classes), false);
    for (int l : val_data.labels) in_val[static_cast<std::size_t>(l)] = true;
    for (int c = 0; c < n_classes; ++c)
      if (!val_rows.empty() && !in_val[static_cast<std::size_t>(c)])
        report.warnings.push_back("class " + std::to_string(c) +
                                  " absent from the validation split");
  }

  // Resampling and class weights never see the validation plots.
  imbalance::ResampleConfig imb_seeded = imb;
  imb_seeded.seed = derive_seed(cfg.seed, 22);
  auto applied = imbalance::apply(select_rows(data, train_rows), n_classes, imb_seeded);
  for (auto& w : applied.warnings) report.warnings.push_back(std::move(w));
  const FeatureMatrix& fit_data = applied.data;
  require(fit_data.n_rows() >= 2, "training slice needs at least two rows");

  AdamState adam = AdamState::init(model.params());
  PlateauScheduler scheduler(cfg.learning_rate, cfg.plateau_patience, cfg.plateau_factor,
                             cfg.lr_floor, cfg.stop_patience, cfg.improve_tol);

  std::vector<std::size_t> order(fit_data.n_rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(cfg.seed, 23));

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_state;
  std::vector<std::size_t> batch;
  std::vector<int> labels;
  std::vector<std::size_t> val_idx(val_data.n_rows());
  std::iota(val_idx.begin(), val_idx.end(), std::size_t{0});

  double lr = cfg.learning_rate;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_weighted = 0.0, epoch_w = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      if (stop - start < 2) break;  // batch norm cannot run on a single row
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(stop));
      labels.clear();
      for (std::size_t r : batch) labels.push_back(fit_data.labels[r]);

      model.params().zero_grad();
      nn::Tensor logits = model.forward(model.make_batch(fit_data, batch), nn::Mode::kTrain);
      auto loss = nn::weighted_cross_entropy(logits, labels, applied.class_weights);
      model.backward(loss.dlogits);
      adam_step(model.params(), adam, lr);

      epoch_weighted += loss.value * loss.weight_total;
      epoch_w += loss.weight_total;
    }
    const double train_loss = epoch_w > 0.0 ? epoch_weighted / epoch_w : 0.0;
    const double monitored =
        report.val_on_train
            ? train_loss
            : eval_loss(model, val_data, val_idx, applied.class_weights, cfg.batch_size);

    report.epochs.push_back({train_loss, monitored, lr});
    if (monitored < best_val) {
      best_val = monitored;
      best_state = model.params().snapshot();
      report.best_epoch = epoch;
    }
    auto update = scheduler.observe(monitored);
    lr = update.lr;
    report.stop_epoch = epoch;
    if (update.stop) break;
  }

  if (!best_state.empty()) model.params().restore(best_state);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

}  // namespace sits::training
