#pragma once

#include <span>
#include <string>
#include <vector>

#include "sits/imbalance.hpp"
#include "sits/models.hpp"

namespace sits::training {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 4096;
  std::size_t max_epochs = 1000;
  int plateau_patience = 20;
  double plateau_factor = 0.5;
  double lr_floor = 1e-6;
  int stop_patience = 40;
  double val_fraction = 0.1;   // plot-level stratified internal validation
  double improve_tol = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-parameter Adam moments; beta1 0.9, beta2 0.999, eps 1e-8.
struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  std::vector<std::vector<double>> m, v;  // aligned to the learnable tensors
  std::int64_t step = 0;

  static AdamState init(const nn::ParamSet& params);
};

/// One Adam update over every learnable tensor. Throws on non-finite
/// gradients, naming the parameter.
void adam_step(nn::ParamSet& params, AdamState& state, double lr);

/// Reduce-on-plateau plus early stopping. An epoch improves when its
/// validation loss is below best - tol; the LR halves after `plateau_patience`
/// consecutive non-improving epochs (that counter resets on each halving) and
/// training stops after `stop_patience` consecutive non-improving epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int plateau_patience, double factor, double lr_floor,
                   int stop_patience, double tol);

  struct Update {
    double lr;
    bool stop;
  };
  Update observe(double val_loss);
  double lr() const { return lr_; }

 private:
  double lr_, factor_, floor_, tol_;
  int plateau_patience_, stop_patience_;
  double best_;
  int bad_for_lr_ = 0, bad_for_stop_ = 0;
};

struct EpochRecord {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
  std::size_t stop_epoch = 0;
  bool val_on_train = false;   // validation split was empty; train loss monitored
  double wall_seconds = 0.0;
  std::vector<std::string> warnings;

  /// Comma-separated epoch log (no timing, so outputs are reproducible).
  std::string to_csv() const;
};

/// Plot-level stratified split backing the internal validation set:
/// floor(val_fraction * plots) plots per class go to validation after a
/// seeded within-class shuffle.
struct ValidationSplit {
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> val_rows;
};
ValidationSplit internal_validation_split(const FeatureMatrix& data, int n_classes,
                                          double val_fraction, std::uint64_t seed);

/// Full optimization loop: plot-level stratified internal validation split,
/// resampling/class weights on the training part only, shuffled mini-batches,
/// Adam, plateau scheduling, early stopping and best-weight restoration.
/// `data` must be gap-filled, standardized and tagged with the layout the
/// model expects.
TrainReport train(ModelInstance& model, const FeatureMatrix& data, const TrainConfig& cfg,
                  const imbalance::ResampleConfig& imb);

}  // namespace sits::training
