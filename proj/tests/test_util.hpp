#pragma once

#include <random>
#include <span>

#include "sits/gradcheck.hpp"
#include "sits/models.hpp"
#include "sits/nn.hpp"

namespace sits::testutil {

inline void fill_uniform(nn::Tensor& t, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data) v = dist(rng);
}

/// Uniform values bounded away from zero, so ReLU masks and max-pool argmax
/// positions cannot flip within the finite-difference step.
inline void fill_away_from_zero(nn::Tensor& t, Rng& rng) {
  std::uniform_real_distribution<double> mag(0.2, 1.5);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.data) v = (sign(rng) ? 1.0 : -1.0) * mag(rng);
}

/// Checks one layer: the scalar objective is a fixed random projection of
/// the output, gradients flow through backward(), and every parameter plus
/// the input is verified against central differences.
inline double layer_gradcheck(nn::Layer& layer, nn::Tensor x, nn::Mode mode, std::uint64_t seed) {
  nn::Tensor first = layer.forward(x, mode);
  nn::Tensor projection = first;
  Rng rng(seed);
  fill_uniform(projection, -1.0, 1.0, rng);

  auto loss_fn = [&]() {
    nn::Tensor y = layer.forward(x, mode);
    double s = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) s += projection.data[i] * y.data[i];
    return s;
  };

  nn::ParamSet params;
  layer.register_params("p", params);
  params.zero_grad();
  layer.forward(x, mode);
  nn::Tensor dx = layer.backward(projection);

  double worst = nn::finite_diff_check(loss_fn, x.data, dx.data).max_rel_err;
  for (auto& item : params.items()) {
    if (!item.learnable) continue;
    worst = std::max(worst,
                     nn::finite_diff_check(loss_fn, item.tensor->data, item.tensor->grad)
                         .max_rel_err);
  }
  return worst;
}

/// Full-network check through the cross-entropy loss.
inline double model_gradcheck(ModelInstance& model, nn::Tensor x, std::span<const int> labels,
                              std::span<const double> weights) {
  auto loss_fn = [&]() {
    nn::Tensor logits = model.forward(x, nn::Mode::kTrain);
    return nn::weighted_cross_entropy(logits, labels, weights).value;
  };
  model.params().zero_grad();
  nn::Tensor logits = model.forward(x, nn::Mode::kTrain);
  auto loss = nn::weighted_cross_entropy(logits, labels, weights);
  nn::Tensor dx = model.backward(loss.dlogits);

  double worst = nn::finite_diff_check(loss_fn, x.data, dx.data).max_rel_err;
  for (auto& item : model.params().items()) {
    if (!item.learnable) continue;
    worst = std::max(worst,
                     nn::finite_diff_check(loss_fn, item.tensor->data, item.tensor->grad)
                         .max_rel_err);
  }
  return worst;
}

}  // namespace sits::testutil
