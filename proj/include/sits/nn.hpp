#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sits/tensor.hpp"

namespace sits::nn {

enum class Mode { kTrain, kEval };

struct NamedTensor {
  std::string name;
  Tensor* tensor;
  bool learnable;  // running statistics are tracked but not optimized
};

class ParamSet {
 public:
  void add(std::string name, Tensor* t, bool learnable = true) {
    for (const auto& it : items_)
      require(it.name != name, "duplicate parameter name '" + name + "'");
    items_.push_back({std::move(name), t, learnable});
  }
  std::span<const NamedTensor> items() const { return items_; }
  std::span<NamedTensor> items() { return items_; }

  std::size_t learnable_count() const {
    std::size_t n = 0;
    for (const auto& it : items_)
      if (it.learnable) n += it.tensor->numel();
    return n;
  }
  void zero_grad() {
    for (auto& it : items_) it.tensor->zero_grad();
  }
  /// Copies of every tensor's values (params and running stats), in
  /// registration order. Used for best-epoch restoration.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& snap);

 private:
  std::vector<NamedTensor> items_;
};

/// One differentiable block. forward() caches whatever backward() needs;
/// backward() returns the input gradient and accumulates parameter
/// gradients (callers zero them between steps).
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void register_params(const std::string& prefix, ParamSet& out) = 0;
};

// y = x W^T + b with x: batch x f_in, W: f_out x f_in.
class Linear : public Layer {
 public:
  Linear(std::size_t f_in, std::size_t f_out, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void register_params(const std::string& prefix, ParamSet& out) override;

  Tensor weight;  // f_out x f_in
  Tensor bias;    // f_out

 private:
  Tensor x_;
};

// 1-D cross-correlation over time, stride 1, zero padding chosen to keep the
// output length equal to the input length (left floor((k-1)/2), right the
// rest). x: batch x c_in x t.
class Conv1d : public Layer {
 public:
  Conv1d(std::size_t c_in, std::size_t c_out, std::size_t kernel, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void register_params(const std::string& prefix, ParamSet& out) override;

  Tensor weight;  // c_out x c_in x k
  Tensor bias;    // c_out

 private:
  Tensor x_;
  std::size_t kernel_;
};

// Batch normalization. Rank-2 input normalizes each feature over the batch;
// rank-3 input normalizes each channel pooled over batch x time. Population
// variance, eps 1e-5, running-stat momentum 0.1.
class BatchNorm : public Layer {
 public:
  explicit BatchNorm(std::size_t n_features);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void register_params(const std::string& prefix, ParamSet& out) override;

  Tensor gamma, beta;
  Tensor running_mean, running_var;

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  Tensor x_hat_;
  std::vector<double> inv_std_;
  Mode mode_ = Mode::kTrain;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void register_params(const std::string&, ParamSet&) override {}

 private:
  std::vector<std::uint8_t> mask_;  // 1 where x > 0
};

// Per-channel max over time; the gradient routes to the first argmax.
class GlobalMaxPool : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void register_params(const std::string&, ParamSet&) override {}

 private:
  std::vector<std::size_t> argmax_;
  std::size_t batch_ = 0, channels_ = 0, time_ = 0;
};

// Shared per-timestep linear embedding with optional sinusoidal positional
// encoding: batch x c x t -> batch x t x e.
class TimestepEmbedding : public Layer {
 public:
  TimestepEmbedding(std::size_t c_in, std::size_t embed, bool positional, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void register_params(const std::string& prefix, ParamSet& out) override;

  Tensor weight;  // e x c
  Tensor bias;    // e

 private:
  Tensor x_;
  bool positional_;
  std::vector<double> encoding_;  // t x e, built lazily for the seen t
  std::size_t encoded_steps_ = 0;
  void build_encoding(std::size_t t, std::size_t e);
};

// Multi-head attention with one learnable master query per head. The
// embedding is split into h contiguous slices; each head projects its slice
// to keys, softmax-scores them against its query and averages the slice
// values. x: batch x t x e -> batch x e.
class TemporalAttention : public Layer {
 public:
  TemporalAttention(std::size_t embed, std::size_t heads, std::size_t key_dim, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void register_params(const std::string& prefix, ParamSet& out) override;

  Tensor query;     // h x d_k
  Tensor key_proj;  // h x d_k x (e / h)

  /// Attention weights of the last forward: batch x h x t.
  const std::vector<double>& last_weights() const { return attn_; }

 private:
  Tensor x_;
  std::vector<double> keys_;  // batch x h x t x d_k
  std::vector<double> attn_;
  std::size_t heads_, key_dim_, slice_;
};

struct LossResult {
  double value = 0.0;
  double weight_total = 0.0;  // sum of the per-sample class weights
  Tensor dlogits;
};

/// Mean cross-entropy with per-class weights, normalized by the total sample
/// weight; computed through log-sum-exp. Uniform weights reduce it to the
/// plain mean cross-entropy.
LossResult weighted_cross_entropy(const Tensor& logits, std::span<const int> labels,
                                  std::span<const double> class_weights);

/// Row-wise softmax of a batch x k tensor.
Tensor softmax(const Tensor& logits);

/// He-uniform initialization: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
void he_uniform(Tensor& t, std::size_t fan_in, Rng& rng);

}  // namespace sits::nn
