#include "sits/nn.hpp"

#include <cmath>

#include "sits/kernels.hpp"

namespace sits::nn {

namespace {

void check_finite_label(int label, std::size_t k) {
  require(label >= 0 && static_cast<std::size_t>(label) < k,
          "label " + std::to_string(label) + " out of range for " + std::to_string(k) +
              " classes");
}

}  // namespace

void he_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.data) v = dist(rng);
}

std::vector<std::vector<double>> ParamSet::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(items_.size());
  for (const auto& it : items_) out.push_back(it.tensor->data);
  return out;
}

void ParamSet::restore(const std::vector<std::vector<double>>& snap) {
  require(snap.size() == items_.size(), "snapshot does not match parameter set");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    require(snap[i].size() == items_[i].tensor->data.size(), "snapshot shape mismatch");
    items_[i].tensor->data = snap[i];
  }
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Linear::Linear(std::size_t f_in, std::size_t f_out, Rng& rng) {
  weight.reshape({f_out, f_in});
  bias.reshape({f_out});
  he_uniform(weight, f_in, rng);
}

Tensor Linear::forward(const Tensor& x, Mode) {
  require(x.rank() == 2 && x.dim(1) == weight.dim(1),
          "linear layer shape mismatch: input features " + std::to_string(x.dim(1)) +
              ", expected " + std::to_string(weight.dim(1)));
  x_ = x;
  const std::size_t batch = x.dim(0), f_in = weight.dim(1), f_out = weight.dim(0);
  Tensor y({batch, f_out});
  for (std::size_t i = 0; i < batch; ++i) {
    const double* xi = x.row2(i);
    double* yi = y.row2(i);
    for (std::size_t o = 0; o < f_out; ++o)
      yi[o] = kernels::dot(xi, weight.row2(o), f_in) + bias.at(o);
  }
  return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
  const std::size_t batch = x_.dim(0), f_in = weight.dim(1), f_out = weight.dim(0);
  require(grad_out.rank() == 2 && grad_out.dim(0) == batch && grad_out.dim(1) == f_out,
          "linear backward shape mismatch");
  Tensor dx({batch, f_in});
  for (std::size_t i = 0; i < batch; ++i) {
    const double* gi = grad_out.row2(i);
    const double* xi = x_.row2(i);
    double* dxi = dx.row2(i);
    for (std::size_t o = 0; o < f_out; ++o) {
      const double g = gi[o];
      if (g == 0.0) continue;
      kernels::axpy(g, weight.row2(o), dxi, f_in);
      kernels::axpy(g, xi, weight.grad.data() + o * f_in, f_in);
      bias.grad[o] += g;
    }
  }
  return dx;
}

void Linear::register_params(const std::string& prefix, ParamSet& out) {
  out.add(prefix + ".weight", &weight);
  out.add(prefix + ".bias", &bias);
}

// ---------------------------------------------------------------------------
// Conv1d
// ---------------------------------------------------------------------------

Conv1d::Conv1d(std::size_t c_in, std::size_t c_out, std::size_t kernel, Rng& rng)
    : kernel_(kernel) {
  require(kernel >= 1, "kernel size must be >= 1");
  weight.reshape({c_out, c_in, kernel});
  bias.reshape({c_out});
  he_uniform(weight, c_in * kernel, rng);
}

Tensor Conv1d::forward(const Tensor& x, Mode) {
  require(x.rank() == 3 && x.dim(1) == weight.dim(1),
          "conv1d shape mismatch: input channels " + std::to_string(x.dim(1)) + ", expected " +
              std::to_string(weight.dim(1)));
  require(kernel_ <= x.dim(2), "kernel longer than the time axis");
  x_ = x;
  const std::size_t batch = x.dim(0), c_in = x.dim(1), t = x.dim(2), c_out = weight.dim(0);
  const std::size_t pad = (kernel_ - 1) / 2;
  Tensor y({batch, c_out, t});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < c_out; ++co) {
      double* yo = &y.at(b, co, 0);
      const double bv = bias.at(co);
      for (std::size_t s = 0; s < t; ++s) yo[s] = bv;
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const double* xi = &x.at(b, ci, 0);
        for (std::size_t j = 0; j < kernel_; ++j) {
          // output position s reads input position s + j - pad
          const std::size_t t0 = pad > j ? pad - j : 0;
          const std::size_t t1 = std::min(t, t + pad - j);
          if (t1 <= t0) continue;
          kernels::axpy(weight.at(co, ci, j), xi + (t0 + j - pad), yo + t0, t1 - t0);
        }
      }
    }
  }
  return y;
}

Tensor Conv1d::backward(const Tensor& grad_out) {
  const std::size_t batch = x_.dim(0), c_in = x_.dim(1), t = x_.dim(2), c_out = weight.dim(0);
  require(grad_out.rank() == 3 && grad_out.dim(0) == batch && grad_out.dim(1) == c_out &&
              grad_out.dim(2) == t,
          "conv1d backward shape mismatch");
  const std::size_t pad = (kernel_ - 1) / 2;
  Tensor dx({batch, c_in, t});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < c_out; ++co) {
      const double* go = &grad_out.at(b, co, 0);
      bias.grad[co] += kernels::sum(go, t);
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const double* xi = &x_.at(b, ci, 0);
        double* dxi = &dx.at(b, ci, 0);
        for (std::size_t j = 0; j < kernel_; ++j) {
          const std::size_t t0 = pad > j ? pad - j : 0;
          const std::size_t t1 = std::min(t, t + pad - j);
          if (t1 <= t0) continue;
          const std::size_t len = t1 - t0;
          const std::size_t u0 = t0 + j - pad;
          weight.grad[(co * c_in + ci) * kernel_ + j] += kernels::dot(go + t0, xi + u0, len);
          kernels::axpy(weight.at(co, ci, j), go + t0, dxi + u0, len);
        }
      }
    }
  }
  return dx;
}

void Conv1d::register_params(const std::string& prefix, ParamSet& out) {
  out.add(prefix + ".weight", &weight);
  out.add(prefix + ".bias", &bias);
}

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(std::size_t n_features) {
  gamma.reshape({n_features});
  beta.reshape({n_features});
  running_mean.reshape({n_features});
  running_var.reshape({n_features});
  for (auto& v : gamma.data) v = 1.0;
  for (auto& v : running_var.data) v = 1.0;
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  const std::size_t f = gamma.numel();
  require((x.rank() == 2 && x.dim(1) == f) || (x.rank() == 3 && x.dim(1) == f),
          "batch norm feature count mismatch");
  if (mode == Mode::kTrain)
    require(x.dim(0) >= 2, "batch norm requires batch size >= 2 in train mode");
  mode_ = mode;
  const std::size_t batch = x.dim(0);
  const std::size_t t = x.rank() == 3 ? x.dim(2) : 1;
  const double n = static_cast<double>(batch * t);

  std::vector<double> mean(f), var(f);
  if (mode == Mode::kTrain) {
    for (std::size_t c = 0; c < f; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) s += kernels::sum(&x.data[(b * f + c) * t], t);
      mean[c] = s / n;
      double sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        sq += kernels::sumsqdiff(&x.data[(b * f + c) * t], mean[c], t);
      var[c] = sq / n;
      running_mean.at(c) = (1.0 - kMomentum) * running_mean.at(c) + kMomentum * mean[c];
      running_var.at(c) = (1.0 - kMomentum) * running_var.at(c) + kMomentum * var[c];
    }
  } else {
    for (std::size_t c = 0; c < f; ++c) {
      mean[c] = running_mean.at(c);
      var[c] = running_var.at(c);
    }
  }

  inv_std_.resize(f);
  for (std::size_t c = 0; c < f; ++c) inv_std_[c] = 1.0 / std::sqrt(var[c] + kEps);

  x_hat_ = x;
  Tensor y = x;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < f; ++c) {
      const double m = mean[c], is = inv_std_[c], g = gamma.at(c), bt = beta.at(c);
      double* xh = &x_hat_.data[(b * f + c) * t];
      double* yo = &y.data[(b * f + c) * t];
      for (std::size_t s = 0; s < t; ++s) {
        xh[s] = (xh[s] - m) * is;
        yo[s] = g * xh[s] + bt;
      }
    }
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  require(grad_out.same_shape(x_hat_), "batch norm backward shape mismatch");
  const std::size_t f = gamma.numel();
  const std::size_t batch = grad_out.dim(0);
  const std::size_t t = grad_out.rank() == 3 ? grad_out.dim(2) : 1;
  const double n = static_cast<double>(batch * t);

  Tensor dx = grad_out;
  for (std::size_t c = 0; c < f; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* dy = &grad_out.data[(b * f + c) * t];
      const double* xh = &x_hat_.data[(b * f + c) * t];
      sum_dy += kernels::sum(dy, t);
      sum_dy_xhat += kernels::dot(dy, xh, t);
    }
    gamma.grad[c] += sum_dy_xhat;
    beta.grad[c] += sum_dy;
    const double g = gamma.at(c), is = inv_std_[c];
    if (mode_ == Mode::kTrain) {
      const double m_dy = sum_dy / n, m_dy_xhat = sum_dy_xhat / n;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* dy = &grad_out.data[(b * f + c) * t];
        const double* xh = &x_hat_.data[(b * f + c) * t];
        double* out = &dx.data[(b * f + c) * t];
        for (std::size_t s = 0; s < t; ++s)
          out[s] = g * is * (dy[s] - m_dy - xh[s] * m_dy_xhat);
      }
    } else {
      for (std::size_t b = 0; b < batch; ++b) {
        const double* dy = &grad_out.data[(b * f + c) * t];
        double* out = &dx.data[(b * f + c) * t];
        for (std::size_t s = 0; s < t; ++s) out[s] = g * is * dy[s];
      }
    }
  }
  return dx;
}

void BatchNorm::register_params(const std::string& prefix, ParamSet& out) {
  out.add(prefix + ".gamma", &gamma);
  out.add(prefix + ".beta", &beta);
  out.add(prefix + ".running_mean", &running_mean, /*learnable=*/false);
  out.add(prefix + ".running_var", &running_var, /*learnable=*/false);
}

// ---------------------------------------------------------------------------
// ReLU / GlobalMaxPool
// ---------------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, Mode) {
  Tensor y = x;
  mask_.assign(x.numel(), 0);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    if (y.data[i] > 0.0)
      mask_[i] = 1;
    else
      y.data[i] = 0.0;  // subgradient at 0 is 0
  }
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  require(grad_out.numel() == mask_.size(), "relu backward shape mismatch");
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.data.size(); ++i)
    if (!mask_[i]) dx.data[i] = 0.0;
  return dx;
}

Tensor GlobalMaxPool::forward(const Tensor& x, Mode) {
  require(x.rank() == 3 && x.dim(2) >= 1, "global max pool expects batch x channels x time");
  batch_ = x.dim(0);
  channels_ = x.dim(1);
  time_ = x.dim(2);
  Tensor y({batch_, channels_});
  argmax_.resize(batch_ * channels_);
  for (std::size_t b = 0; b < batch_; ++b) {
    for (std::size_t c = 0; c < channels_; ++c) {
      const double* xs = &x.at(b, c, 0);
      const std::size_t am = kernels::argmax(xs, time_);
      argmax_[b * channels_ + c] = am;
      y.at(b, c) = xs[am];
    }
  }
  return y;
}

Tensor GlobalMaxPool::backward(const Tensor& grad_out) {
  require(grad_out.rank() == 2 && grad_out.dim(0) == batch_ && grad_out.dim(1) == channels_,
          "global max pool backward shape mismatch");
  Tensor dx({batch_, channels_, time_});
  for (std::size_t b = 0; b < batch_; ++b)
    for (std::size_t c = 0; c < channels_; ++c)
      dx.at(b, c, argmax_[b * channels_ + c]) = grad_out.at(b, c);
  return dx;
}

// ---------------------------------------------------------------------------
// TimestepEmbedding
// ---------------------------------------------------------------------------

TimestepEmbedding::TimestepEmbedding(std::size_t c_in, std::size_t embed, bool positional,
                                     Rng& rng)
    : positional_(positional) {
  weight.reshape({embed, c_in});
  bias.reshape({embed});
  he_uniform(weight, c_in, rng);
}

void TimestepEmbedding::build_encoding(std::size_t t, std::size_t e) {
  if (encoded_steps_ == t) return;
  encoding_.assign(t * e, 0.0);
  for (std::size_t s = 0; s < t; ++s) {
    for (std::size_t i = 0; i * 2 < e; ++i) {
      const double rate = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(e));
      encoding_[s * e + 2 * i] = std::sin(static_cast<double>(s) * rate);
      if (2 * i + 1 < e) encoding_[s * e + 2 * i + 1] = std::cos(static_cast<double>(s) * rate);
    }
  }
  encoded_steps_ = t;
}

Tensor TimestepEmbedding::forward(const Tensor& x, Mode) {
  require(x.rank() == 3 && x.dim(1) == weight.dim(1),
          "embedding shape mismatch: input channels " + std::to_string(x.dim(1)) +
              ", expected " + std::to_string(weight.dim(1)));
  x_ = x;
  const std::size_t batch = x.dim(0), c = x.dim(1), t = x.dim(2), e = weight.dim(0);
  if (positional_) build_encoding(t, e);
  Tensor y({batch, t, e});
  std::vector<double> xt(c);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < t; ++s) {
      for (std::size_t ci = 0; ci < c; ++ci) xt[ci] = x.at(b, ci, s);
      double* yo = &y.at(b, s, 0);
      for (std::size_t j = 0; j < e; ++j) yo[j] = kernels::dot(weight.row2(j), xt.data(), c) + bias.at(j);
      if (positional_) kernels::axpy(1.0, &encoding_[s * e], yo, e);
    }
  }
  return y;
}

Tensor TimestepEmbedding::backward(const Tensor& grad_out) {
  const std::size_t batch = x_.dim(0), c = x_.dim(1), t = x_.dim(2), e = weight.dim(0);
  require(grad_out.rank() == 3 && grad_out.dim(0) == batch && grad_out.dim(1) == t &&
              grad_out.dim(2) == e,
          "embedding backward shape mismatch");
  Tensor dx({batch, c, t});
  std::vector<double> xt(c);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < t; ++s) {
      const double* go = &grad_out.at(b, s, 0);
      for (std::size_t ci = 0; ci < c; ++ci) xt[ci] = x_.at(b, ci, s);
      for (std::size_t j = 0; j < e; ++j) {
        const double g = go[j];
        if (g == 0.0) continue;
        bias.grad[j] += g;
        kernels::axpy(g, xt.data(), weight.grad.data() + j * c, c);
        for (std::size_t ci = 0; ci < c; ++ci) dx.at(b, ci, s) += g * weight.at(j, ci);
      }
    }
  }
  return dx;
}

void TimestepEmbedding::register_params(const std::string& prefix, ParamSet& out) {
  out.add(prefix + ".weight", &weight);
  out.add(prefix + ".bias", &bias);
}

// ---------------------------------------------------------------------------
// TemporalAttention
// ---------------------------------------------------------------------------

TemporalAttention::TemporalAttention(std::size_t embed, std::size_t heads, std::size_t key_dim,
                                     Rng& rng)
    : heads_(heads), key_dim_(key_dim), slice_(embed / heads) {
  require(heads >= 1, "need at least one attention head");
  require(embed % heads == 0, "embedding size " + std::to_string(embed) +
                                  " not divisible by " + std::to_string(heads) + " heads");
  query.reshape({heads, key_dim});
  key_proj.reshape({heads, key_dim, slice_});
  he_uniform(query, key_dim, rng);
  he_uniform(key_proj, slice_, rng);
}

Tensor TemporalAttention::forward(const Tensor& x, Mode) {
  require(x.rank() == 3 && x.dim(2) == heads_ * slice_, "attention embedding size mismatch");
  x_ = x;
  const std::size_t batch = x.dim(0), t = x.dim(1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(key_dim_));
  keys_.assign(batch * heads_ * t * key_dim_, 0.0);
  attn_.assign(batch * heads_ * t, 0.0);
  Tensor y({batch, heads_ * slice_});
  std::vector<double> score(t);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads_; ++h) {
      for (std::size_t s = 0; s < t; ++s) {
        const double* sl = &x.at(b, s, h * slice_);
        double* k = &keys_[((b * heads_ + h) * t + s) * key_dim_];
        for (std::size_t d = 0; d < key_dim_; ++d)
          k[d] = kernels::dot(&key_proj.at(h, d, 0), sl, slice_);
        score[s] = kernels::dot(&query.at(h, 0), k, key_dim_) * scale;
      }
      // softmax over time
      double m = score[0];
      for (std::size_t s = 1; s < t; ++s) m = std::max(m, score[s]);
      double z = 0.0;
      double* a = &attn_[(b * heads_ + h) * t];
      for (std::size_t s = 0; s < t; ++s) {
        a[s] = std::exp(score[s] - m);
        z += a[s];
      }
      double* out = &y.at(b, h * slice_);
      for (std::size_t s = 0; s < t; ++s) {
        a[s] /= z;
        kernels::axpy(a[s], &x.at(b, s, h * slice_), out, slice_);
      }
    }
  }
  return y;
}

Tensor TemporalAttention::backward(const Tensor& grad_out) {
  const std::size_t batch = x_.dim(0), t = x_.dim(1);
  require(grad_out.rank() == 2 && grad_out.dim(0) == batch &&
              grad_out.dim(1) == heads_ * slice_,
          "attention backward shape mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(key_dim_));
  Tensor dx({batch, t, heads_ * slice_});
  std::vector<double> da(t), dscore(t), dk(key_dim_);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads_; ++h) {
      const double* a = &attn_[(b * heads_ + h) * t];
      const double* dhead = &grad_out.at(b, h * slice_);
      double dot_a_da = 0.0;
      for (std::size_t s = 0; s < t; ++s) {
        da[s] = kernels::dot(dhead, &x_.at(b, s, h * slice_), slice_);
        kernels::axpy(a[s], dhead, &dx.at(b, s, h * slice_), slice_);
        dot_a_da += a[s] * da[s];
      }
      for (std::size_t s = 0; s < t; ++s) dscore[s] = a[s] * (da[s] - dot_a_da);
      for (std::size_t s = 0; s < t; ++s) {
        if (dscore[s] == 0.0) continue;
        const double* k = &keys_[((b * heads_ + h) * t + s) * key_dim_];
        kernels::axpy(dscore[s] * scale, k, query.grad.data() + h * key_dim_, key_dim_);
        for (std::size_t d = 0; d < key_dim_; ++d) dk[d] = dscore[s] * scale * query.at(h, d);
        const double* sl = &x_.at(b, s, h * slice_);
        double* dsl = &dx.at(b, s, h * slice_);
        for (std::size_t d = 0; d < key_dim_; ++d) {
          kernels::axpy(dk[d], sl, key_proj.grad.data() + (h * key_dim_ + d) * slice_, slice_);
          kernels::axpy(dk[d], &key_proj.at(h, d, 0), dsl, slice_);
        }
      }
    }
  }
  return dx;
}

void TemporalAttention::register_params(const std::string& prefix, ParamSet& out) {
  out.add(prefix + ".query", &query);
  out.add(prefix + ".key_proj", &key_proj);
}

// ---------------------------------------------------------------------------
// Loss / softmax
// ---------------------------------------------------------------------------

LossResult weighted_cross_entropy(const Tensor& logits, std::span<const int> labels,
                                  std::span<const double> class_weights) {
  require(logits.rank() == 2, "logits must be batch x classes");
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  require(labels.size() == batch, "label count does not match batch");
  require(class_weights.size() == k, "class weight count does not match classes");

  LossResult res;
  res.dlogits.reshape({batch, k});
  double weighted_nll = 0.0, weight_total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    check_finite_label(labels[i], k);
    const double w = class_weights[static_cast<std::size_t>(labels[i])];
    require(w > 0.0, "class weight for label " + std::to_string(labels[i]) + " must be > 0");
    const double* l = logits.row2(i);
    double m = l[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, l[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(l[j] - m);
    const double lse = m + std::log(z);
    weighted_nll += w * (lse - l[static_cast<std::size_t>(labels[i])]);
    weight_total += w;
    double* d = res.dlogits.row2(i);
    for (std::size_t j = 0; j < k; ++j) d[j] = w * std::exp(l[j] - lse);
    d[static_cast<std::size_t>(labels[i])] -= w;
  }
  res.value = weighted_nll / weight_total;
  res.weight_total = weight_total;
  for (auto& g : res.dlogits.data) g /= weight_total;
  return res;
}

Tensor softmax(const Tensor& logits) {
  require(logits.rank() == 2, "logits must be batch x classes");
  Tensor p = logits;
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  for (std::size_t i = 0; i < batch; ++i) {
    double* row = p.row2(i);
    double m = row[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - m);
      z += row[j];
    }
    for (std::size_t j = 0; j < k; ++j) row[j] /= z;
  }
  return p;
}

}  // namespace sits::nn
