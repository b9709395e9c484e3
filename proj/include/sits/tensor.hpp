#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "sits/common.hpp"

namespace sits::nn {

/// Dense 64-bit tensor of rank 1..3 with a gradient slot of the same shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::initializer_list<std::size_t> shape) { reshape(shape); }

  void reshape(std::initializer_list<std::size_t> shape) {
    require(shape.size() >= 1 && shape.size() <= 3, "tensor rank must be 1..3");
    rank_ = shape.size();
    std::size_t n = 1;
    std::size_t i = 0;
    for (std::size_t d : shape) {
      dims_[i++] = d;
      n *= d;
    }
    data.assign(n, 0.0);
    grad.assign(n, 0.0);
  }

  std::size_t rank() const { return rank_; }
  std::size_t dim(std::size_t i) const { return dims_[i]; }
  std::size_t numel() const { return data.size(); }

  double& at(std::size_t i) { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * dims_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * dims_[1] + j) * dims_[2] + k];
  }
  const double& at(std::size_t i) const { return data[i]; }
  const double& at(std::size_t i, std::size_t j) const { return data[i * dims_[1] + j]; }
  const double& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * dims_[1] + j) * dims_[2] + k];
  }

  double* row2(std::size_t i) { return data.data() + i * dims_[1]; }
  const double* row2(std::size_t i) const { return data.data() + i * dims_[1]; }
  double* grad_row2(std::size_t i) { return grad.data() + i * dims_[1]; }
  const double* grad_row2(std::size_t i) const { return grad.data() + i * dims_[1]; }

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
  bool same_shape(const Tensor& o) const { return rank_ == o.rank_ && dims_ == o.dims_; }

  std::vector<double> data;
  std::vector<double> grad;

 private:
  std::size_t rank_ = 0;
  std::array<std::size_t, 3> dims_{0, 0, 0};
};

}  // namespace sits::nn
