#pragma once

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ccad/rng.hpp"

namespace ccad {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Trainable array with its gradient accumulator and optimizer state.
template <class T>
struct Param {
  std::string name;
  MatR<T> value;
  MatR<T> grad;
  MatR<T> velocity;       // first moment (momentum buffer)
  MatR<T> second_moment;  // Adam only
  long steps = 0;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
    velocity.setZero(rows, cols);
    second_moment.setZero(rows, cols);
    steps = 0;
  }
  void zero_grad() { grad.setZero(); }
};

/// Planar feature map, channels x (height * width).
template <class T>
struct Feature {
  int channels = 0, height = 0, width = 0;
  MatR<T> data;

  Feature() = default;
  Feature(int c, int h, int w) : channels(c), height(h), width(w), data(MatR<T>::Zero(c, h * w)) {}
  int spatial() const { return height * width; }
};

/**
 * @brief Square-kernel 2-D convolution with "same"-style padding (k / 2).
 *
 * Lowered to a GEMM over an im2col matrix whose rows are ordered
 * (channel, ky, kx) and whose columns are output positions.
 */
template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride)
      : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), stride_(stride) {
    weight.name = name + ".weight";
    bias.name = name + ".bias";
    weight.resize(out_channels, in_channels * kernel * kernel);
    bias.resize(out_channels, 1);
  }

  Param<T> weight;
  Param<T> bias;

  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  int fan_in() const { return in_channels_ * kernel_ * kernel_; }
  int out_size(int in) const { return (in + 2 * (kernel_ / 2) - kernel_) / stride_ + 1; }

  void init_he(Rng& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in()));
    for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = static_cast<T>(dist(rng));
    bias.value.setZero();
  }

  void init_normal(Rng& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = static_cast<T>(dist(rng));
  }

  MatR<T> im2col(const Feature<T>& in) const {
    const int pad = kernel_ / 2;
    const int oh = out_size(in.height), ow = out_size(in.width);
    MatR<T> cols = MatR<T>::Zero(fan_in(), oh * ow);
    for (int c = 0; c < in.channels; ++c)
      for (int ky = 0; ky < kernel_; ++ky)
        for (int kx = 0; kx < kernel_; ++kx) {
          T* row = cols.row((c * kernel_ + ky) * kernel_ + kx).data();
          const T* plane = in.data.row(c).data();
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - pad + ky;
            if (iy < 0 || iy >= in.height) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - pad + kx;
              if (ix >= 0 && ix < in.width) row[oy * ow + ox] = plane[iy * in.width + ix];
            }
          }
        }
    return cols;
  }

  void col2im(const MatR<T>& grad_cols, Feature<T>& grad_in) const {
    const int pad = kernel_ / 2;
    const int oh = out_size(grad_in.height), ow = out_size(grad_in.width);
    for (int c = 0; c < grad_in.channels; ++c)
      for (int ky = 0; ky < kernel_; ++ky)
        for (int kx = 0; kx < kernel_; ++kx) {
          const T* row = grad_cols.row((c * kernel_ + ky) * kernel_ + kx).data();
          T* plane = grad_in.data.row(c).data();
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - pad + ky;
            if (iy < 0 || iy >= grad_in.height) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - pad + kx;
              if (ix >= 0 && ix < grad_in.width) plane[iy * grad_in.width + ix] += row[oy * ow + ox];
            }
          }
        }
  }

  /// Linear response on a precomputed im2col matrix: out_channels x positions.
  MatR<T> apply(const MatR<T>& cols) const {
    MatR<T> out = weight.value * cols;
    out.colwise() += bias.value.col(0);
    return out;
  }

  Feature<T> forward(const Feature<T>& in, MatR<T>* cols_out = nullptr) const {
    MatR<T> cols = im2col(in);
    Feature<T> out;
    out.channels = out_channels_;
    out.height = out_size(in.height);
    out.width = out_size(in.width);
    out.data = apply(cols);
    if (cols_out) *cols_out = std::move(cols);
    return out;
  }

  /// Accumulates weight and bias gradients for one input.
  void backward_params(const MatR<T>& cols, const MatR<T>& grad_out) {
    weight.grad.noalias() += grad_out * cols.transpose();
    bias.grad.col(0) += grad_out.rowwise().sum();
  }

  MatR<T> backward_input_cols(const MatR<T>& grad_out) const { return weight.value.transpose() * grad_out; }

 private:
  int in_channels_ = 0, out_channels_ = 0, kernel_ = 3, stride_ = 1;
};

template <class T>
void relu_inplace(Feature<T>& f) {
  f.data = f.data.cwiseMax(T(0));
}

/// Zeroes gradient entries whose forward activation was clipped by ReLU.
template <class T>
void relu_backward_inplace(const Feature<T>& activated, MatR<T>& grad) {
  grad = (activated.data.array() > T(0)).select(grad, T(0));
}

}  // namespace ccad
