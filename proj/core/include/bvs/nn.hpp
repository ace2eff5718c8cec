#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bvs/common.hpp"

namespace bvs::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Trainable tensor with its gradient accumulator (biases are n x 1).
template <typename S>
struct Param {
  Mat<S> value;
  Mat<S> grad;

  Param() = default;
  Param(Eigen::Index rows, Eigen::Index cols)
      : value(Mat<S>::Zero(rows, cols)), grad(Mat<S>::Zero(rows, cols)) {}
  void zero_grad() { grad.setZero(); }
};

template <typename S>
struct NamedParam {
  std::string name;
  Param<S>* param;
};

template <typename S>
using ParamList = std::vector<NamedParam<S>>;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
template <typename S>
void init_fan_in(Param<S>& p, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<S>(u(rng));
}

template <typename S>
void zero_grads(const ParamList<S>& params) {
  for (auto& p : params) p.param->zero_grad();
}

template <typename S>
double grad_norm(const ParamList<S>& params) {
  double sq = 0.0;
  for (const auto& p : params) sq += static_cast<double>(p.param->grad.squaredNorm());
  return std::sqrt(sq);
}

/// Rescales all gradients jointly so their global L2 norm is <= max_norm.
/// Returns the norm before clipping.
template <typename S>
double clip_grad_norm(const ParamList<S>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const S scale = static_cast<S>(max_norm / (norm + 1e-12));
    for (auto& p : params) p.param->grad *= scale;
  }
  return norm;
}

template <typename S>
bool grads_finite(const ParamList<S>& params) {
  for (const auto& p : params) {
    if (!p.param->grad.allFinite()) return false;
  }
  return true;
}

/// target <- tau * online + (1 - tau) * target, parameter by parameter.
template <typename S>
void polyak_update(const ParamList<S>& target, const ParamList<S>& online, double tau) {
  for (std::size_t i = 0; i < target.size(); ++i) {
    target[i].param->value = static_cast<S>(tau) * online[i].param->value +
                             static_cast<S>(1.0 - tau) * target[i].param->value;
  }
}

template <typename S>
void copy_values(const ParamList<S>& dst, const ParamList<S>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].param->value = src[i].param->value;
}

/// Adam without weight decay (AdamW with decay 0).
template <typename S>
class Adam {
 public:
  Adam(ParamList<S> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.push_back(Mat<S>::Zero(p.param->value.rows(), p.param->value.cols()));
      v_.push_back(Mat<S>::Zero(p.param->value.rows(), p.param->value.cols()));
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const S step_size = static_cast<S>(lr_ / c1);
    const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
    const S inv_c2 = static_cast<S>(1.0 / c2), eps = static_cast<S>(eps_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& g = params_[i].param->grad;
      m_[i] = b1 * m_[i] + (S(1) - b1) * g;
      v_[i] = b2 * v_[i] + (S(1) - b2) * g.cwiseAbs2();
      params_[i].param->value.array() -=
          step_size * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
    }
  }

  const ParamList<S>& params() const { return params_; }
  long steps() const { return t_; }
  double learning_rate() const { return lr_; }

 private:
  ParamList<S> params_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

/// Dense affine map y = W x + b over column batches.
template <typename S>
struct Linear {
  Param<S> weight;
  Param<S> bias;

  Linear() = default;
  Linear(int in, int out) : weight(out, in), bias(out, 1) {}

  int in_features() const { return static_cast<int>(weight.value.cols()); }
  int out_features() const { return static_cast<int>(weight.value.rows()); }

  void init(Rng& rng) {
    init_fan_in(weight, in_features(), rng);
    init_fan_in(bias, in_features(), rng);
  }

  Mat<S> forward(const Mat<S>& x) const {
    Mat<S> y = weight.value * x;
    y.colwise() += bias.value.col(0);
    return y;
  }

  /// Accumulates parameter gradients; returns dL/dx.
  Mat<S> backward(const Mat<S>& x, const Mat<S>& grad_y) {
    weight.grad.noalias() += grad_y * x.transpose();
    bias.grad.col(0) += grad_y.rowwise().sum();
    return weight.value.transpose() * grad_y;
  }

  void append_params(ParamList<S>& list, const std::string& prefix) {
    list.push_back({prefix + ".weight", &weight});
    list.push_back({prefix + ".bias", &bias});
  }
};

template <typename S>
Mat<S> leaky_relu(const Mat<S>& x, S slope) {
  return x.unaryExpr([slope](S v) { return v > S(0) ? v : slope * v; });
}

template <typename S>
Mat<S> leaky_relu_backward(const Mat<S>& x, const Mat<S>& grad, S slope) {
  return grad.binaryExpr(x, [slope](S g, S v) { return v > S(0) ? g : slope * g; });
}

}  // namespace bvs::nn
