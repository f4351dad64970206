#pragma once

// Dense layers, losses and optimizers with hand-written gradients. Every
// function is templated on the scalar type; training uses double.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "conceptlab/error.hpp"

namespace conceptlab {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

namespace detail {
inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}
}  // namespace detail

// y = x W^T + b, weight is out x in.
template <typename Scalar>
struct DenseParams {
  Mat<Scalar> weight;
  Vec<Scalar> bias;

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }

  // Uniform in +-1/sqrt(fan_in).
  template <typename Rng>
  static DenseParams init_uniform(Eigen::Index out, Eigen::Index in, Rng& rng) {
    const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(in));
    std::uniform_real_distribution<Scalar> u(-bound, bound);
    DenseParams p{Mat<Scalar>(out, in), Vec<Scalar>(out)};
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) p.weight(r, c) = u(rng);
    for (Eigen::Index r = 0; r < out; ++r) p.bias(r) = u(rng);
    return p;
  }

  bool operator==(const DenseParams&) const = default;
};

template <typename Scalar>
struct DenseGrads {
  Mat<Scalar> weight;
  Vec<Scalar> bias;
  Mat<Scalar> input;  // gradient wrt the layer input
};

template <typename Scalar, typename Derived>
Mat<Scalar> dense_forward(const DenseParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x) {
  require(x.cols() == p.in(), "dense_forward: input is " + detail::shape_str(x.rows(), x.cols()) +
                                  ", layer expects " + std::to_string(p.in()) + " columns");
  require(p.bias.size() == p.out(), "dense_forward: bias length mismatch");
  Mat<Scalar> y = x * p.weight.transpose();
  y.rowwise() += p.bias.transpose();
  return y;
}

template <typename Scalar, typename DX, typename DY>
DenseGrads<Scalar> dense_backward(const DenseParams<Scalar>& p, const Eigen::MatrixBase<DX>& x,
                                  const Eigen::MatrixBase<DY>& grad_out) {
  require(grad_out.cols() == p.out() && grad_out.rows() == x.rows(), "dense_backward: shape mismatch");
  return {grad_out.transpose() * x, grad_out.colwise().sum().transpose(), grad_out * p.weight};
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

// Gradient of relu given its pre-activation; the derivative at 0 is 0.
template <typename DP, typename DG>
auto relu_backward(const Eigen::MatrixBase<DP>& pre, const Eigen::MatrixBase<DG>& grad) {
  using Scalar = typename DP::Scalar;
  return (pre.array() > Scalar(0)).template cast<Scalar>().matrix().cwiseProduct(grad);
}

template <typename Scalar>
struct LossResult {
  Scalar value;
  Mat<Scalar> grad;
};

/// Mean over rows of the squared L2 distance.
template <typename D1, typename D2>
LossResult<typename D1::Scalar> mse_loss(const Eigen::MatrixBase<D1>& pred, const Eigen::MatrixBase<D2>& target) {
  using Scalar = typename D1::Scalar;
  require(pred.rows() == target.rows() && pred.cols() == target.cols(),
          "mse_loss: shape mismatch " + detail::shape_str(pred.rows(), pred.cols()) + " vs " +
              detail::shape_str(target.rows(), target.cols()));
  require(pred.rows() > 0, "mse_loss: empty batch");
  const Scalar b = static_cast<Scalar>(pred.rows());
  Mat<Scalar> diff = pred - target;
  return {diff.squaredNorm() / b, (Scalar(2) / b) * diff};
}

// Row-wise log-softmax with max shift.
template <typename Derived>
Mat<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Mat<Scalar> out = logits;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Scalar m = out.row(i).maxCoeff();
    out.row(i).array() -= m;
    const Scalar lse = std::log(out.row(i).array().exp().sum());
    out.row(i).array() -= lse;
  }
  return out;
}

template <typename Derived>
Mat<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  return log_softmax_rows(logits).array().exp().matrix();
}

/// Batch mean of -ln softmax(logits_i)[y_i].
template <typename Derived>
LossResult<typename Derived::Scalar> ce_loss(const Eigen::MatrixBase<Derived>& logits,
                                             std::span<const std::uint32_t> labels) {
  using Scalar = typename Derived::Scalar;
  require(static_cast<Eigen::Index>(labels.size()) == logits.rows(), "ce_loss: label count mismatch");
  require(logits.rows() > 0, "ce_loss: empty batch");
  const Mat<Scalar> logp = log_softmax_rows(logits);
  const Scalar b = static_cast<Scalar>(logits.rows());
  Mat<Scalar> grad = logp.array().exp().matrix();
  Scalar loss = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto y = labels[static_cast<std::size_t>(i)];
    require(y < static_cast<std::uint32_t>(logits.cols()), "ce_loss: label out of range: " + std::to_string(y));
    loss -= logp(i, y);
    grad(i, y) -= Scalar(1);
  }
  return {loss / b, grad / b};
}

/// lambda * sum|w| + (1 - lambda) * sum w^2; the subgradient of |w| at 0 is 0.
template <typename Derived>
LossResult<typename Derived::Scalar> elastic_penalty(const Eigen::MatrixBase<Derived>& w,
                                                     typename Derived::Scalar lambda) {
  using Scalar = typename Derived::Scalar;
  require(lambda >= Scalar(0) && lambda <= Scalar(1), "elastic_penalty: lambda must be in [0, 1]");
  const Scalar value = lambda * w.cwiseAbs().sum() + (Scalar(1) - lambda) * w.squaredNorm();
  Mat<Scalar> grad = lambda * w.unaryExpr([](Scalar v) { return Scalar((v > 0) - (v < 0)); }) +
                     (Scalar(2) * (Scalar(1) - lambda)) * w;
  return {value, grad};
}

/// T^2 * batch mean of KL(softmax(teacher/T) || softmax(student/T)).
/// Teacher logits are constants; the gradient is wrt the student only.
template <typename D1, typename D2>
LossResult<typename D1::Scalar> kd_loss(const Eigen::MatrixBase<D1>& student, const Eigen::MatrixBase<D2>& teacher,
                                        typename D1::Scalar temperature) {
  using Scalar = typename D1::Scalar;
  require(temperature > Scalar(0), "kd_loss: temperature must be > 0");
  require(student.rows() == teacher.rows() && student.cols() == teacher.cols(), "kd_loss: shape mismatch");
  require(student.rows() > 0, "kd_loss: empty batch");
  const Mat<Scalar> log_q = log_softmax_rows(student / temperature);
  const Mat<Scalar> log_p = log_softmax_rows(teacher.template cast<Scalar>() / temperature);
  const Mat<Scalar> p = log_p.array().exp().matrix();
  const Scalar b = static_cast<Scalar>(student.rows());
  const Scalar t2 = temperature * temperature;
  Scalar kl = (p.array() * (log_p - log_q).array()).sum();
  kl = std::max(kl, Scalar(0));
  Mat<Scalar> grad = (temperature / b) * (log_q.array().exp().matrix() - p);
  return {t2 * kl / b, grad};
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  Mat<Scalar> m;
  Mat<Scalar> v;
  std::int64_t step = 0;
  AdamConfig config;

  static AdamState zeros_like(const Mat<Scalar>& p, AdamConfig config = {}) {
    return {Mat<Scalar>::Zero(p.rows(), p.cols()), Mat<Scalar>::Zero(p.rows(), p.cols()), 0, config};
  }
};

/// Bias-corrected Adam update of `param` in place.
template <typename Scalar, typename DP, typename DG>
void adam_step(AdamState<Scalar>& state, Eigen::MatrixBase<DP>& param, const Eigen::MatrixBase<DG>& grad,
               Scalar lr) {
  require(param.rows() == grad.rows() && param.cols() == grad.cols() && state.m.rows() == param.rows() &&
              state.m.cols() == param.cols(),
          "adam_step: shape mismatch");
  const auto b1 = static_cast<Scalar>(state.config.beta1);
  const auto b2 = static_cast<Scalar>(state.config.beta2);
  const auto eps = static_cast<Scalar>(state.config.eps);
  ++state.step;
  state.m = b1 * state.m + (Scalar(1) - b1) * grad;
  state.v = b2 * state.v + (Scalar(1) - b2) * grad.cwiseAbs2();
  const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(state.step));
  const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(state.step));
  param -= (lr * (state.m / c1).array() / ((state.v / c2).array().sqrt() + eps)).matrix();
}

// Adam moments for one dense layer.
template <typename Scalar>
struct DenseAdam {
  AdamState<Scalar> weight;
  AdamState<Scalar> bias;

  static DenseAdam for_params(const DenseParams<Scalar>& p, AdamConfig config = {}) {
    Mat<Scalar> b = p.bias;
    return {AdamState<Scalar>::zeros_like(p.weight, config), AdamState<Scalar>::zeros_like(b, config)};
  }

  void apply(DenseParams<Scalar>& p, const DenseGrads<Scalar>& g, Scalar lr) {
    adam_step(weight, p.weight, g.weight, lr);
    Mat<Scalar> bias_col = p.bias;
    adam_step(bias, bias_col, Mat<Scalar>(g.bias), lr);
    p.bias = bias_col;
  }
};

enum class ScheduleKind { constant, cosine };

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double base_lr = 1e-3;
  double min_lr = 1e-4;
  int cycle_epochs = 20;

  void validate() const;
};

/// Cosine annealing with warm restarts every cycle_epochs.
double cosine_lr(const LrSchedule& schedule, int epoch);

struct GradCheckOptions {
  int probe_count = 50;
  double eps = 1e-5;
  std::uint64_t seed = 0;
  // Resample probes that land within 10 * eps of zero (for l1-bearing
  // parameters, where the loss has a kink at zero).
  bool avoid_kinks = false;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::vector<Eigen::Index> probes;
};

// Loss and its analytic gradient over a flat parameter vector.
using FlatLoss = std::function<std::pair<double, Eigen::VectorXd>(const Eigen::VectorXd&)>;

/// Central differences on random coordinates against the analytic
/// gradient; relative error uses max(|analytic|, |numeric|, 1e-8).
GradCheckResult grad_check(const FlatLoss& loss, const Eigen::VectorXd& params, const GradCheckOptions& options = {});

}  // namespace conceptlab
