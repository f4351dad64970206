#include "conceptlab/nn_core.hpp"

#include <algorithm>
#include <numbers>

namespace conceptlab {

void LrSchedule::validate() const {
  require(base_lr > 0.0, "learning rate must be > 0");
  if (kind == ScheduleKind::cosine) {
    require(min_lr > 0.0 && min_lr <= base_lr, "cosine schedule needs 0 < min_lr <= base_lr");
    require(cycle_epochs >= 1, "cosine schedule needs cycle_epochs >= 1");
  }
}

double cosine_lr(const LrSchedule& schedule, int epoch) {
  require(epoch >= 0, "cosine_lr: epoch must be >= 0");
  if (schedule.kind == ScheduleKind::constant) return schedule.base_lr;
  const double phase = static_cast<double>(epoch % schedule.cycle_epochs) / schedule.cycle_epochs;
  const double lr = schedule.min_lr +
                    0.5 * (schedule.base_lr - schedule.min_lr) * (1.0 + std::cos(std::numbers::pi * phase));
  return std::clamp(lr, schedule.min_lr, schedule.base_lr);
}

GradCheckResult grad_check(const FlatLoss& loss, const Eigen::VectorXd& params, const GradCheckOptions& options) {
  require(params.size() > 0, "grad_check: no parameters");
  require(options.eps > 0.0, "grad_check: eps must be > 0");
  const auto [value, analytic] = loss(params);
  require(std::isfinite(value), "grad_check: non-finite loss");
  require(analytic.size() == params.size(), "grad_check: gradient length mismatch");

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, params.size() - 1);
  GradCheckResult result;
  Eigen::VectorXd probe = params;
  for (int p = 0; p < options.probe_count; ++p) {
    Eigen::Index j = pick(rng);
    for (int tries = 0; options.avoid_kinks && std::abs(params(j)) < 10 * options.eps && tries < 1000; ++tries)
      j = pick(rng);
    probe(j) = params(j) + options.eps;
    const double up = loss(probe).first;
    probe(j) = params(j) - options.eps;
    const double down = loss(probe).first;
    probe(j) = params(j);
    require(std::isfinite(up) && std::isfinite(down), "grad_check: non-finite loss");
    const double numeric = (up - down) / (2 * options.eps);
    const double denom = std::max({std::abs(analytic(j)), std::abs(numeric), 1e-8});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic(j) - numeric) / denom);
    result.probes.push_back(j);
  }
  return result;
}

}  // namespace conceptlab
