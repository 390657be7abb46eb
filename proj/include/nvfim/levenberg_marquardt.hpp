#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) for small dense problems with
// an analytic Jacobian.

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace nvfim {

struct LmOptions {
  int max_iterations = 200;
  /// Converged when the step is below this relative to the parameter norm.
  double relative_step_tol = 1e-10;
  /// Stall detection: fewer than this relative cost decrease over
  /// stall_window accepted iterations means non-convergence.
  double stall_decrease = 1e-12;
  int stall_window = 50;
  double initial_damping = 1e-3;
};

struct LmResult {
  Eigen::VectorXd params;
  /// (J^T J)^-1 scaled by the residual variance estimate.
  Eigen::MatrixXd covariance;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// `model(params, residuals, jacobian)` fills residuals (size m) and the
/// m x n Jacobian d residual / d params.
template <typename Model>
LmResult levenberg_marquardt(Model&& model, Eigen::VectorXd params,
                             const LmOptions& opt = {}) {
  const Eigen::Index n = params.size();
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  model(params, r, jac);
  double cost = r.squaredNorm();

  double lambda = opt.initial_damping;
  double stall_reference = cost;
  int since_reference = 0;
  LmResult out;

  for (int it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it + 1;
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    if (cost == 0.0 || jtr.norm() == 0.0) {
      out.converged = true;
      break;
    }

    bool accepted = false;
    Eigen::VectorXd step;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::MatrixXd damped = jtj;
      for (Eigen::Index i = 0; i < n; ++i)
        damped(i, i) += lambda * std::max(jtj(i, i), 1e-300);
      step = damped.ldlt().solve(-jtr);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      Eigen::VectorXd trial = params + step;
      Eigen::VectorXd r_trial;
      Eigen::MatrixXd j_trial;
      model(trial, r_trial, j_trial);
      const double trial_cost = r_trial.squaredNorm();
      if (std::isfinite(trial_cost) && trial_cost <= cost) {
        params = std::move(trial);
        r = std::move(r_trial);
        jac = std::move(j_trial);
        cost = trial_cost;
        lambda = std::max(lambda * 0.3, 1e-15);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }

    if (!accepted) {
      // No downhill step at any damping: we are at a (numerical) minimum.
      out.converged = true;
      break;
    }
    if (step.norm() <= opt.relative_step_tol * (params.norm() + opt.relative_step_tol)) {
      out.converged = true;
      break;
    }
    if (++since_reference >= opt.stall_window) {
      if (stall_reference - cost < opt.stall_decrease * stall_reference) break;
      stall_reference = cost;
      since_reference = 0;
    }
  }

  out.params = params;
  out.residual_norm = std::sqrt(cost);
  const Eigen::Index m = r.size();
  const double dof = static_cast<double>(std::max<Eigen::Index>(m - n, 1));
  const double sigma2 = cost / dof;
  const Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
  if (lu.isInvertible()) {
    out.covariance = lu.inverse() * sigma2;
  } else {
    out.covariance = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::infinity());
  }
  return out;
}

}  // namespace nvfim
