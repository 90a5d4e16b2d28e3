#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <limits>
#include <vector>

namespace duetml {

template <typename Scalar>
struct SvmParams {
  Scalar C = Scalar(1);
  Scalar tolerance = Scalar(1e-4);
  int max_iter = 10000;  // sweeps; one sweep is n pair updates
};

template <typename Scalar>
struct BinarySvm {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector weights;
  Scalar bias = Scalar(0);
  Vector alpha;
  int sweeps = 0;
  bool converged = false;
  std::vector<Scalar> dual_trace;  // dual objective after every sweep

  template <typename Derived>
  Scalar decision(const Eigen::MatrixBase<Derived>& x) const {
    return weights.dot(x) + bias;
  }
};

/// Dual of the soft-margin linear SVM with an unregularised bias:
///
///   max  sum(alpha) - 1/2 alpha' Q alpha,   Q_ij = y_i y_j <x_i, x_j>
///   s.t. 0 <= alpha_i <= C,  sum(y_i alpha_i) = 0
///
/// solved by coordinate descent on pairs (i, j) so the equality constraint
/// survives every step. The pair is the maximal KKT violator; ties resolve to
/// the lowest index, so the result is a pure function of the sample order.
/// Stops when the violation gap drops below `tolerance` or after
/// `max_iter` sweeps.
///
/// `samples` holds one sample per row; `labels` are +1 / -1.
template <typename Scalar, typename DerivedX, typename DerivedY>
BinarySvm<Scalar> train_binary_svm(const Eigen::MatrixBase<DerivedX>& samples,
                                   const Eigen::MatrixBase<DerivedY>& labels,
                                   const SvmParams<Scalar>& params) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = samples.rows();
  const Scalar C = params.C;
  constexpr Scalar kTau = Scalar(1e-12);

  const Matrix X = samples.template cast<Scalar>();
  const Vector y = labels.template cast<Scalar>();
  const Matrix K = X * X.transpose();

  BinarySvm<Scalar> out;
  Vector alpha = Vector::Zero(n);
  Vector grad = -Vector::Ones(n);  // gradient of 1/2 a'Qa - e'a

  auto in_up = [&](Eigen::Index t) {
    return (y[t] > 0 && alpha[t] < C) || (y[t] < 0 && alpha[t] > 0);
  };
  auto in_low = [&](Eigen::Index t) {
    return (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < C);
  };
  auto dual_objective = [&]() { return -Scalar(0.5) * alpha.dot(grad - Vector::Ones(n)); };

  [[maybe_unused]] Scalar previous = Scalar(0);
  const Eigen::Index updates_per_sweep = std::max<Eigen::Index>(n, 1);
  for (int sweep = 0; sweep < params.max_iter && !out.converged; ++sweep) {
    for (Eigen::Index step = 0; step < updates_per_sweep; ++step) {
      Eigen::Index i = -1, j = -1;
      Scalar gmax = -std::numeric_limits<Scalar>::infinity();
      Scalar gmin = std::numeric_limits<Scalar>::infinity();
      for (Eigen::Index t = 0; t < n; ++t) {
        const Scalar v = -y[t] * grad[t];
        if (in_up(t) && v > gmax) {
          gmax = v;
          i = t;
        }
        if (in_low(t) && v < gmin) {
          gmin = v;
          j = t;
        }
      }
      if (i < 0 || j < 0 || gmax - gmin < params.tolerance) {
        out.converged = true;
        break;
      }

      const Scalar curvature = std::max(K(i, i) + K(j, j) - 2 * K(i, j), kTau);
      Scalar t = (gmax - gmin) / curvature;
      t = std::min(t, y[i] > 0 ? C - alpha[i] : alpha[i]);
      t = std::min(t, y[j] > 0 ? alpha[j] : C - alpha[j]);

      alpha[i] += y[i] * t;
      alpha[j] -= y[j] * t;
      grad += t * y.cwiseProduct(K.col(i) - K.col(j));

#ifndef NDEBUG
      const Scalar current = dual_objective();
      assert(current >= previous - Scalar(1e-9) * (Scalar(1) + std::abs(previous)));
      previous = current;
#endif
    }
    out.dual_trace.push_back(dual_objective());
    out.sweeps = sweep + 1;
  }

  // Bias from the free support vectors, or the midpoint of the feasible
  // interval when every multiplier sits at a bound.
  Scalar upper = std::numeric_limits<Scalar>::infinity();
  Scalar lower = -std::numeric_limits<Scalar>::infinity();
  Scalar free_sum = 0;
  Eigen::Index free_count = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const Scalar yg = y[t] * grad[t];
    const bool at_upper = alpha[t] >= C;
    const bool at_lower = alpha[t] <= 0;
    if (at_upper) {
      if (y[t] < 0) upper = std::min(upper, yg);
      else lower = std::max(lower, yg);
    } else if (at_lower) {
      if (y[t] > 0) upper = std::min(upper, yg);
      else lower = std::max(lower, yg);
    } else {
      free_sum += yg;
      ++free_count;
    }
  }
  Scalar rho = 0;
  if (free_count > 0) rho = free_sum / Scalar(free_count);
  else if (std::isfinite(upper) && std::isfinite(lower)) rho = (upper + lower) / 2;
  else if (std::isfinite(upper)) rho = upper;
  else if (std::isfinite(lower)) rho = lower;

  out.weights = X.transpose() * alpha.cwiseProduct(y);
  out.bias = -rho;
  out.alpha = std::move(alpha);
  return out;
}

}  // namespace duetml
