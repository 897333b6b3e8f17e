#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace cnext {

enum class ObjectiveKind { Ridge, Logistic };

inline std::string_view to_string(ObjectiveKind k) {
  return k == ObjectiveKind::Ridge ? "ridge" : "logistic";
}

/// One agent's samples: rows of A are features, b holds targets (ridge) or
/// +-1 labels (logistic).
struct LocalData {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;

  std::size_t samples() const { return static_cast<std::size_t>(A.rows()); }
};

struct LocalEval {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

/// f_i(x) = ||A_i x - b_i||^2 + lambda ||x||^2.
inline LocalEval ridge_value_grad_hess(const LocalData& d, double lambda,
                                       const Eigen::VectorXd& x) {
  if (d.A.cols() != x.size() || d.A.rows() != d.b.size())
    throw InvalidArgument("ridge data dimensions do not match");
  const Eigen::VectorXd res = d.A * x - d.b;
  LocalEval e;
  e.value = res.squaredNorm() + lambda * x.squaredNorm();
  e.gradient = 2.0 * d.A.transpose() * res + 2.0 * lambda * x;
  e.hessian = 2.0 * d.A.transpose() * d.A;
  e.hessian.diagonal().array() += 2.0 * lambda;
  return e;
}

namespace detail {

/// log(1 + exp(t)) without overflow.
inline double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace detail

/// f_i(x) = (1/m) sum_j log(1 + exp(-v_j x'u_j)) + (lambda/2) ||x||^2.
inline LocalEval logistic_value_grad_hess(const LocalData& d, double lambda,
                                          const Eigen::VectorXd& x, bool with_hessian = true) {
  if (d.A.cols() != x.size() || d.A.rows() != d.b.size())
    throw InvalidArgument("logistic data dimensions do not match");
  const auto m = d.A.rows();
  const double inv_m = 1.0 / static_cast<double>(m);
  const Eigen::VectorXd z = d.b.cwiseProduct(d.A * x);

  Eigen::VectorXd coeff(m);   // -v_j sigma(-z_j)
  Eigen::VectorXd weight(m);  // sigma(z)(1 - sigma(z))
  double loss = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    loss += detail::softplus(-z[j]);
    const double s_neg = detail::sigmoid(-z[j]);
    coeff[j] = -d.b[j] * s_neg;
    weight[j] = s_neg * detail::sigmoid(z[j]);
  }
  LocalEval e;
  e.value = inv_m * loss + 0.5 * lambda * x.squaredNorm();
  e.gradient = inv_m * (d.A.transpose() * coeff) + lambda * x;
  if (with_hessian) {
    e.hessian = inv_m * (d.A.transpose() * weight.asDiagonal() * d.A);
    e.hessian.diagonal().array() += lambda;
  }
  return e;
}

/// Sum of local objectives with their regularity constants
/// mu I <= Hess f_i <= L I.
class Objective {
 public:
  Objective() = default;

  Objective(ObjectiveKind kind, double lambda, std::vector<LocalData> locals)
      : kind_(kind), lambda_(lambda), locals_(std::move(locals)) {
    if (!(lambda_ > 0.0)) throw InvalidArgument("regularizer lambda must be positive");
    if (locals_.empty()) throw InvalidArgument("objective needs at least one agent");
    const auto p = locals_.front().A.cols();
    for (const auto& d : locals_) {
      if (d.samples() == 0) throw InvalidArgument("every agent needs at least one sample");
      if (d.A.cols() != p || d.b.size() != d.A.rows())
        throw InvalidArgument("inconsistent local data dimensions");
      if (kind_ == ObjectiveKind::Logistic)
        for (double v : d.b)
          if (v != 1.0 && v != -1.0) throw InvalidArgument("logistic labels must be +-1");
    }
    if (kind_ == ObjectiveKind::Ridge) {
      ridge_hessians_.reserve(locals_.size());
      for (const auto& d : locals_) {
        Eigen::MatrixXd h = 2.0 * d.A.transpose() * d.A;
        h.diagonal().array() += 2.0 * lambda_;
        ridge_hessians_.push_back(std::move(h));
      }
    }
    compute_bounds();
  }

  ObjectiveKind kind() const { return kind_; }
  double lambda() const { return lambda_; }
  std::size_t agents() const { return locals_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(locals_.front().A.cols()); }
  const std::vector<LocalData>& locals() const { return locals_; }
  double mu() const { return mu_; }
  double L() const { return L_; }
  double kappa() const { return L_ / mu_; }

  LocalEval local(std::size_t i, const Eigen::VectorXd& x) const {
    const auto& d = locals_.at(i);
    return kind_ == ObjectiveKind::Ridge ? ridge_value_grad_hess(d, lambda_, x)
                                         : logistic_value_grad_hess(d, lambda_, x);
  }

  double local_value(std::size_t i, const Eigen::VectorXd& x) const {
    const auto& d = locals_.at(i);
    if (kind_ == ObjectiveKind::Ridge)
      return (d.A * x - d.b).squaredNorm() + lambda_ * x.squaredNorm();
    return logistic_value_grad_hess(d, lambda_, x, false).value;
  }

  Eigen::VectorXd local_gradient(std::size_t i, const Eigen::VectorXd& x) const {
    const auto& d = locals_.at(i);
    if (kind_ == ObjectiveKind::Ridge)
      return 2.0 * d.A.transpose() * (d.A * x - d.b) + 2.0 * lambda_ * x;
    return logistic_value_grad_hess(d, lambda_, x, false).gradient;
  }

  Eigen::MatrixXd local_hessian(std::size_t i, const Eigen::VectorXd& x) const {
    if (kind_ == ObjectiveKind::Ridge) return ridge_hessians_.at(i);
    return logistic_value_grad_hess(locals_.at(i), lambda_, x).hessian;
  }

  /// f(x) = (1/n) sum_i f_i(x).
  double value(const Eigen::VectorXd& x) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < agents(); ++i) acc += local_value(i, x);
    return acc / static_cast<double>(agents());
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    for (std::size_t i = 0; i < agents(); ++i) g += local_gradient(i, x);
    return g / static_cast<double>(agents());
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(x.size(), x.size());
    for (std::size_t i = 0; i < agents(); ++i) h += local_hessian(i, x);
    return h / static_cast<double>(agents());
  }

 private:
  void compute_bounds() {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& d : locals_) {
      Eigen::MatrixXd gram = d.A.transpose() * d.A;
      if (kind_ == ObjectiveKind::Logistic) gram /= static_cast<double>(d.samples());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
      lo = std::min(lo, std::max(0.0, es.eigenvalues().minCoeff()));
      hi = std::max(hi, es.eigenvalues().maxCoeff());
    }
    if (kind_ == ObjectiveKind::Ridge) {
      mu_ = 2.0 * lambda_ + 2.0 * lo;
      L_ = 2.0 * hi + 2.0 * lambda_;
    } else {
      mu_ = lambda_;
      L_ = lambda_ + hi / 4.0;
    }
  }

  ObjectiveKind kind_ = ObjectiveKind::Ridge;
  double lambda_ = 1.0;
  std::vector<LocalData> locals_;
  std::vector<Eigen::MatrixXd> ridge_hessians_;
  double mu_ = 0.0;
  double L_ = 0.0;
};

struct MuL {
  double mu;
  double L;
};

/// Hessian bounds from eigen-decompositions of the local Gram matrices.
inline MuL estimate_mu_L(const Objective& obj) { return {obj.mu(), obj.L()}; }

/// x* = (sum A_i'A_i + n lambda I)^{-1} sum A_i'b_i, the zero of the global
/// ridge gradient.
inline Eigen::VectorXd ridge_closed_form_optimum(const Objective& obj) {
  if (obj.kind() != ObjectiveKind::Ridge)
    throw InvalidArgument("closed-form optimum only exists for ridge");
  const auto p = static_cast<Eigen::Index>(obj.dim());
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  for (const auto& d : obj.locals()) {
    lhs.noalias() += d.A.transpose() * d.A;
    rhs.noalias() += d.A.transpose() * d.b;
  }
  lhs.diagonal().array() += static_cast<double>(obj.agents()) * obj.lambda();
  return lhs.llt().solve(rhs);
}

struct NewtonResult {
  Eigen::VectorXd x;
  double value = 0.0;
  std::size_t iterations = 0;
};

/// Damped Newton on the global objective with Armijo backtracking
/// (c = 1e-4, shrink 0.5, unit initial step). Stops once ||grad|| <= tol.
inline NewtonResult centralized_newton(const Objective& obj, Eigen::VectorXd x, double tol,
                                       std::size_t max_iter = 100) {
  constexpr double kArmijo = 1e-4;
  constexpr double kShrink = 0.5;
  constexpr int kMaxHalvings = 60;

  double f = obj.value(x);
  for (std::size_t it = 0;; ++it) {
    const Eigen::VectorXd g = obj.gradient(x);
    if (g.norm() <= tol) return {std::move(x), f, it};
    if (it == max_iter) throw ConvergenceFailure(x, g.norm());

    Eigen::LLT<Eigen::MatrixXd> llt(obj.hessian(x));
    if (llt.info() != Eigen::Success) throw NumericalFailure(0, "global Hessian is not SPD");
    const Eigen::VectorXd dir = -llt.solve(g);
    const double slope = g.dot(dir);

    double step = 1.0;
    Eigen::VectorXd trial = x + dir;
    double f_trial = obj.value(trial);
    int halvings = 0;
    for (; halvings < kMaxHalvings && f_trial > f + kArmijo * step * slope; ++halvings) {
      step *= kShrink;
      trial = x + step * dir;
      f_trial = obj.value(trial);
    }
    if (halvings == kMaxHalvings) {
      // Near the optimum the decrease drops below the roundoff in f and the
      // Armijo test cannot succeed; the full step is then taken if it still
      // reduces the gradient.
      trial = x + dir;
      if (!(obj.gradient(trial).norm() < g.norm())) throw ConvergenceFailure(x, g.norm());
      f_trial = obj.value(trial);
    }
    x = std::move(trial);
    f = f_trial;
  }
}

}  // namespace cnext
