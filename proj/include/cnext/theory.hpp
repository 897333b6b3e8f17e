#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace cnext {

/// Hyperparameter vector theta = (eta, gamma, alpha_x, alpha_y).
struct Theta {
  double eta = 0.0;
  double gamma = 0.0;
  double alpha_x = 1.0;
  double alpha_y = 1.0;
};

/// Problem, network and operator constants entering the contraction matrix.
struct TheoryConstants {
  double mu = 1.0;
  double L = 1.0;
  double rho = 0.0;   ///< ||W - 11'/n||
  double beta = 0.0;  ///< ||I - W||
  double C = 0.0;
  double r = 1.0;
  double delta = 1.0;
  std::size_t n = 1;
  double tau_x = 0.0;  ///< 0 selects the midpoint default
  double tau_y = 0.0;

  double kappa() const { return L / mu; }
  double rho_tilde(double gamma) const { return (1.0 - gamma) + gamma * rho; }
};

/// Constants derived from TheoryConstants at a given (alpha_x, alpha_y).
struct DerivedConstants {
  double tau_x, tau_y;
  double c1, c2;  ///< 3 tau / (tau - 1)
  double a_x, a_y;  ///< tau (1 - alpha r delta)
  double k1, k2, k3, k4;
};

inline constexpr double kUnboundedTau = 2.0;

/// Midpoint of (1, 1 / (1 - alpha r delta)). When alpha r delta >= 1 the
/// interval is unbounded and tau = 2 is used.
inline double default_tau(double alpha, double r, double delta) {
  const double shrink = 1.0 - alpha * r * delta;
  if (shrink <= 0.0) return kUnboundedTau;
  return 0.5 * (1.0 + 1.0 / shrink);
}

inline DerivedConstants derive(const TheoryConstants& tc, double alpha_x, double alpha_y) {
  DerivedConstants d{};
  d.tau_x = tc.tau_x > 0.0 ? tc.tau_x : default_tau(alpha_x, tc.r, tc.delta);
  d.tau_y = tc.tau_y > 0.0 ? tc.tau_y : default_tau(alpha_y, tc.r, tc.delta);
  d.c1 = 3.0 * d.tau_x / (d.tau_x - 1.0);
  d.c2 = 3.0 * d.tau_y / (d.tau_y - 1.0);
  d.a_x = d.tau_x * std::max(0.0, 1.0 - alpha_x * tc.r * tc.delta);
  d.a_y = d.tau_y * std::max(0.0, 1.0 - alpha_y * tc.r * tc.delta);
  const double b2 = tc.beta * tc.beta;
  d.k1 = d.c1 * b2;
  d.k2 = d.c1 * tc.C * b2;
  d.k3 = d.c2 * b2;
  d.k4 = d.c2 * tc.C * b2;
  return d;
}

using Matrix5 = Eigen::Matrix<double, 5, 5>;
using Vector5 = Eigen::Matrix<double, 5, 1>;

/// The 5x5 matrix bounding e(t+1) <= A e(t), filled entry by entry without
/// checking the preconditions.
inline Matrix5 contraction_matrix(const TheoryConstants& tc, const Theta& th) {
  const auto dc = derive(tc, th.alpha_x, th.alpha_y);
  const double mu = tc.mu, L = tc.L, eta = th.eta, g = th.gamma;
  const double n = static_cast<double>(tc.n);
  const double rt = tc.rho_tilde(g);
  const double gap = 1.0 - rt;
  const double mu2 = mu * mu, L2 = L * L, L4 = L2 * L2, eta2 = eta * eta, g2 = g * g;
  const double b2 = tc.beta * tc.beta, C = tc.C;
  const double diag_mix = 0.5 * (1.0 + rt * rt);

  Matrix5 A = Matrix5::Zero();
  A(0, 0) = 1.0 - 3.0 * eta * mu / (2.0 * L) + std::pow(eta * mu / L, 3) / 2.0;
  A(0, 1) = eta2 * L2 / (mu2 * n) + 2.0 * eta * L2 * L / (mu2 * mu * n);
  A(0, 2) = eta2 / (mu2 * n) + 2.0 * eta * L / (mu2 * mu * n);

  A(1, 0) = 8.0 * L2 * eta2 * n / (mu2 * gap);
  A(1, 1) = diag_mix + 8.0 * L2 * eta2 / (mu2 * gap);
  A(1, 2) = 4.0 * eta2 / (mu2 * gap);
  A(1, 3) = 2.0 * g2 * b2 * C * C / gap;

  A(2, 0) = 24.0 * L4 * eta2 * n / (mu2 * gap);
  A(2, 1) = 6.0 * L2 * g2 * b2 / gap + 24.0 * L4 * eta2 / (mu2 * gap);
  A(2, 2) = diag_mix + 12.0 * L2 * eta2 / (mu2 * gap);
  A(2, 3) = 6.0 * L2 * g2 * b2 * C / gap;
  A(2, 4) = 2.0 * g2 * b2 * C / gap;

  A(3, 0) = 4.0 * L2 * eta2 * n * dc.c1 / mu2;
  A(3, 1) = g2 * dc.k1 + 4.0 * L2 * eta2 * dc.c1 / mu2;
  A(3, 2) = 2.0 * eta2 * dc.c1 / mu2;
  A(3, 3) = dc.a_x + g2 * dc.k2;

  A(4, 0) = 12.0 * L4 * eta2 * n * dc.c2 / mu2;
  A(4, 1) = 3.0 * L2 * g2 * dc.k3 + 12.0 * L4 * eta2 * dc.c2 / mu2;
  A(4, 2) = g2 * dc.k3 + 6.0 * L2 * eta2 * dc.c2 / mu2;
  A(4, 3) = 3.0 * L2 * g2 * dc.k4;
  A(4, 4) = dc.a_y + g2 * dc.k3;
  return A;
}

/// Upper limit on eta under which the error recursion holds:
/// min{2L/(3 mu), mu/L}.
inline double eta_limit(const TheoryConstants& tc) {
  return std::min(2.0 * tc.L / (3.0 * tc.mu), tc.mu / tc.L);
}

/// Checked construction: throws InvalidArgument naming the first violated
/// precondition.
inline Matrix5 build_A(const TheoryConstants& tc, const Theta& th) {
  if (!(tc.mu > 0.0) || !(tc.L >= tc.mu)) throw InvalidArgument("need 0 < mu <= L");
  if (tc.n == 0) throw InvalidArgument("need n >= 1");
  if (!(th.gamma > 0.0 && th.gamma <= 1.0)) throw InvalidArgument("gamma in (0, 1] violated");
  if (!(th.eta > 0.0)) throw InvalidArgument("eta > 0 violated");
  if (th.eta > 2.0 * tc.L / (3.0 * tc.mu)) throw InvalidArgument("eta <= 2L/(3mu) violated");
  if (th.eta > tc.mu / tc.L) throw InvalidArgument("eta <= mu/L violated");
  if (!(tc.rho_tilde(th.gamma) < 1.0)) throw InvalidArgument("rho_tilde < 1 violated");
  const auto dc = derive(tc, th.alpha_x, th.alpha_y);
  if (!(dc.a_x < 1.0)) throw InvalidArgument("a_x = tau_x (1 - alpha_x r delta) < 1 violated");
  if (!(dc.a_y < 1.0)) throw InvalidArgument("a_y = tau_y (1 - alpha_y r delta) < 1 violated");
  return contraction_matrix(tc, th);
}

inline double spectral_radius(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  if (es.info() != Eigen::Success) throw NumericalFailure(0, "eigenvalue iteration failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double spectral_radius(const Matrix5& A) { return spectral_radius(Eigen::MatrixXd(A)); }

/// Perron root of a nonnegative matrix by power iteration on A + I, whose
/// dominant eigenvalue is rho(A) + 1 and is strictly dominant when A is
/// irreducible.
inline double perron_root(const Eigen::MatrixXd& A, std::size_t max_iter = 200000,
                          double tol = 1e-14) {
  const auto n = A.rows();
  if (n == 0) return 0.0;
  const Eigen::MatrixXd S = A + Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
  double lambda = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    Eigen::VectorXd w = S * v;
    const double next = w.norm();
    if (next == 0.0) return 0.0;
    w /= next;
    const bool done = std::abs(next - lambda) <= tol * next && (w - v).norm() <= 1e-12;
    v = std::move(w);
    lambda = next;
    if (done) break;
  }
  return std::max(0.0, lambda - 1.0);
}

struct InequalityCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
};

/// Evaluated sufficient conditions on (eta, gamma) together with the direct
/// checks they are meant to imply.
struct Theorem2Report {
  std::vector<InequalityCheck> checks;
  bool conditions_pass = false;  ///< every listed inequality holds
  Matrix5 A;
  double rho_A = 0.0;
  double rate_bound = 0.0;       ///< 1 - eta / (2 kappa)
  Vector5 eps_vector;            ///< (eps1, eps2, L^2 eps3, eps4, L^2 eps5)
  Vector5 A_eps;
  bool guarantee_pass = false;   ///< A eps <= (1 - eta/(2 kappa)) eps componentwise
  bool nonnegative = false;
  std::vector<InequalityCheck> alt_checks;  ///< same conditions with rho_bar = 1 - rho
  bool alt_conditions_pass = false;
};

namespace detail {

inline double safe_div(double a, double b) {
  if (b == 0.0) return a == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return a / b;
}

inline double safe_sqrt(double v) { return v < 0.0 ? 0.0 : std::sqrt(v); }

inline constexpr std::size_t kTheorem2Checks = 16;

inline constexpr std::array<const char*, kTheorem2Checks> kTheorem2Names{
    "eta_row1_ratio",          "eta_row1_cubic",          "eta_row2_consensus",
    "eta_row4_gamma_over_kappa", "eta_row2_sqrt",         "eta_row3_sqrt",
    "gamma_le_one",            "gamma_row4",              "gamma_row5",
    "eps_row1_ratio",          "eps_row2_ratio",          "eps_row3_sum",
    "lemma_eta_nonnegativity", "lemma_eta_damped_newton", "a_x_below_one",
    "a_y_below_one"};

struct Bound {
  double lhs;
  double rhs;
  bool strict = false;
  bool pass() const { return strict ? lhs < rhs : lhs <= rhs; }
};

/// The step-size, consensus-step and epsilon inequalities as lhs <= rhs
/// pairs, in kTheorem2Names order. `rho_bar` is the gap factor used in the
/// denominators.
inline std::array<Bound, kTheorem2Checks> theorem2_bounds(const TheoryConstants& tc,
                                                          const DerivedConstants& dc,
                                                          const Theta& th,
                                                          const std::array<double, 5>& eps,
                                                          double rho_bar) {
  const double k = tc.kappa(), mu = tc.mu, n = static_cast<double>(tc.n);
  const double eta = th.eta, g = th.gamma, rho = tc.rho, C = tc.C;
  const double b2 = tc.beta * tc.beta;
  const auto [e1, e2, e3, e4, e5] = eps;
  const double e_hat = 2.0 * n * e1 + 2.0 * e2 + e3;
  const double e_bar = dc.k1 * e2 + dc.k2 * e4;
  const double e_breve = 3.0 * dc.k3 * e2 + dc.k3 * e3 + 3.0 * dc.k4 * e4 + dc.k3 * e5;
  const double spread = g * (1.0 - rho) * rho_bar;
  const double k2 = k * k, k3 = k2 * k, k4 = k2 * k2;

  return {{
      {eta, safe_div(e1, 3.0 * k3 * e2 / n + 3.0 * k * e3 / (mu * mu * n))},
      {eta, k * std::sqrt(2.0 / 3.0)},
      {eta, g * (1.0 - rho) * k / 6.0},
      {eta, g / k},
      {eta, safe_sqrt(safe_div(spread * e2, e_hat)) / (4.0 * k)},
      {eta, safe_sqrt(safe_div(spread * e3, e_hat)) / (12.0 * k)},
      {g, 1.0},
      {g, safe_sqrt(safe_div((1.0 - dc.a_x) * e4, 2.0 * dc.c1 * e_hat + e_bar + e4 / (2.0 * k2)))},
      {g, safe_sqrt(safe_div((1.0 - dc.a_y) * e5, 6.0 * dc.c2 * e_hat + e_breve + e5 / (2.0 * k2)))},
      // epsilon system
      {6.0 * k4 / n + 6.0 * k2 / (mu * mu * n) * safe_div(e3, e2), safe_div(e1, e2)},
      {safe_div(e4, e2), safe_div(rho_bar * (1.0 - rho), 8.0 * g * g * b2 * C * C)},
      {3.0 * e2 + 3.0 * C * e4 + C * e5, safe_div(rho_bar * (1.0 - rho) * e3, 24.0 * g * b2)},
      // preconditions of the error recursion
      {eta, 2.0 * tc.L / (3.0 * mu)},
      {eta, mu / tc.L},
      {dc.a_x, 1.0, true},
      {dc.a_y, 1.0, true},
  }};
}

inline std::vector<InequalityCheck> theorem2_inequalities(const TheoryConstants& tc,
                                                          const Theta& th,
                                                          const std::array<double, 5>& eps,
                                                          double rho_bar) {
  const auto bounds = theorem2_bounds(tc, derive(tc, th.alpha_x, th.alpha_y), th, eps, rho_bar);
  std::vector<InequalityCheck> out;
  out.reserve(kTheorem2Checks);
  for (std::size_t i = 0; i < kTheorem2Checks; ++i)
    out.push_back({kTheorem2Names[i], bounds[i].lhs, bounds[i].rhs, bounds[i].pass()});
  return out;
}

inline bool all_pass(const std::vector<InequalityCheck>& v) {
  return std::all_of(v.begin(), v.end(), [](const auto& c) { return c.pass; });
}

/// Smallest rhs/lhs ratio; above one when every check passes.
inline double worst_ratio(const std::array<Bound, kTheorem2Checks>& bounds) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& b : bounds) {
    if (b.lhs <= 0.0) continue;
    if (b.rhs <= 0.0) return 0.0;
    worst = std::min(worst, b.rhs / b.lhs);
  }
  return worst;
}

}  // namespace detail

inline Vector5 epsilon_vector(const TheoryConstants& tc, const std::array<double, 5>& eps) {
  const double L2 = tc.L * tc.L;
  Vector5 v;
  v << eps[0], eps[1], L2 * eps[2], eps[3], L2 * eps[4];
  return v;
}

inline Theorem2Report check_theorem2(const TheoryConstants& tc, const Theta& th,
                                     const std::array<double, 5>& eps) {
  for (double e : eps)
    if (!(e > 0.0)) throw InvalidArgument("epsilon entries must be strictly positive");
  Theorem2Report rep;
  const double gap = 1.0 - tc.rho_tilde(th.gamma);
  rep.checks = detail::theorem2_inequalities(tc, th, eps, gap);
  rep.conditions_pass = detail::all_pass(rep.checks);
  rep.alt_checks = detail::theorem2_inequalities(tc, th, eps, 1.0 - tc.rho);
  rep.alt_conditions_pass = detail::all_pass(rep.alt_checks);

  rep.A = contraction_matrix(tc, th);
  rep.nonnegative = rep.A.minCoeff() >= 0.0;
  rep.rho_A = rep.A.allFinite() ? spectral_radius(rep.A) : std::numeric_limits<double>::infinity();
  rep.rate_bound = 1.0 - th.eta / (2.0 * tc.kappa());
  rep.eps_vector = epsilon_vector(tc, eps);
  rep.A_eps = rep.A * rep.eps_vector;
  rep.guarantee_pass = rep.A_eps.allFinite() &&
                       (rep.A_eps.array() <= rep.rate_bound * rep.eps_vector.array()).all();
  return rep;
}

/// Epsilon search: eps2 = 1, eps3..eps5 on a decade grid over [1e-8, 1e8],
/// eps1 at a few multiples of its smallest admissible value. The point with
/// the largest worst-case margin over all inequalities wins.
inline std::array<double, 5> find_epsilon(const TheoryConstants& tc, const Theta& th) {
  const double k = tc.kappa(), mu = tc.mu, n = static_cast<double>(tc.n);
  const double gap = 1.0 - tc.rho_tilde(th.gamma);
  const auto dc = derive(tc, th.alpha_x, th.alpha_y);
  std::array<double, 5> best{1.0, 1.0, 1.0, 1.0, 1.0};
  double best_margin = -1.0;
  for (int i3 = -8; i3 <= 8; ++i3) {
    const double e3 = std::pow(10.0, i3);
    const double e1_min = 6.0 * k * k * k * k / n + 6.0 * k * k / (mu * mu * n) * e3;
    for (int i4 = -8; i4 <= 8; ++i4) {
      for (int i5 = -8; i5 <= 8; ++i5) {
        for (double mult : {1.0, 1.5, 3.0, 10.0, 100.0}) {
          const std::array<double, 5> eps{e1_min * mult, 1.0, e3, std::pow(10.0, i4),
                                          std::pow(10.0, i5)};
          const double m = detail::worst_ratio(detail::theorem2_bounds(tc, dc, th, eps, gap));
          if (m > best_margin) {
            best_margin = m;
            best = eps;
          }
        }
      }
    }
  }
  return best;
}

}  // namespace cnext
