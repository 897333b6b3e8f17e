#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include <cnext/objective.hpp>
#include <cnext/rng.hpp>

using namespace cnext;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Engine& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = standard_normal(rng);
  return m;
}

Eigen::VectorXd gaussian(Eigen::Index n, Engine& rng) { return gaussian(n, 1, rng).col(0); }

LocalData ridge_local(Eigen::Index m, Eigen::Index p, Engine& rng) {
  return {gaussian(m, p, rng), gaussian(m, rng)};
}

LocalData logistic_local(Eigen::Index m, Eigen::Index p, Engine& rng) {
  LocalData d{gaussian(m, p, rng), Eigen::VectorXd(m)};
  for (Eigen::Index j = 0; j < m; ++j) d.b[j] = bernoulli(rng, 0.5) ? 1.0 : -1.0;
  return d;
}

// Central differences of a scalar function.
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

Objective random_ridge(std::size_t n, Eigen::Index p, Engine& rng, double lambda = 0.5) {
  std::vector<LocalData> locals;
  for (std::size_t i = 0; i < n; ++i) locals.push_back(ridge_local(8 + static_cast<Eigen::Index>(i), p, rng));
  return Objective(ObjectiveKind::Ridge, lambda, std::move(locals));
}

Objective random_logistic(std::size_t n, Eigen::Index p, Engine& rng, double lambda = 0.1) {
  std::vector<LocalData> locals;
  for (std::size_t i = 0; i < n; ++i) locals.push_back(logistic_local(15, p, rng));
  return Objective(ObjectiveKind::Logistic, lambda, std::move(locals));
}

void expect_hessian_in_bounds(const Objective& obj, const Eigen::VectorXd& x) {
  for (std::size_t i = 0; i < obj.agents(); ++i) {
    const Eigen::MatrixXd H = obj.local_hessian(i, x);
    EXPECT_LE((H - H.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    EXPECT_GE(es.eigenvalues().minCoeff(), obj.mu() * (1 - 1e-10));
    EXPECT_LE(es.eigenvalues().maxCoeff(), obj.L() * (1 + 1e-10));
    EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(H).info(), Eigen::Success);
  }
}

}  // namespace

TEST(Ridge, PureRegularizer) {
  const double lambda = 0.7;
  const LocalData d{Eigen::MatrixXd::Zero(3, 4), Eigen::VectorXd::Zero(3)};
  Eigen::VectorXd x(4);
  x << 1, -2, 3, 0.5;
  const auto e = ridge_value_grad_hess(d, lambda, x);
  EXPECT_DOUBLE_EQ(e.value, lambda * x.squaredNorm());
  EXPECT_EQ(e.gradient, 2.0 * lambda * x);
  EXPECT_EQ(e.hessian, 2.0 * lambda * Eigen::MatrixXd::Identity(4, 4));
  const Objective obj(ObjectiveKind::Ridge, lambda, {d});
  EXPECT_DOUBLE_EQ(obj.mu(), 2.0 * lambda);
  EXPECT_DOUBLE_EQ(obj.L(), 2.0 * lambda);
  EXPECT_DOUBLE_EQ(obj.kappa(), 1.0);
}

TEST(Ridge, GradientMatchesFiniteDifferences) {
  auto rng = make_engine(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = ridge_local(12, 6, rng);
    const auto x = gaussian(6, rng);
    const auto f = [&](const Eigen::VectorXd& y) { return ridge_value_grad_hess(d, 0.3, y).value; };
    const auto e = ridge_value_grad_hess(d, 0.3, x);
    const Eigen::VectorXd fd = fd_gradient(f, x);
    EXPECT_LE((e.gradient - fd).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, e.gradient.cwiseAbs().maxCoeff()));
  }
}

TEST(Ridge, ClosedFormIdentityFeatures) {
  const double lambda = 0.5, c = 2.5;
  std::vector<LocalData> locals;
  for (int i = 0; i < 4; ++i) locals.push_back({Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Constant(3, c)});
  const Objective obj(ObjectiveKind::Ridge, lambda, locals);
  const auto x = ridge_closed_form_optimum(obj);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(x[i], c / (1.0 + lambda), 1e-14);
}

TEST(Ridge, ClosedFormZeroesGlobalGradient) {
  auto rng = make_engine(2);
  const auto obj = random_ridge(6, 5, rng);
  const auto x = ridge_closed_form_optimum(obj);
  EXPECT_LE(obj.gradient(x).norm(), 1e-9);
  const double f0 = obj.value(x);
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd v = gaussian(5, rng).normalized();
    EXPECT_GE(obj.value(x + 1e-3 * v), f0);
    EXPECT_GE(obj.value(x - 1e-3 * v), f0);
  }
}

TEST(Ridge, OptimumShrinksWithLambda) {
  auto rng = make_engine(3);
  std::vector<LocalData> locals;
  for (int i = 0; i < 3; ++i) locals.push_back(ridge_local(10, 4, rng));
  double prev = std::numeric_limits<double>::infinity();
  for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0, 1000.0}) {
    const double norm = ridge_closed_form_optimum(Objective(ObjectiveKind::Ridge, lambda, locals)).norm();
    EXPECT_LT(norm, prev);
    prev = norm;
  }
}

TEST(Ridge, HessianBoundsAtRandomPoints) {
  auto rng = make_engine(4);
  const auto obj = random_ridge(5, 6, rng);
  EXPECT_GE(obj.mu(), 2.0 * obj.lambda());
  EXPECT_GE(obj.L(), obj.mu());
  for (int k = 0; k < 100; ++k) expect_hessian_in_bounds(obj, gaussian(6, rng));
  const auto ml = estimate_mu_L(obj);
  EXPECT_EQ(ml.mu, obj.mu());
  EXPECT_EQ(ml.L, obj.L());
}

TEST(Logistic, ValueAndGradientAtZero) {
  auto rng = make_engine(5);
  const auto d = logistic_local(9, 4, rng);
  const auto e = logistic_value_grad_hess(d, 0.1, Eigen::VectorXd::Zero(4));
  EXPECT_NEAR(e.value, std::log(2.0), 1e-15);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(4);
  for (Eigen::Index j = 0; j < 9; ++j) expected -= d.b[j] / 2.0 * d.A.row(j).transpose();
  expected /= 9.0;
  EXPECT_LE((e.gradient - expected).norm(), 1e-15);
}

TEST(Logistic, GradientAndHessianMatchFiniteDifferences) {
  auto rng = make_engine(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = logistic_local(20, 5, rng);
    const Eigen::VectorXd x = 2.0 * gaussian(5, rng);
    const auto e = logistic_value_grad_hess(d, 0.1, x);
    const auto f = [&](const Eigen::VectorXd& y) { return logistic_value_grad_hess(d, 0.1, y).value; };
    EXPECT_LE((e.gradient - fd_gradient(f, x)).cwiseAbs().maxCoeff(), 1e-6);
    for (Eigen::Index c = 0; c < 5; ++c) {
      const auto gc = [&](const Eigen::VectorXd& y) { return logistic_value_grad_hess(d, 0.1, y).gradient[c]; };
      EXPECT_LE((e.hessian.row(c).transpose() - fd_gradient(gc, x)).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(Logistic, StableForLargeMargins) {
  LocalData d{Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Constant(1, 1.0)};
  for (double x : {-800.0, 800.0}) {
    const auto e = logistic_value_grad_hess(d, 0.1, Eigen::VectorXd::Constant(1, x));
    EXPECT_TRUE(std::isfinite(e.value));
    EXPECT_TRUE(e.gradient.allFinite());
    EXPECT_TRUE(e.hessian.allFinite());
  }
}

TEST(Logistic, HessianEigenvaluesWithinBounds) {
  auto rng = make_engine(7);
  const auto obj = random_logistic(4, 5, rng);
  EXPECT_EQ(obj.mu(), obj.lambda());
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd x = 3.0 * gaussian(5, rng);
    expect_hessian_in_bounds(obj, x);
    // The looser per-sample bound lambda + max ||u||^2 / 4.
    for (std::size_t i = 0; i < obj.agents(); ++i) {
      const auto& d = obj.locals()[i];
      const double cap = obj.lambda() + d.A.rowwise().squaredNorm().maxCoeff() / 4.0;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(obj.local_hessian(i, x));
      EXPECT_LE(es.eigenvalues().maxCoeff(), cap * (1 + 1e-12));
      EXPECT_GE(es.eigenvalues().minCoeff(), obj.lambda() * (1 - 1e-12));
    }
  }
}

TEST(Logistic, LabelsMustBeSigns) {
  LocalData d{Eigen::MatrixXd::Ones(2, 2), Eigen::VectorXd::Constant(2, 0.5)};
  EXPECT_THROW(Objective(ObjectiveKind::Logistic, 0.1, {d}), InvalidArgument);
}

TEST(Objective, RejectsBadInputs) {
  LocalData d{Eigen::MatrixXd::Ones(2, 2), Eigen::VectorXd::Ones(2)};
  EXPECT_THROW(Objective(ObjectiveKind::Ridge, 0.0, {d}), InvalidArgument);
  EXPECT_THROW(Objective(ObjectiveKind::Ridge, 1.0, {}), InvalidArgument);
  LocalData bad{Eigen::MatrixXd::Ones(2, 3), Eigen::VectorXd::Ones(2)};
  EXPECT_THROW(Objective(ObjectiveKind::Ridge, 1.0, {d, bad}), InvalidArgument);
}

TEST(Objective, GlobalStrongConvexity) {
  auto rng = make_engine(8);
  for (const auto& obj : {random_ridge(4, 5, rng), random_logistic(4, 5, rng)}) {
    for (int k = 0; k < 50; ++k) {
      const Eigen::VectorXd x = gaussian(5, rng), y = gaussian(5, rng);
      const double lower = obj.value(x) + obj.gradient(x).dot(y - x) + 0.5 * obj.mu() * (y - x).squaredNorm();
      EXPECT_GE(obj.value(y), lower - 1e-10 * std::abs(lower));
    }
  }
}

TEST(Newton, RidgeMatchesClosedForm) {
  auto rng = make_engine(9);
  const auto obj = random_ridge(6, 5, rng);
  const auto nr = centralized_newton(obj, gaussian(5, rng), 1e-10, 20);
  EXPECT_LE(nr.iterations, 20u);
  EXPECT_LE((nr.x - ridge_closed_form_optimum(obj)).norm(), 1e-8);
}

TEST(Newton, QuadraticConvergesInOneStep) {
  auto rng = make_engine(10);
  const auto obj = random_ridge(3, 4, rng);
  const auto nr = centralized_newton(obj, gaussian(4, rng), 1e-8, 20);
  EXPECT_EQ(nr.iterations, 1u);
}

TEST(Newton, LogisticSeparableTwoPoints) {
  LocalData d{Eigen::MatrixXd(2, 2), Eigen::VectorXd(2)};
  d.A << 1.0, 0.0, -1.0, 0.0;
  d.b << 1.0, -1.0;
  const Objective obj(ObjectiveKind::Logistic, 0.1, {d});
  const auto nr = centralized_newton(obj, Eigen::VectorXd::Zero(2), 1e-10);
  EXPECT_TRUE(nr.x.allFinite());
  EXPECT_LE(obj.gradient(nr.x).norm(), 1e-10);
  EXPECT_GT(nr.x[0], 0.0);
}

TEST(Newton, BudgetExhaustedCarriesIterate) {
  auto rng = make_engine(11);
  const auto obj = random_logistic(3, 4, rng);
  const Eigen::VectorXd x0 = gaussian(4, rng);
  try {
    centralized_newton(obj, x0, 1e-12, 0);
    FAIL() << "expected ConvergenceFailure";
  } catch (const ConvergenceFailure& e) {
    EXPECT_EQ(e.last_iterate(), x0);
    EXPECT_GT(e.gradient_norm(), 0.0);
  }
}
