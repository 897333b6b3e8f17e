#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include <cnext/data.hpp>
#include <cnext/solver.hpp>

using namespace cnext;

namespace {

struct Fixture {
  Objective obj;
  Network net;
  Reference ref;
};

Fixture ridge_fixture(std::size_t n = 5, std::size_t p = 4, std::size_t N = 100, double lambda = 0.5) {
  const auto ds = generate_ridge_synthetic(N, p, 3);
  const auto part = partition_homogeneous(ds, n, 3);
  Fixture f{Objective(ObjectiveKind::Ridge, lambda, local_data(ds, part)),
            metropolis_hastings_weights(build_ring(n)), {}};
  f.ref.x_star = ridge_closed_form_optimum(f.obj);
  f.ref.f_star = f.obj.value(f.ref.x_star);
  return f;
}

Fixture logistic_fixture() {
  const auto ds = generate_logistic_synthetic(200, 3, 5, 0.0);
  const auto part = partition_homogeneous(ds, 4, 5);
  Fixture f{Objective(ObjectiveKind::Logistic, 0.1, local_data(ds, part)),
            metropolis_hastings_weights(build_ring(4)), {}};
  const auto nr = centralized_newton(f.obj, Eigen::VectorXd::Zero(3), 1e-12);
  f.ref = {nr.x, nr.value};
  return f;
}

std::vector<CompressionScheme> schemes(std::size_t p) {
  auto rng = make_engine(99);
  return {CompressionScheme::identity(), calibrate_scheme(CompressionScheme::qnbbq(2), p, rng, 1000),
          CompressionScheme::random_k(2, p), CompressionScheme::top_k(1, p),
          calibrate_scheme(CompressionScheme::qnorm_signed(), p, rng, 1000)};
}

// Uncompressed iteration coded directly from the update rules, with exact
// neighbour averaging. Returns the decision matrix after each round.
std::vector<Eigen::MatrixXd> direct_iteration(const Fixture& f, const HyperParams& hp, std::uint64_t seed,
                                              bool newton) {
  const auto s0 = initial_state(f.obj, f.net, hp, seed);
  Eigen::MatrixXd X = s0.X, Y = s0.Y;
  const auto n = X.rows();
  auto grad = [&](const Eigen::MatrixXd& M) {
    Eigen::MatrixXd G(n, M.cols());
    for (Eigen::Index i = 0; i < n; ++i)
      G.row(i) = f.obj.local_gradient(static_cast<std::size_t>(i), M.row(i).transpose()).transpose();
    return G;
  };
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  std::vector<Eigen::MatrixXd> out{X};
  for (std::size_t t = 0; t < hp.T; ++t) {
    Eigen::MatrixXd D(n, X.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::MatrixXd Hi = f.obj.local_hessian(static_cast<std::size_t>(i), X.row(i).transpose());
      if (newton)
        D.row(i) = Hi.ldlt().solve(Y.row(i).transpose()).transpose();
      else
        D.row(i) = Y.row(i);
    }
    const Eigen::MatrixXd Xn = X - hp.gamma * (I - f.net.W) * X - hp.eta * D;
    Y = Y - hp.gamma * (I - f.net.W) * Y + grad(Xn) - grad(X);
    X = Xn;
    out.push_back(X);
  }
  return out;
}

}  // namespace

TEST(Mode, Parsing) {
  EXPECT_EQ(parse_mode("cnext"), Mode::CNEXT);
  EXPECT_EQ(parse_mode(to_string(Mode::FirstOrderGT)), Mode::FirstOrderGT);
  EXPECT_EQ(parse_mode(to_string(Mode::UncompressedGIANT)), Mode::UncompressedGIANT);
  EXPECT_FALSE(parse_mode("newton"));
}

TEST(Validate, HardErrorsAndWarnings) {
  const auto f = ridge_fixture();
  const auto id = CompressionScheme::identity();
  HyperParams hp;
  hp.eta = -1.0;
  EXPECT_THROW(validate(hp, id, f.obj), InvalidArgument);
  hp = {};
  hp.gamma = 1.5;
  EXPECT_THROW(validate(hp, id, f.obj), InvalidArgument);
  hp = {};
  hp.alpha_x = 0.0;
  EXPECT_THROW(validate(hp, id, f.obj), InvalidArgument);
  hp = {};
  hp.eta = 1e-6;
  EXPECT_TRUE(validate(hp, id, f.obj).empty());
  hp.gamma = 0.0;
  EXPECT_EQ(validate(hp, id, f.obj).size(), 1u);
  hp.gamma = 0.5;
  hp.eta = 10.0;
  EXPECT_EQ(validate(hp, id, f.obj).size(), 1u);
  auto scaled = CompressionScheme::qnorm_signed();
  scaled.r = 4.0;
  hp.eta = 1e-6;
  EXPECT_EQ(validate(hp, scaled, f.obj).size(), 1u);
}

TEST(InitialState, TrackerAndMemoryConsistent) {
  const auto f = ridge_fixture();
  HyperParams hp;
  const auto s = initial_state(f.obj, f.net, hp, 7);
  EXPECT_GE(s.X.minCoeff(), 0.0);
  EXPECT_LT(s.X.maxCoeff(), 1.0);
  EXPECT_EQ(s.Y, s.prev_grad);
  EXPECT_EQ(tracking_gap(s), 0.0);
  EXPECT_LE((s.comp_x.Hw - f.net.W * s.comp_x.H).norm(), 1e-14);
  EXPECT_NE(s.comp_x.H, s.comp_y.H);
  EXPECT_EQ(s.t, 0u);
  EXPECT_EQ(s.bits_cum, 0u);
  const auto other = ridge_fixture(6);
  EXPECT_THROW(initial_state(f.obj, other.net, hp, 7), InvalidArgument);
}

TEST(Step, TrackingInvariantHoldsForEverySchemeAndMode) {
  for (const auto& f : {ridge_fixture(), logistic_fixture()}) {
    HyperParams hp;
    hp.eta = 0.005;
    hp.gamma = 0.3;
    hp.alpha_x = hp.alpha_y = 0.5;
    for (const auto& sc : schemes(f.obj.dim()))
      for (auto mode : {Mode::CNEXT, Mode::FirstOrderGT}) {
        auto s = initial_state(f.obj, f.net, hp, 11);
        for (int t = 0; t < 200; ++t) {
          step(s, f.obj, f.net, sc, hp, mode);
          ASSERT_LE(relative_tracking_gap(s), 1e-10) << sc.label() << " t=" << t;
          ASSERT_LE((s.comp_x.Hw - f.net.W * s.comp_x.H).norm(), 1e-10 * std::max(1.0, s.comp_x.H.norm()));
          ASSERT_LE((s.comp_y.Hw - f.net.W * s.comp_y.H).norm(), 1e-10 * std::max(1.0, s.comp_y.H.norm()));
        }
      }
  }
}

TEST(Step, BitsCountBothStreams) {
  const auto f = ridge_fixture();
  HyperParams hp;
  hp.eta = 0.001;
  for (const auto& sc : schemes(4)) {
    auto s = initial_state(f.obj, f.net, hp, 1);
    const auto info = step(s, f.obj, f.net, sc, hp, Mode::CNEXT);
    EXPECT_EQ(info.bits, 2u * 5u * bits_per_vector(sc, 4)) << sc.label();
    step(s, f.obj, f.net, sc, hp, Mode::CNEXT);
    EXPECT_EQ(s.bits_cum, 2u * info.bits);
  }
}

TEST(Step, UncompressedModeIgnoresScheme) {
  const auto f = ridge_fixture();
  HyperParams hp;
  hp.eta = 0.01;
  auto a = initial_state(f.obj, f.net, hp, 2);
  auto b = initial_state(f.obj, f.net, hp, 2);
  for (int t = 0; t < 20; ++t) {
    step(a, f.obj, f.net, CompressionScheme::top_k(1, 4), hp, Mode::UncompressedGIANT);
    const auto info = step(b, f.obj, f.net, CompressionScheme::identity(), hp, Mode::CNEXT);
    EXPECT_EQ(info.xhat_err, 0.0);
  }
  EXPECT_EQ(a.X, b.X);
  EXPECT_EQ(a.Y, b.Y);
}

TEST(Step, DivergenceDetected) {
  const auto f = ridge_fixture();
  HyperParams hp;
  hp.eta = 1e200;
  auto s = initial_state(f.obj, f.net, hp, 3);
  EXPECT_THROW(
      for (int t = 0; t < 10; ++t) step(s, f.obj, f.net, CompressionScheme::identity(), hp, Mode::FirstOrderGT),
      DivergenceError);
}

TEST(Run, MatchesDirectNewtonIteration) {
  const auto f = ridge_fixture();
  HyperParams hp;
  hp.eta = 0.2;
  hp.gamma = 0.6;
  hp.T = 60;
  const auto expected = direct_iteration(f, hp, 4, true);
  auto s = initial_state(f.obj, f.net, hp, 4);
  for (std::size_t t = 1; t <= hp.T; ++t) {
    step(s, f.obj, f.net, CompressionScheme::identity(), hp, Mode::UncompressedGIANT);
    EXPECT_LE((s.X - expected[t]).norm(), 1e-10 * std::max(1.0, expected[t].norm())) << "t=" << t;
  }
}

TEST(Run, MatchesDirectFirstOrderIteration) {
  const auto f = logistic_fixture();
  HyperParams hp;
  hp.eta = 0.5;
  hp.gamma = 0.5;
  hp.T = 60;
  const auto expected = direct_iteration(f, hp, 5, false);
  auto s = initial_state(f.obj, f.net, hp, 5);
  for (std::size_t t = 1; t <= hp.T; ++t) {
    step(s, f.obj, f.net, CompressionScheme::identity(), hp, Mode::FirstOrderGT);
    EXPECT_LE((s.X - expected[t]).norm(), 1e-10 * std::max(1.0, expected[t].norm())) << "t=" << t;
  }
}

TEST(Run, ConvergesToOptimumUncompressed) {
  for (const auto& f : {ridge_fixture(), logistic_fixture()}) {
    HyperParams hp;
    hp.eta = 0.2;
    hp.gamma = 0.6;
    hp.T = 2000;
    const auto tr = run(f.obj, f.net, CompressionScheme::identity(), hp, Mode::CNEXT, 6, f.ref);
    ASSERT_EQ(tr.size(), hp.T + 1);
    EXPECT_LE(tr.back().err.opt, 1e-16);
    EXPECT_LE(tr.back().err.cons, 1e-16);
    EXPECT_LE(std::abs(tr.back().residual), 1e-10);
  }
}

TEST(Run, QuantizedConvergesOnRidge) {
  const auto f = ridge_fixture();
  HyperParams hp;
  hp.eta = 0.05;
  hp.gamma = 0.3;
  hp.T = 3000;
  auto rng = make_engine(1);
  const auto sc = calibrate_scheme(CompressionScheme::qnbbq(4), 4, rng, 1000);
  const auto tr = run(f.obj, f.net, sc, hp, Mode::CNEXT, 7, f.ref);
  EXPECT_LE(tr.back().err.opt, 1e-12);
  EXPECT_LT(tr.back().err.opt, tr.front().err.opt);
}

TEST(Run, TraceShapeAndEarlyStop) {
  const auto f = ridge_fixture();
  HyperParams hp;
  hp.eta = 0.2;
  hp.T = 0;
  auto tr = run(f.obj, f.net, CompressionScheme::identity(), hp, Mode::CNEXT, 1, f.ref);
  ASSERT_EQ(tr.size(), 1u);
  EXPECT_EQ(tr[0].t, 0u);
  EXPECT_EQ(tr[0].bits_cum, 0u);
  hp.T = 5000;
  hp.tol = 1e-6;
  tr = run(f.obj, f.net, CompressionScheme::identity(), hp, Mode::CNEXT, 1, f.ref);
  EXPECT_LT(tr.size(), 5001u);
  EXPECT_LE(tr.back().grad_norm, 1e-6);
  EXPECT_GT(tr[tr.size() - 2].grad_norm, 1e-6);
  for (std::size_t k = 0; k < tr.size(); ++k) EXPECT_EQ(tr[k].t, k);
}

TEST(Run, DeterministicAcrossThreadCounts) {
  const auto f = ridge_fixture(7, 4, 140);
  HyperParams hp;
  hp.eta = 0.01;
  hp.gamma = 0.4;
  hp.T = 100;
  for (const auto& sc : schemes(4)) {
    RunOptions one, four;
    four.threads = 4;
    const auto a = run(f.obj, f.net, sc, hp, Mode::CNEXT, 8, f.ref, one);
    const auto b = run(f.obj, f.net, sc, hp, Mode::CNEXT, 8, f.ref, four);
    const auto c = run(f.obj, f.net, sc, hp, Mode::CNEXT, 9, f.ref, one);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_EQ(a[k].err.opt, b[k].err.opt);
      EXPECT_EQ(a[k].residual, b[k].residual);
      EXPECT_EQ(a[k].bits_cum, b[k].bits_cum);
    }
    EXPECT_NE(a.back().err.opt, c.back().err.opt) << sc.label();
  }
}

TEST(Run, AccuracyReportedWithEvalData) {
  const auto ds = generate_logistic_synthetic(200, 3, 5, 0.25);
  const auto part = partition_homogeneous(ds, 4, 5);
  const Objective obj(ObjectiveKind::Logistic, 0.1, local_data(ds, part));
  const auto net = metropolis_hastings_weights(build_ring(4));
  const auto nr = centralized_newton(obj, Eigen::VectorXd::Zero(3), 1e-12);
  HyperParams hp;
  hp.eta = 0.2;
  hp.T = 300;
  RunOptions opt;
  opt.eval_data = &ds;
  const auto tr = run(obj, net, CompressionScheme::identity(), hp, Mode::CNEXT, 1, {nr.x, nr.value}, opt);
  ASSERT_TRUE(tr.back().accuracy);
  EXPECT_NEAR(*tr.back().accuracy, classification_accuracy(ds, ds.test, nr.x), 1e-12);
}

TEST(AverageTraces, MeanOverCommonPrefix) {
  Trace a(3), b(2);
  for (std::size_t k = 0; k < 3; ++k) {
    a[k].t = k;
    a[k].err.opt = 2.0;
    a[k].accuracy = 1.0;
  }
  for (std::size_t k = 0; k < 2; ++k) {
    b[k].t = k;
    b[k].err.opt = 4.0;
  }
  const std::vector<Trace> both{a, b};
  const auto m = average_traces(both);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_DOUBLE_EQ(m[1].err.opt, 3.0);
  EXPECT_FALSE(m[0].accuracy);
  EXPECT_TRUE(average_traces({}).empty());
}
