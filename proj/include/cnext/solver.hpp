#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "compress.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "objective.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace cnext {

enum class Mode { CNEXT, FirstOrderGT, UncompressedGIANT };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::CNEXT: return "cnext";
    case Mode::FirstOrderGT: return "first_order_gt";
    case Mode::UncompressedGIANT: return "uncompressed_giant";
  }
  return "?";
}

inline std::optional<Mode> parse_mode(std::string_view s) {
  for (auto m : {Mode::CNEXT, Mode::FirstOrderGT, Mode::UncompressedGIANT})
    if (s == to_string(m)) return m;
  return std::nullopt;
}

struct HyperParams {
  double eta = 0.01;
  double gamma = 0.6;
  double alpha_x = 1.0;
  double alpha_y = 1.0;
  std::size_t T = 5000;
  double tol = 0.0;  ///< stop once ||mean gradient|| <= tol; 0 runs the full budget
};

/// Hard errors for values no iteration can use; returns warnings for values
/// outside the range covered by the convergence analysis.
inline std::vector<std::string> validate(const HyperParams& hp, const CompressionScheme& scheme,
                                         const Objective& obj) {
  if (!(hp.eta >= 0.0) || !std::isfinite(hp.eta)) throw InvalidArgument("eta must be >= 0");
  if (!(hp.gamma >= 0.0 && hp.gamma <= 1.0)) throw InvalidArgument("gamma must lie in [0, 1]");
  if (!(hp.alpha_x > 0.0) || !(hp.alpha_y > 0.0))
    throw InvalidArgument("alpha_x and alpha_y must be positive");
  if (!(hp.tol >= 0.0)) throw InvalidArgument("tol must be >= 0");

  std::vector<std::string> warnings;
  const double eta_max = std::min(2.0 * obj.L() / (3.0 * obj.mu()), obj.mu() / obj.L());
  if (hp.eta > eta_max)
    warnings.push_back("eta=" + std::to_string(hp.eta) + " exceeds min{2L/(3mu), mu/L}=" +
                       std::to_string(eta_max));
  if (hp.gamma == 0.0) warnings.push_back("gamma=0 disables consensus");
  const double alpha_max = 1.0 / scheme.r;
  if (hp.alpha_x > alpha_max || hp.alpha_y > alpha_max)
    warnings.push_back("alpha exceeds 1/r=" + std::to_string(alpha_max));
  return warnings;
}

struct SolverState {
  Eigen::MatrixXd X;          ///< n x p decisions
  Eigen::MatrixXd Y;          ///< n x p gradient trackers
  Eigen::MatrixXd prev_grad;  ///< grad F(X(t))
  CompressState comp_x;
  CompressState comp_y;
  std::vector<Engine> rng_x;  ///< per-agent streams for the decision channel
  std::vector<Engine> rng_y;  ///< per-agent streams for the tracker channel
  std::size_t t = 0;
  std::size_t bits_cum = 0;
};

namespace detail {

inline Eigen::MatrixXd stacked_gradient(const Objective& obj, const Eigen::MatrixXd& X,
                                        std::size_t threads) {
  Eigen::MatrixXd G(X.rows(), X.cols());
  parallel_for(static_cast<std::size_t>(X.rows()), threads, [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    G.row(r) = obj.local_gradient(i, X.row(r).transpose()).transpose();
  });
  return G;
}

inline Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, Engine& rng) {
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = uniform01(rng);
  return M;
}

enum StreamId : std::uint64_t { kInitStream = 1, kDecisionStream = 2, kTrackerStream = 3 };

}  // namespace detail

/// Starting point: X(0), H_x(0), H_y(0) i.i.d. Uniform[0,1]; Y(0) = grad F(X(0));
/// H^w(0) = W H(0). Random streams are derived from `seed` per agent and channel.
inline SolverState initial_state(const Objective& obj, const Network& net, const HyperParams& hp,
                                 std::uint64_t seed, std::size_t threads = 1) {
  const auto n = static_cast<Eigen::Index>(obj.agents());
  const auto p = static_cast<Eigen::Index>(obj.dim());
  if (static_cast<Eigen::Index>(net.size()) != n)
    throw InvalidArgument("network has " + std::to_string(net.size()) + " agents, objective has " +
                          std::to_string(n));
  auto init = make_engine(seed, detail::kInitStream);
  SolverState s;
  s.X = detail::uniform_matrix(n, p, init);
  Eigen::MatrixXd hx = detail::uniform_matrix(n, p, init);
  Eigen::MatrixXd hy = detail::uniform_matrix(n, p, init);
  s.prev_grad = detail::stacked_gradient(obj, s.X, threads);
  s.Y = s.prev_grad;
  s.comp_x = CompressState(std::move(hx), net, hp.alpha_x);
  s.comp_y = CompressState(std::move(hy), net, hp.alpha_y);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.rng_x.push_back(make_engine(seed, detail::kDecisionStream, i));
    s.rng_y.push_back(make_engine(seed, detail::kTrackerStream, i));
  }
  return s;
}

/// Error vector e(t): optimality, consensus, tracking and the two
/// compression-memory gaps, all squared Frobenius norms.
struct ErrorVector {
  double opt = 0.0;
  double cons = 0.0;
  double gt = 0.0;
  double comp_x = 0.0;
  double comp_y = 0.0;

  Eigen::Matrix<double, 5, 1> as_vector() const {
    Eigen::Matrix<double, 5, 1> v;
    v << opt, cons, gt, comp_x, comp_y;
    return v;
  }
};

inline ErrorVector measure_errors(const SolverState& s, const Eigen::VectorXd& x_star) {
  const Eigen::RowVectorXd xbar = s.X.colwise().mean();
  const Eigen::RowVectorXd ybar = s.Y.colwise().mean();
  ErrorVector e;
  e.opt = (xbar.transpose() - x_star).squaredNorm();
  e.cons = (s.X.rowwise() - xbar).squaredNorm();
  e.gt = (s.Y.rowwise() - ybar).squaredNorm();
  e.comp_x = (s.X - s.comp_x.H).squaredNorm();
  e.comp_y = (s.Y - s.comp_y.H).squaredNorm();
  return e;
}

/// Per-round by-products that are not part of the state.
struct StepInfo {
  Eigen::MatrixXd D;     ///< descent directions used this round
  double xhat_err = 0.0;  ///< ||X - Xhat||^2, the realized compression error
  double yhat_err = 0.0;
  std::size_t bits = 0;
};

/// One synchronous round of the compressed Newton-type iteration.
/// UncompressedGIANT forces the identity operator; FirstOrderGT replaces the
/// Newton direction by the tracker itself.
inline StepInfo step(SolverState& s, const Objective& obj, const Network& net,
                     const CompressionScheme& scheme, const HyperParams& hp, Mode mode,
                     std::size_t threads = 1) {
  const auto& op = mode == Mode::UncompressedGIANT ? CompressionScheme::identity() : scheme;
  const auto n = static_cast<std::size_t>(s.X.rows());

  // Finite iterates can still overflow against the memory once a run blows up.
  if (!(s.X - s.comp_x.H).allFinite()) throw DivergenceError("X - H_x", s.t + 1);
  if (!(s.Y - s.comp_y.H).allFinite()) throw DivergenceError("Y - H_y", s.t + 1);
  const auto rx = compress_round(s.comp_x, s.X, op, net, s.rng_x, threads);
  const auto ry = compress_round(s.comp_y, s.Y, op, net, s.rng_y, threads);

  StepInfo info;
  info.D.resize(s.X.rows(), s.X.cols());
  if (mode == Mode::FirstOrderGT) {
    info.D = s.Y;
  } else {
    parallel_for(n, threads, [&](std::size_t i) {
      const auto r = static_cast<Eigen::Index>(i);
      Eigen::LLT<Eigen::MatrixXd> llt(obj.local_hessian(i, s.X.row(r).transpose()));
      if (llt.info() != Eigen::Success)
        throw NumericalFailure(i, "local Hessian of agent " + std::to_string(i) +
                                      " is not positive definite");
      info.D.row(r) = llt.solve(s.Y.row(r).transpose()).transpose();
    });
  }

  info.xhat_err = (s.X - rx.Zhat).squaredNorm();
  info.yhat_err = (s.Y - ry.Zhat).squaredNorm();

  Eigen::MatrixXd X_next = s.X - hp.gamma * (rx.Zhat - rx.Zhat_w) - hp.eta * info.D;
  if (!X_next.allFinite()) throw DivergenceError("X", s.t + 1);
  Eigen::MatrixXd grad_next = detail::stacked_gradient(obj, X_next, threads);
  if (!grad_next.allFinite()) throw DivergenceError("gradient", s.t + 1);
  Eigen::MatrixXd Y_next = s.Y - hp.gamma * (ry.Zhat - ry.Zhat_w) + grad_next - s.prev_grad;
  if (!Y_next.allFinite()) throw DivergenceError("Y", s.t + 1);

  s.X = std::move(X_next);
  s.Y = std::move(Y_next);
  s.prev_grad = std::move(grad_next);
  info.bits = rx.bits + ry.bits;
  s.bits_cum += info.bits;
  ++s.t;
  return info;
}

/// ||(1/n) 1'Y - (1/n) 1'grad F(X)||, zero in exact arithmetic.
inline double tracking_gap(const SolverState& s) {
  return (s.Y.colwise().mean() - s.prev_grad.colwise().mean()).norm();
}

/// Relative form of the tracking gap, scaled by the stacked gradient size.
inline double relative_tracking_gap(const SolverState& s) {
  const double scale = std::max(1.0, s.prev_grad.cwiseAbs().maxCoeff());
  return tracking_gap(s) / scale;
}

class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct RoundRecord {
  std::size_t t = 0;
  std::size_t bits_cum = 0;
  ErrorVector err;
  double residual = 0.0;  ///< f(xbar) - f(x*)
  std::optional<double> accuracy;
  double grad_norm = 0.0;  ///< ||mean gradient||
  double xhat_err = 0.0;
  double yhat_err = 0.0;
};

struct Reference {
  Eigen::VectorXd x_star;
  double f_star = 0.0;
};

#ifdef NDEBUG
inline constexpr bool kCheckInvariantsDefault = false;
#else
inline constexpr bool kCheckInvariantsDefault = true;
#endif

struct RunOptions {
  std::size_t threads = 1;
  bool check_invariants = kCheckInvariantsDefault;
  double tracking_tolerance = 1e-10;
  const Dataset* eval_data = nullptr;  ///< accuracy is reported when set
};

using Trace = std::vector<RoundRecord>;

namespace detail {

inline RoundRecord make_record(const SolverState& s, const Objective& obj, const Reference& ref,
                               const RunOptions& opt) {
  RoundRecord rec;
  rec.t = s.t;
  rec.bits_cum = s.bits_cum;
  rec.err = measure_errors(s, ref.x_star);
  const Eigen::VectorXd xbar = s.X.colwise().mean().transpose();
  rec.residual = obj.value(xbar) - ref.f_star;
  rec.grad_norm = s.prev_grad.colwise().mean().norm();
  if (opt.eval_data != nullptr) {
    const auto& ds = *opt.eval_data;
    rec.accuracy = classification_accuracy(ds, ds.test.empty() ? ds.train : ds.test, xbar);
  }
  return rec;
}

}  // namespace detail

/// Iterates `step` from the seeded initial state until t = T or the mean
/// gradient norm drops to hp.tol. Row 0 holds the initial errors.
inline Trace run(const Objective& obj, const Network& net, const CompressionScheme& scheme,
                 const HyperParams& hp, Mode mode, std::uint64_t seed, const Reference& ref,
                 const RunOptions& opt = {}) {
  validate(hp, scheme, obj);
  auto s = initial_state(obj, net, hp, seed, opt.threads);
  Trace trace;
  trace.reserve(hp.T + 1);
  trace.push_back(detail::make_record(s, obj, ref, opt));
  while (s.t < hp.T && !(hp.tol > 0.0 && trace.back().grad_norm <= hp.tol)) {
    const auto info = step(s, obj, net, scheme, hp, mode, opt.threads);
    if (opt.check_invariants && relative_tracking_gap(s) > opt.tracking_tolerance)
      throw InvariantViolation("gradient tracking drifted at t=" + std::to_string(s.t));
    auto rec = detail::make_record(s, obj, ref, opt);
    rec.xhat_err = info.xhat_err;
    rec.yhat_err = info.yhat_err;
    trace.push_back(std::move(rec));
  }
  return trace;
}

/// Column-wise mean of several traces over their common prefix.
inline Trace average_traces(std::span<const Trace> traces) {
  if (traces.empty()) return {};
  std::size_t len = traces.front().size();
  for (const auto& tr : traces) len = std::min(len, tr.size());
  const double w = 1.0 / static_cast<double>(traces.size());
  Trace out(len);
  for (std::size_t k = 0; k < len; ++k) {
    auto& o = out[k];
    o.t = traces.front()[k].t;
    o.bits_cum = traces.front()[k].bits_cum;
    bool has_acc = true;
    double acc = 0.0;
    for (const auto& tr : traces) {
      const auto& r = tr[k];
      o.err.opt += w * r.err.opt;
      o.err.cons += w * r.err.cons;
      o.err.gt += w * r.err.gt;
      o.err.comp_x += w * r.err.comp_x;
      o.err.comp_y += w * r.err.comp_y;
      o.residual += w * r.residual;
      o.grad_norm += w * r.grad_norm;
      o.xhat_err += w * r.xhat_err;
      o.yhat_err += w * r.yhat_err;
      if (r.accuracy) acc += w * *r.accuracy;
      else has_acc = false;
    }
    if (has_acc) o.accuracy = acc;
  }
  return out;
}

}  // namespace cnext
