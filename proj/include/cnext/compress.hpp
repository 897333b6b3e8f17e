#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "graph.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace cnext {

enum class SchemeKind { Identity, QNormBBitQuant, RandomK, TopK, QNormSigned };

inline std::string_view to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::Identity: return "identity";
    case SchemeKind::QNormBBitQuant: return "qnbbq";
    case SchemeKind::RandomK: return "randomk";
    case SchemeKind::TopK: return "topk";
    case SchemeKind::QNormSigned: return "qnormsigned";
  }
  return "?";
}

inline std::optional<SchemeKind> parse_scheme_kind(std::string_view s) {
  for (auto k : {SchemeKind::Identity, SchemeKind::QNormBBitQuant, SchemeKind::RandomK,
                 SchemeKind::TopK, SchemeKind::QNormSigned})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

/// Whether the operator consumes randomness.
constexpr bool is_randomized(SchemeKind k) {
  return k == SchemeKind::QNormBBitQuant || k == SchemeKind::RandomK;
}

/// A compression operator together with its contract constants:
/// E||Q(x) - x||^2 <= C ||x||^2 and E||Q(x)/r - x||^2 <= (1 - delta) ||x||^2.
///
/// Identity, RandomK and TopK carry closed-form constants. The quantizer and
/// the signed compressor start with `measured == false`; their constants are
/// filled in by `calibrate_scheme`.
struct CompressionScheme {
  SchemeKind kind = SchemeKind::Identity;
  int b = 2;                                           ///< quantizer bit depth
  std::size_t k = 0;                                   ///< sparsifier budget
  double q = std::numeric_limits<double>::infinity();  ///< norm index
  double C = 0.0;
  double r = 1.0;
  double delta = 1.0;
  bool measured = true;  ///< constants are known (closed form or calibrated)

  static CompressionScheme identity() { return {}; }

  static CompressionScheme qnbbq(int bits = 2) {
    if (bits < 1) throw InvalidArgument("quantizer needs b >= 1");
    CompressionScheme s;
    s.kind = SchemeKind::QNormBBitQuant;
    s.b = bits;
    s.measured = false;
    return s;
  }

  /// Bernoulli(k/p) mask; C = 1 - k/p, unscaled (r = 1, delta = k/p).
  static CompressionScheme random_k(std::size_t k, std::size_t p) {
    check_budget(k, p);
    CompressionScheme s;
    s.kind = SchemeKind::RandomK;
    s.k = k;
    s.delta = static_cast<double>(k) / static_cast<double>(p);
    s.C = 1.0 - s.delta;
    return s;
  }

  /// Keep the k largest magnitudes; worst case ||Q(x) - x||^2 = (1 - k/p)||x||^2.
  static CompressionScheme top_k(std::size_t k, std::size_t p) {
    check_budget(k, p);
    CompressionScheme s;
    s.kind = SchemeKind::TopK;
    s.k = k;
    s.delta = static_cast<double>(k) / static_cast<double>(p);
    s.C = 1.0 - s.delta;
    return s;
  }

  static CompressionScheme qnorm_signed() {
    CompressionScheme s;
    s.kind = SchemeKind::QNormSigned;
    s.measured = false;
    return s;
  }

  std::string label() const {
    switch (kind) {
      case SchemeKind::QNormBBitQuant: return "qnbbq(b=" + std::to_string(b) + ")";
      case SchemeKind::RandomK: return "randomk(k=" + std::to_string(k) + ")";
      case SchemeKind::TopK: return "topk(k=" + std::to_string(k) + ")";
      default: return std::string(to_string(kind));
    }
  }

 private:
  static void check_budget(std::size_t k, std::size_t p) {
    if (k == 0 || k > p)
      throw InvalidArgument("sparsifier budget k=" + std::to_string(k) +
                            " must lie in [1, p=" + std::to_string(p) + "]");
  }
};

inline std::size_t ceil_log2(std::size_t p) {
  return p <= 1 ? 0 : static_cast<std::size_t>(std::bit_width(p - 1));
}

/// Wire cost of one compressed p-vector.
inline std::size_t bits_per_vector(const CompressionScheme& s, std::size_t p) {
  switch (s.kind) {
    case SchemeKind::Identity: return 64 * p;
    case SchemeKind::QNormBBitQuant: return static_cast<std::size_t>(1 + s.b) * p;
    case SchemeKind::RandomK: return (32 + ceil_log2(p)) * s.k;
    case SchemeKind::TopK: return (64 + ceil_log2(p)) * s.k;
    case SchemeKind::QNormSigned: return p + 32;
  }
  return 0;
}

namespace detail {

inline double scheme_norm(const Eigen::VectorXd& x, double q) {
  if (std::isinf(q)) return x.lpNorm<Eigen::Infinity>();
  if (q == 1.0) return x.lpNorm<1>();
  if (q == 2.0) return x.norm();
  double acc = 0.0;
  for (double v : x) acc += std::pow(std::abs(v), q);
  return std::pow(acc, 1.0 / q);
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

/// Applies the operator to x, writing into `out`. Returns the bit cost.
inline std::size_t compress_into(const CompressionScheme& s, const Eigen::VectorXd& x,
                                 Eigen::VectorXd& out, Engine& rng) {
  const auto p = static_cast<std::size_t>(x.size());
  if (!x.allFinite()) throw InvalidArgument("compression input is not finite");
  out.resize(x.size());

  switch (s.kind) {
    case SchemeKind::Identity:
      out = x;
      break;

    case SchemeKind::QNormBBitQuant: {
      const double norm = detail::scheme_norm(x, s.q);
      const double levels = std::ldexp(1.0, s.b - 1);
      // Dither is drawn even for a zero input so the stream position does
      // not depend on the data.
      for (std::size_t i = 0; i < p; ++i) {
        const double u = uniform01(rng);
        if (norm == 0.0) {
          out[i] = 0.0;
          continue;
        }
        const double level = std::floor(levels * std::abs(x[i]) / norm + u);
        out[i] = norm / levels * detail::sign(x[i]) * level;
      }
      break;
    }

    case SchemeKind::RandomK: {
      if (s.k > p) throw InvalidArgument("random-k budget exceeds dimension");
      const double keep = static_cast<double>(s.k) / static_cast<double>(p);
      for (std::size_t i = 0; i < p; ++i) out[i] = bernoulli(rng, keep) ? x[i] : 0.0;
      break;
    }

    case SchemeKind::TopK: {
      if (s.k > p) throw InvalidArgument("top-k budget exceeds dimension");
      std::vector<std::size_t> idx(p);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      // Ties go to the lowest index.
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(s.k), idx.end(),
                        [&](std::size_t a, std::size_t b) {
                          const double fa = std::abs(x[a]), fb = std::abs(x[b]);
                          return fa > fb || (fa == fb && a < b);
                        });
      out.setZero();
      for (std::size_t j = 0; j < s.k; ++j) out[idx[j]] = x[idx[j]];
      break;
    }

    case SchemeKind::QNormSigned: {
      const double norm = detail::scheme_norm(x, s.q);
      for (std::size_t i = 0; i < p; ++i) out[i] = norm * detail::sign(x[i]);
      break;
    }
  }
  return bits_per_vector(s, p);
}

struct CompressedVector {
  Eigen::VectorXd value;
  std::size_t bits = 0;
};

inline CompressedVector compress_vector(const CompressionScheme& s, const Eigen::VectorXd& x,
                                        Engine& rng) {
  CompressedVector cv;
  cv.bits = compress_into(s, x, cv.value, rng);
  return cv;
}

/// Largest empirical E||Q(x)/scale - x||^2 / ||x||^2 over the samples, each
/// averaged over `draws` operator draws. Deterministic operators use one draw.
inline double measure_relative_error(const CompressionScheme& s,
                                     std::span<const Eigen::VectorXd> samples, Engine& rng,
                                     double scale = 1.0, std::size_t draws = 10000) {
  const std::size_t reps = is_randomized(s.kind) ? std::max<std::size_t>(draws, 1) : 1;
  double worst = 0.0;
  Eigen::VectorXd out;
  for (const auto& x : samples) {
    const double nx = x.squaredNorm();
    if (nx == 0.0) throw InvalidArgument("contract samples must be nonzero");
    double acc = 0.0;
    for (std::size_t d = 0; d < reps; ++d) {
      compress_into(s, x, out, rng);
      acc += (out / scale - x).squaredNorm();
    }
    worst = std::max(worst, acc / static_cast<double>(reps) / nx);
  }
  return worst;
}

/// Empirical C of the operator contract over the given samples.
inline double verify_contract(const CompressionScheme& s,
                              std::span<const Eigen::VectorXd> samples, Engine& rng,
                              std::size_t draws = 10000) {
  return measure_relative_error(s, samples, rng, 1.0, draws);
}

/// Probe set for calibration: Gaussian directions plus the structured
/// vectors that stress quantizers and sign compressors (flat, one-hot,
/// spike over a small plateau, spike over a quarter-level plateau).
inline std::vector<Eigen::VectorXd> contract_probe_vectors(std::size_t p, Engine& rng,
                                                           std::size_t gaussian_count = 16) {
  const auto dim = static_cast<Eigen::Index>(p);
  std::vector<Eigen::VectorXd> probes;
  for (std::size_t c = 0; c < gaussian_count; ++c) {
    Eigen::VectorXd v(dim);
    for (auto& e : v) e = standard_normal(rng);
    probes.push_back(std::move(v));
  }
  Eigen::VectorXd flat(dim);
  for (Eigen::Index i = 0; i < dim; ++i) flat[i] = (i % 2 == 0) ? 1.0 : -1.0;
  probes.push_back(flat);
  probes.push_back(Eigen::VectorXd::Unit(dim, 0));
  if (p > 1) {
    Eigen::VectorXd spike = Eigen::VectorXd::Constant(dim, 0.01);
    spike[0] = 1.0;
    probes.push_back(spike);
    Eigen::VectorXd quarter = Eigen::VectorXd::Constant(dim, 0.25);
    quarter[0] = 1.0;
    probes.push_back(quarter);
  }
  return probes;
}

struct OperatorConstants {
  double C = 0.0;
  double r = 1.0;
  double delta = 1.0;
  double scaled_error = 0.0;  ///< measured 1 - delta before flooring
};

inline constexpr double kMinDelta = 0.01;

/// Measures C for the operator and picks (r, delta). When the measured C is
/// below one the operator is used unscaled; otherwise r is the grid point in
/// [1, 1 + C] minimizing the worst scaled error. delta is floored at 0.01.
inline OperatorConstants measure_operator_constants(const CompressionScheme& s, std::size_t p,
                                                    Engine& rng, std::size_t draws = 10000) {
  const auto probes = contract_probe_vectors(p, rng);
  OperatorConstants oc;
  oc.C = verify_contract(s, probes, rng, draws);
  if (oc.C < 1.0) {
    oc.r = 1.0;
    oc.scaled_error = oc.C;
  } else {
    constexpr int kGrid = 200;
    const std::size_t search_draws = std::min<std::size_t>(draws, 500);
    double best = std::numeric_limits<double>::infinity();
    for (int g = 0; g <= kGrid; ++g) {
      const double r = std::pow(1.0 + oc.C, static_cast<double>(g) / kGrid);
      const double e = measure_relative_error(s, probes, rng, r, search_draws);
      if (e < best) {
        best = e;
        oc.r = r;
      }
    }
    oc.scaled_error = measure_relative_error(s, probes, rng, oc.r, draws);
  }
  oc.delta = std::clamp(1.0 - oc.scaled_error, kMinDelta, 1.0);
  return oc;
}

/// Returns the scheme with measured constants filled in. Closed-form
/// schemes are returned unchanged.
inline CompressionScheme calibrate_scheme(CompressionScheme s, std::size_t p, Engine& rng,
                                          std::size_t draws = 10000) {
  if (s.measured) return s;
  const auto oc = measure_operator_constants(s, p, rng, draws);
  s.C = oc.C;
  s.r = oc.r;
  s.delta = oc.delta;
  s.measured = true;
  return s;
}

/// Difference-compression memory for one stream (decision or tracker).
struct CompressState {
  Eigen::MatrixXd H;   ///< n x p auxiliary memory
  Eigen::MatrixXd Hw;  ///< W * H, maintained without extra communication
  double alpha = 1.0;

  CompressState() = default;
  CompressState(Eigen::MatrixXd h, const Network& net, double a) : H(std::move(h)), alpha(a) {
    if (H.rows() != net.W.rows()) throw InvalidArgument("memory rows must match agent count");
    if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
    Hw = net.W * H;
  }
};

struct CompressedRound {
  Eigen::MatrixXd Zhat;    ///< Q + H
  Eigen::MatrixXd Zhat_w;  ///< Hw + W Q
  Eigen::MatrixXd Q;       ///< transmitted innovation
  std::size_t bits = 0;
};

/// One Compress procedure: encode Z - H per agent, form the local and
/// neighbor-weighted estimates, then relax both memories toward them.
/// `agent_rngs[i]` is agent i's private stream.
inline CompressedRound compress_round(CompressState& state, const Eigen::MatrixXd& Z,
                                      const CompressionScheme& scheme, const Network& net,
                                      std::span<Engine> agent_rngs, std::size_t threads = 1) {
  const auto n = Z.rows();
  if (state.H.rows() != n || state.H.cols() != Z.cols() || state.Hw.rows() != n ||
      state.Hw.cols() != Z.cols())
    throw InvalidArgument("compress state does not match the input shape");
  if (net.W.rows() != n) throw InvalidArgument("network size does not match the input rows");
  if (static_cast<Eigen::Index>(agent_rngs.size()) != n)
    throw InvalidArgument("need one random stream per agent");

  CompressedRound out;
  out.Q.resize(n, Z.cols());
  std::vector<std::size_t> bits(static_cast<std::size_t>(n), 0);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    Eigen::VectorXd diff = (Z.row(row) - state.H.row(row)).transpose();
    Eigen::VectorXd q;
    bits[i] = compress_into(scheme, diff, q, agent_rngs[i]);
    out.Q.row(row) = q.transpose();
  });
  out.bits = std::accumulate(bits.begin(), bits.end(), std::size_t{0});

  out.Zhat = out.Q + state.H;
  out.Zhat_w = state.Hw + net.W * out.Q;
  const double a = state.alpha;
  state.H = (1.0 - a) * state.H + a * out.Zhat;
  state.Hw = (1.0 - a) * state.Hw + a * out.Zhat_w;
  return out;
}

}  // namespace cnext
