#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include "compress.hpp"
#include "config.hpp"
#include "data.hpp"
#include "graph.hpp"
#include "objective.hpp"
#include "solver.hpp"

namespace cnext {

inline constexpr const char* kCovTypeEnv = "CNEXT_COVTYPE_PATH";

/// Stream tag for operator calibration, kept apart from the run streams.
inline constexpr std::uint64_t kCalibrationStream = 0xCA11B;

/// Everything a run needs, assembled from a config.
struct Problem {
  Dataset data;
  Partition partition;
  Objective objective;
  Network network;
  Reference reference;
  std::size_t newton_iterations = 0;

  std::size_t dim() const { return objective.dim(); }
};

inline std::string covtype_path(const DataBlock& d) {
  if (!d.path.empty()) return d.path;
  if (const char* env = std::getenv(kCovTypeEnv)) return env;
  throw IoError(std::string("covtype data requested but no path given; set objective.data.path or ") +
                kCovTypeEnv);
}

inline Network build_network(const NetworkBlock& nb) {
  const auto topo = nb.topology == TopologyKind::CirculantExpander
                        ? build_circulant_expander(nb.n, nb.degree)
                        : build_ring(nb.n);
  return metropolis_hastings_weights(topo);
}

inline Dataset build_dataset(const ExperimentConfig& c) {
  const auto& d = c.objective.data;
  if (d.source == "covtype") return load_covtype(covtype_path(d), d.p_reduced, c.seed, c.network.n);
  if (c.objective.kind == ObjectiveKind::Ridge) return generate_ridge_synthetic(d.N, d.p, c.seed, d.noise);
  return generate_logistic_synthetic(d.N, d.p, c.seed, d.test_fraction);
}

/// Reference optimum: closed form for ridge, centralized Newton otherwise.
inline Reference compute_reference(const Objective& obj, std::size_t* newton_iterations = nullptr) {
  Reference ref;
  if (obj.kind() == ObjectiveKind::Ridge) {
    ref.x_star = ridge_closed_form_optimum(obj);
    if (newton_iterations) *newton_iterations = 0;
  } else {
    auto nr = centralized_newton(obj, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obj.dim())), 1e-10);
    ref.x_star = std::move(nr.x);
    if (newton_iterations) *newton_iterations = nr.iterations;
  }
  ref.f_star = obj.value(ref.x_star);
  return ref;
}

inline Problem build_problem(const ExperimentConfig& c) {
  Problem pb;
  pb.data = build_dataset(c);
  pb.partition = partition_homogeneous(pb.data, c.network.n, c.seed);
  pb.objective = Objective(c.objective.kind, c.objective.lambda, local_data(pb.data, pb.partition));
  pb.network = build_network(c.network);
  pb.reference = compute_reference(pb.objective, &pb.newton_iterations);
  return pb;
}

inline CompressionScheme make_scheme(const SchemeBlock& sb, std::size_t p) {
  switch (sb.kind) {
    case SchemeKind::Identity: return CompressionScheme::identity();
    case SchemeKind::QNormBBitQuant: return CompressionScheme::qnbbq(sb.b);
    case SchemeKind::RandomK: return CompressionScheme::random_k(sb.k, p);
    case SchemeKind::TopK: return CompressionScheme::top_k(sb.k, p);
    case SchemeKind::QNormSigned: return CompressionScheme::qnorm_signed();
  }
  return CompressionScheme::identity();
}

/// Builds the scheme and fills in measured constants with a stream derived
/// from the seed, so calibration is reproducible.
inline CompressionScheme calibrated_scheme(const SchemeBlock& sb, std::size_t p, std::uint64_t seed,
                                           std::size_t draws) {
  auto s = make_scheme(sb, p);
  auto rng = make_engine(seed, kCalibrationStream, static_cast<std::uint64_t>(sb.kind));
  return calibrate_scheme(s, p, rng, draws);
}

/// Outcome of one variant: per-seed traces and their mean.
struct VariantResult {
  std::string label;
  Mode mode = Mode::CNEXT;
  CompressionScheme scheme;
  HyperParams hp;
  std::vector<std::uint64_t> seeds;
  std::vector<Trace> traces;
  Trace mean;
};

inline HyperParams variant_hyperparams(const ExperimentConfig& c, const Variant& v) {
  HyperParams hp = c.hp;
  if (v.eta) hp.eta = *v.eta;
  if (v.gamma) hp.gamma = *v.gamma;
  if (v.alpha_x) hp.alpha_x = *v.alpha_x;
  if (v.alpha_y) hp.alpha_y = *v.alpha_y;
  return hp;
}

inline VariantResult run_variant(const Problem& pb, const ExperimentConfig& c, const Variant& v) {
  VariantResult res;
  res.label = v.label;
  res.mode = v.mode;
  res.scheme = calibrated_scheme(v.scheme, pb.dim(), c.seed, c.calibration_draws);
  res.hp = variant_hyperparams(c, v);
  res.seeds = c.seeds.empty() ? std::vector<std::uint64_t>{c.seed} : c.seeds;
  RunOptions opt;
  opt.threads = c.threads;
  opt.check_invariants = false;
  if (pb.objective.kind() == ObjectiveKind::Logistic) opt.eval_data = &pb.data;
  for (auto s : res.seeds)
    res.traces.push_back(run(pb.objective, pb.network, res.scheme, res.hp, v.mode, s, pb.reference, opt));
  res.mean = res.traces.size() == 1 ? res.traces.front() : average_traces(res.traces);
  return res;
}

/// The single variant described by the top-level mode and scheme.
inline Variant base_variant(const ExperimentConfig& c) {
  Variant v;
  v.mode = c.mode;
  v.scheme = c.scheme;
  v.label = std::string(to_string(c.mode)) + ":" + std::string(to_string(c.scheme.kind));
  return v;
}

}  // namespace cnext
