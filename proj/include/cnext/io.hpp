#pragma once

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <system_error>

#include <json.hpp>

#include "compress.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "solver.hpp"
#include "theory.hpp"

namespace cnext {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr const char* kBitConvention =
    "both streams: bits_cum counts the decision and tracker messages of every agent each round";

inline constexpr std::string_view kTraceHeader =
    "t,bits_cum,opt_err,cons_err,gt_err,comp_x_err,comp_y_err,residual,accuracy";

/// Shortest round-trip decimal form, so CSV bytes follow the doubles exactly.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void append_row(std::string& out, const RoundRecord& r) {
  out += std::to_string(r.t);
  out += ',';
  out += std::to_string(r.bits_cum);
  for (double v : {r.err.opt, r.err.cons, r.err.gt, r.err.comp_x, r.err.comp_y, r.residual}) {
    out += ',';
    out += format_double(v);
  }
  out += ',';
  if (r.accuracy) out += format_double(*r.accuracy);
  out += '\n';
}

inline std::string trace_csv(const Trace& trace) {
  std::string out(kTraceHeader);
  out += '\n';
  for (const auto& r : trace) append_row(out, r);
  return out;
}

/// Long format keyed by (variant, t).
inline std::string compare_csv(std::span<const VariantResult> results) {
  std::string out = "variant,";
  out += kTraceHeader;
  out += '\n';
  for (const auto& res : results)
    for (const auto& r : res.mean) {
      out += res.label;
      out += ',';
      append_row(out, r);
    }
  return out;
}

/// Writes to a sibling temporary file, then renames over the target.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
  }
}

inline nlohmann::json scheme_json(const CompressionScheme& s, std::size_t p) {
  nlohmann::json j;
  j["kind"] = std::string(to_string(s.kind));
  j["label"] = s.label();
  if (s.kind == SchemeKind::QNormBBitQuant) j["b"] = s.b;
  if (s.kind == SchemeKind::RandomK || s.kind == SchemeKind::TopK) j["k"] = s.k;
  j["q"] = "inf";
  j["C"] = s.C;
  j["r"] = s.r;
  j["delta"] = s.delta;
  j["bits_per_vector"] = bits_per_vector(s, p);
  return j;
}

inline nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["objective"] = {{"kind", std::string(to_string(c.objective.kind))},
                    {"lambda", c.objective.lambda},
                    {"data",
                     {{"source", c.objective.data.source},
                      {"N", c.objective.data.N},
                      {"p", c.objective.data.p},
                      {"path", c.objective.data.path},
                      {"p_reduced", c.objective.data.p_reduced},
                      {"noise", c.objective.data.noise},
                      {"test_fraction", c.objective.data.test_fraction}}}};
  j["network"] = {{"topology", std::string(to_string(c.network.topology))},
                  {"n", c.network.n},
                  {"degree", c.network.degree}};
  j["scheme"] = {{"kind", std::string(to_string(c.scheme.kind))}, {"b", c.scheme.b}, {"k", c.scheme.k}};
  j["hyperparams"] = {{"eta", c.hp.eta},         {"gamma", c.hp.gamma}, {"alpha_x", c.hp.alpha_x},
                      {"alpha_y", c.hp.alpha_y}, {"T", c.hp.T},         {"tol", c.hp.tol}};
  j["mode"] = std::string(to_string(c.mode));
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  j["threads"] = c.threads;
  j["calibration_draws"] = c.calibration_draws;
  return j;
}

inline nlohmann::json problem_json(const Problem& pb) {
  nlohmann::json j;
  j["provenance"] = std::string(to_string(pb.data.provenance));
  j["samples"] = pb.data.size();
  j["train"] = pb.data.train.size();
  j["test"] = pb.data.test.size();
  j["raw_rows"] = pb.data.raw_rows;
  j["per_agent"] = pb.partition.per_agent;
  j["dropped"] = pb.partition.dropped;
  j["mu"] = pb.objective.mu();
  j["L"] = pb.objective.L();
  j["rho"] = pb.network.rho;
  j["beta"] = pb.network.beta;
  j["f_star"] = pb.reference.f_star;
  if (!pb.data.explained_variance.empty()) j["pca_explained_variance"] = pb.data.explained_variance;
  if (pb.data.provenance == Provenance::CovType) j["label_mapping"] = "class 2 -> +1, others -> -1";
  j["initialization"] = "X(0), H_x(0), H_y(0) iid Uniform[0,1]; Y(0) = grad F(X(0)); H^w(0) = W H(0)";
  return j;
}

inline nlohmann::json variant_json(const VariantResult& v, std::size_t p) {
  nlohmann::json j;
  j["label"] = v.label;
  j["mode"] = std::string(to_string(v.mode));
  j["scheme"] = scheme_json(v.scheme, p);
  j["hyperparams"] = {{"eta", v.hp.eta},         {"gamma", v.hp.gamma}, {"alpha_x", v.hp.alpha_x},
                      {"alpha_y", v.hp.alpha_y}, {"T", v.hp.T},         {"tol", v.hp.tol}};
  j["seeds"] = v.seeds;
  j["rounds"] = v.mean.empty() ? 0 : v.mean.back().t;
  return j;
}

inline nlohmann::json manifest_json(const ExperimentConfig& c, const Problem& pb,
                                    std::span<const VariantResult> results) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["config"] = config_json(c);
  j["problem"] = problem_json(pb);
  j["bit_accounting"] = kBitConvention;
  j["csv_columns"] = std::string(kTraceHeader);
  j["variants"] = nlohmann::json::array();
  for (const auto& r : results) j["variants"].push_back(variant_json(r, pb.dim()));
  return j;
}

inline nlohmann::json checks_json(const std::vector<InequalityCheck>& checks) {
  auto arr = nlohmann::json::array();
  for (const auto& c : checks)
    arr.push_back({{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"pass", c.pass}});
  return arr;
}

inline nlohmann::json theory_json(const TheoryConstants& tc, const Theta& th,
                                  const std::array<double, 5>& eps, const Theorem2Report& rep) {
  const auto dc = derive(tc, th.alpha_x, th.alpha_y);
  nlohmann::json j;
  j["constants"] = {{"mu", tc.mu},       {"L", tc.L},           {"kappa", tc.kappa()},
                    {"rho", tc.rho},     {"rho_tilde", tc.rho_tilde(th.gamma)},
                    {"beta", tc.beta},   {"C", tc.C},           {"r", tc.r},
                    {"delta", tc.delta}, {"n", tc.n},           {"tau_x", dc.tau_x},
                    {"tau_y", dc.tau_y}, {"a_x", dc.a_x},       {"a_y", dc.a_y},
                    {"eta_limit", eta_limit(tc)}};
  j["theta"] = {{"eta", th.eta}, {"gamma", th.gamma}, {"alpha_x", th.alpha_x}, {"alpha_y", th.alpha_y}};
  j["eps"] = eps;
  auto rows = nlohmann::json::array();
  for (int r = 0; r < 5; ++r) {
    auto row = nlohmann::json::array();
    for (int c = 0; c < 5; ++c) row.push_back(rep.A(r, c));
    rows.push_back(row);
  }
  j["A"] = rows;
  j["rho_A"] = rep.rho_A;
  j["rate_bound"] = rep.rate_bound;
  j["eps_vector"] = std::vector<double>(rep.eps_vector.data(), rep.eps_vector.data() + 5);
  j["A_eps"] = std::vector<double>(rep.A_eps.data(), rep.A_eps.data() + 5);
  j["pass"] = rep.conditions_pass;
  j["guarantee_pass"] = rep.guarantee_pass;
  j["nonnegative"] = rep.nonnegative;
  j["checks"] = checks_json(rep.checks);
  j["alt_rho_bar_pass"] = rep.alt_conditions_pass;
  j["alt_checks"] = checks_json(rep.alt_checks);
  auto warnings = nlohmann::json::array();
  if (!rep.nonnegative) warnings.push_back("A has negative entries (eta > 2L/(3mu))");
  if (!(rep.rho_A < 1.0)) warnings.push_back("rho(A) >= 1");
  j["warnings"] = warnings;
  return j;
}

}  // namespace cnext
