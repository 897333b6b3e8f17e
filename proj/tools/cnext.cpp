// Experiment harness: run, compare, theory, verify-ops.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <cnext/cnext.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigExit = 2, kDivergenceExit = 3, kIoExit = 4 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> T;
  std::optional<double> eta, gamma, alpha_x, alpha_y, tol;
  std::optional<std::string> scheme, mode, output;
  std::optional<std::size_t> threads, draws;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("-c,--config", o.config, "JSON config file (defaults apply when omitted)");
  sub->add_option("--seed", o.seed, "root seed");
  sub->add_option("--seeds", o.seeds, "seed list for averaging")->delimiter(',');
  sub->add_option("--T", o.T, "iteration budget");
  sub->add_option("--eta", o.eta, "step size");
  sub->add_option("--gamma", o.gamma, "consensus step size");
  sub->add_option("--alpha-x", o.alpha_x, "decision memory scaling");
  sub->add_option("--alpha-y", o.alpha_y, "tracker memory scaling");
  sub->add_option("--tol", o.tol, "gradient-norm stopping tolerance");
  sub->add_option("--scheme", o.scheme, "identity|qnbbq|randomk|topk|qnormsigned");
  sub->add_option("--mode", o.mode, "cnext|first_order_gt|uncompressed_giant");
  sub->add_option("-o,--output", o.output, "output directory");
  sub->add_option("--threads", o.threads, "worker threads per run");
  sub->add_option("--draws", o.draws, "Monte-Carlo draws for operator calibration");
}

cnext::ExperimentConfig resolve(const Overrides& o) {
  auto c = o.config.empty() ? cnext::default_config() : cnext::load_config(o.config);
  if (o.scheme) {
    const auto k = cnext::parse_scheme_kind(*o.scheme);
    if (!k) throw cnext::ConfigError("--scheme", "unknown scheme '" + *o.scheme + "'");
    c.scheme.kind = *k;
    const auto st = cnext::paper_steps(c.objective.kind, c.scheme.kind, c.network.topology);
    c.hp.eta = st.eta;
    c.hp.gamma = st.gamma;
  }
  if (o.mode) {
    const auto m = cnext::parse_mode(*o.mode);
    if (!m) throw cnext::ConfigError("--mode", "unknown mode '" + *o.mode + "'");
    c.mode = *m;
  }
  if (o.seed) c.seed = *o.seed;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.T) c.hp.T = *o.T;
  if (o.eta) c.hp.eta = *o.eta;
  if (o.gamma) c.hp.gamma = *o.gamma;
  if (o.alpha_x) c.hp.alpha_x = *o.alpha_x;
  if (o.alpha_y) c.hp.alpha_y = *o.alpha_y;
  if (o.tol) c.hp.tol = *o.tol;
  if (o.output) c.output = *o.output;
  if (o.threads) c.threads = *o.threads;
  if (o.draws) c.calibration_draws = *o.draws;
  cnext::validate_config(c);
  return c;
}

void write_json(const fs::path& path, const json& j) { cnext::atomic_write(path, j.dump(2) + "\n"); }

void report_warnings(const cnext::VariantResult& v, const cnext::Problem& pb) {
  for (const auto& w : cnext::validate(v.hp, v.scheme, pb.objective))
    std::cerr << "warning [" << v.label << "]: " << w << "\n";
}

int cmd_run(const cnext::ExperimentConfig& c) {
  const auto pb = cnext::build_problem(c);
  std::vector<cnext::VariantResult> results;
  results.push_back(cnext::run_variant(pb, c, cnext::base_variant(c)));
  const auto& res = results.front();
  report_warnings(res, pb);

  const fs::path out = c.output;
  cnext::atomic_write(out / "trace.csv", cnext::trace_csv(res.mean));
  if (res.traces.size() > 1)
    for (std::size_t i = 0; i < res.traces.size(); ++i)
      cnext::atomic_write(out / ("trace_seed" + std::to_string(res.seeds[i]) + ".csv"),
                          cnext::trace_csv(res.traces[i]));
  write_json(out / "manifest.json", cnext::manifest_json(c, pb, results));

  const auto& last = res.mean.back();
  std::cout << res.label << ": t=" << last.t << " opt_err=" << last.err.opt
            << " residual=" << last.residual << " bits=" << last.bits_cum;
  if (last.accuracy) std::cout << " accuracy=" << *last.accuracy;
  std::cout << "\n";
  return kOk;
}

int cmd_compare(const cnext::ExperimentConfig& c) {
  if (c.variants.size() < 2) throw cnext::ConfigError("variants", "compare needs at least two variants");
  const auto pb = cnext::build_problem(c);
  std::vector<cnext::VariantResult> results;
  for (const auto& v : c.variants) {
    results.push_back(cnext::run_variant(pb, c, v));
    report_warnings(results.back(), pb);
  }
  const fs::path out = c.output;
  cnext::atomic_write(out / "compare.csv", cnext::compare_csv(results));
  write_json(out / "manifest.json", cnext::manifest_json(c, pb, results));
  for (const auto& r : results) {
    const auto& last = r.mean.back();
    std::cout << r.label << ": residual=" << last.residual << " bits=" << last.bits_cum << "\n";
  }
  return kOk;
}

/// Operator constants for the configured scheme, from a verify-ops manifest
/// when one is named, otherwise measured now.
cnext::CompressionScheme theory_scheme(const cnext::ExperimentConfig& c, std::size_t p) {
  auto s = cnext::make_scheme(c.scheme, p);
  if (c.theory.constants.empty()) return cnext::calibrated_scheme(c.scheme, p, c.seed, c.calibration_draws);
  std::ifstream in(c.theory.constants);
  if (!in) throw cnext::IoError("cannot open constants file '" + c.theory.constants + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw cnext::ConfigError("theory.constants", e.what());
  }
  for (const auto& e : j.at("schemes"))
    if (e.at("kind").get<std::string>() == cnext::to_string(s.kind)) {
      s.C = e.at("C").get<double>();
      s.r = e.at("r").get<double>();
      s.delta = e.at("delta").get<double>();
      s.measured = true;
      return s;
    }
  throw cnext::ConfigError("theory.constants", "no entry for scheme " + std::string(cnext::to_string(s.kind)));
}

int cmd_theory(const cnext::ExperimentConfig& c) {
  const auto pb = cnext::build_problem(c);
  const auto scheme = theory_scheme(c, pb.dim());
  cnext::TheoryConstants tc{pb.objective.mu(), pb.objective.L(), pb.network.rho, pb.network.beta,
                            scheme.C,          scheme.r,         scheme.delta,   c.network.n,
                            c.theory.tau_x,    c.theory.tau_y};
  const cnext::Theta th{c.hp.eta, c.hp.gamma, c.hp.alpha_x, c.hp.alpha_y};
  std::array<double, 5> eps{};
  if (c.theory.eps) std::copy(c.theory.eps->begin(), c.theory.eps->end(), eps.begin());
  else eps = cnext::find_epsilon(tc, th);
  const auto rep = cnext::check_theorem2(tc, th, eps);
  auto j = cnext::theory_json(tc, th, eps, rep);
  j["scheme"] = cnext::scheme_json(scheme, pb.dim());
  std::cout << j.dump(2) << "\n";
  if (c.output != "-") write_json(fs::path(c.output) / "theory.json", j);
  return kOk;
}

int cmd_verify_ops(const cnext::ExperimentConfig& c) {
  const std::size_t p =
      c.objective.data.source == "covtype" ? c.objective.data.p_reduced : c.objective.data.p;
  json j;
  j["version"] = cnext::kVersion;
  j["p"] = p;
  j["draws"] = c.calibration_draws;
  j["seed"] = c.seed;
  j["schemes"] = json::array();
  const std::vector<cnext::SchemeBlock> blocks{
      {cnext::SchemeKind::Identity, c.scheme.b, c.scheme.k},
      {cnext::SchemeKind::QNormBBitQuant, c.scheme.b, c.scheme.k},
      {cnext::SchemeKind::RandomK, c.scheme.b, std::min(c.scheme.k, p)},
      {cnext::SchemeKind::TopK, c.scheme.b, std::min<std::size_t>(3, p)},
      {cnext::SchemeKind::QNormSigned, c.scheme.b, c.scheme.k}};
  for (const auto& b : blocks) {
    const auto s = cnext::make_scheme(b, p);
    auto rng = cnext::make_engine(c.seed, cnext::kCalibrationStream, static_cast<std::uint64_t>(b.kind));
    const auto oc = cnext::measure_operator_constants(s, p, rng, c.calibration_draws);
    auto e = cnext::scheme_json(s, p);
    e["C"] = oc.C;
    e["r"] = oc.r;
    e["delta"] = oc.delta;
    e["scaled_error"] = oc.scaled_error;
    if (s.measured) e["closed_form"] = {{"C", s.C}, {"r", s.r}, {"delta", s.delta}};
    j["schemes"].push_back(e);
    std::cout << s.label() << ": C=" << oc.C << " r=" << oc.r << " delta=" << oc.delta << "\n";
  }
  write_json(fs::path(c.output) / "operators.json", j);
  return kOk;
}

void write_error(const cnext::ExperimentConfig* c, const json& err) {
  std::cerr << err.dump() << "\n";
  if (c == nullptr) return;
  try {
    write_json(fs::path(c->output) / "error.json", err);
  } catch (...) {
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressed Newton-type decentralized optimization harness"};
  app.require_subcommand(1);
  Overrides o;
  auto* run = app.add_subcommand("run", "single run, optionally averaged over seeds");
  auto* compare = app.add_subcommand("compare", "run every variant on the same data and seed");
  auto* theory = app.add_subcommand("theory", "contraction matrix and step-size condition report");
  auto* verify = app.add_subcommand("verify-ops", "measure compression operator constants");
  for (auto* sub : {run, compare, theory, verify}) add_common(sub, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigExit;
  }

  std::optional<cnext::ExperimentConfig> cfg;
  try {
    cfg = resolve(o);
    if (run->parsed()) return cmd_run(*cfg);
    if (compare->parsed()) return cmd_compare(*cfg);
    if (theory->parsed()) return cmd_theory(*cfg);
    return cmd_verify_ops(*cfg);
  } catch (const cnext::ConfigError& e) {
    write_error(nullptr, {{"error", "config"}, {"field", e.field()}, {"line", e.line()}, {"message", e.what()}});
    return kConfigExit;
  } catch (const cnext::InvalidArgument& e) {
    write_error(nullptr, {{"error", "config"}, {"message", e.what()}});
    return kConfigExit;
  } catch (const cnext::DivergenceError& e) {
    write_error(cfg ? &*cfg : nullptr, {{"error", "divergence"},
                                        {"quantity", e.quantity()},
                                        {"iteration", e.iteration()},
                                        {"message", e.what()}});
    return kDivergenceExit;
  } catch (const cnext::NumericalFailure& e) {
    write_error(cfg ? &*cfg : nullptr,
                {{"error", "numerical"}, {"agent", e.agent()}, {"message", e.what()}});
    return kDivergenceExit;
  } catch (const cnext::IoError& e) {
    write_error(nullptr, {{"error", "io"}, {"message", e.what()}});
    return kIoExit;
  } catch (const cnext::ParseError& e) {
    write_error(nullptr, {{"error", "io"}, {"row", e.row()}, {"message", e.what()}});
    return kIoExit;
  } catch (const std::exception& e) {
    write_error(nullptr, {{"error", "internal"}, {"message", e.what()}});
    return kFailure;
  }
}
