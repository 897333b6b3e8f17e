#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "objective.hpp"
#include "rng.hpp"

namespace cnext {

enum class Provenance { SyntheticRidge, SyntheticLogistic, CovType };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::SyntheticRidge: return "synthetic_ridge";
    case Provenance::SyntheticLogistic: return "synthetic_logistic";
    case Provenance::CovType: return "covtype";
  }
  return "?";
}

struct Dataset {
  Eigen::MatrixXd U;  ///< N x p features
  Eigen::VectorXd v;  ///< targets or +-1 labels
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  Provenance provenance = Provenance::SyntheticRidge;

  std::optional<Eigen::VectorXd> hidden_model;  ///< generating model, synthetic only
  std::vector<double> explained_variance;       ///< PCA ratios, CovType only
  std::size_t raw_rows = 0;

  std::size_t size() const { return static_cast<std::size_t>(U.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(U.cols()); }
};

inline constexpr double kRidgeNoiseStddev = 0.1;

/// Gaussian features, Gaussian hidden model, b = a x~ + noise.
/// Rows are shuffled by a seeded permutation; everything lands in `train`.
inline Dataset generate_ridge_synthetic(std::size_t N, std::size_t p, std::uint64_t seed,
                                        double noise = kRidgeNoiseStddev) {
  if (N == 0 || p == 0) throw InvalidArgument("synthetic data needs N, p >= 1");
  auto rng = make_engine(seed, 0x5157);
  const auto rows = static_cast<Eigen::Index>(N), cols = static_cast<Eigen::Index>(p);

  Eigen::VectorXd hidden(cols);
  for (auto& e : hidden) e = standard_normal(rng);
  Eigen::MatrixXd U(rows, cols);
  Eigen::VectorXd v(rows);
  for (Eigen::Index j = 0; j < rows; ++j) {
    for (Eigen::Index c = 0; c < cols; ++c) U(j, c) = standard_normal(rng);
    v[j] = U.row(j).dot(hidden) + noise * standard_normal(rng);
  }

  std::vector<std::size_t> perm(N);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  shuffle(perm, rng);
  Dataset ds;
  ds.U.resize(rows, cols);
  ds.v.resize(rows);
  for (std::size_t j = 0; j < N; ++j) {
    ds.U.row(static_cast<Eigen::Index>(j)) = U.row(static_cast<Eigen::Index>(perm[j]));
    ds.v[static_cast<Eigen::Index>(j)] = v[static_cast<Eigen::Index>(perm[j])];
  }
  ds.train.resize(N);
  std::iota(ds.train.begin(), ds.train.end(), std::size_t{0});
  ds.hidden_model = std::move(hidden);
  ds.raw_rows = N;
  return ds;
}

/// Labels sign(a x~ + noise) with Gaussian features; `test_fraction` of the
/// rows are held out.
inline Dataset generate_logistic_synthetic(std::size_t N, std::size_t p, std::uint64_t seed,
                                           double test_fraction = 0.2, double noise = 0.5) {
  if (N < 2 || p == 0) throw InvalidArgument("synthetic data needs N >= 2, p >= 1");
  auto rng = make_engine(seed, 0x106);
  const auto rows = static_cast<Eigen::Index>(N), cols = static_cast<Eigen::Index>(p);
  Dataset ds;
  ds.provenance = Provenance::SyntheticLogistic;
  Eigen::VectorXd hidden(cols);
  for (auto& e : hidden) e = standard_normal(rng);
  ds.U.resize(rows, cols);
  ds.v.resize(rows);
  for (Eigen::Index j = 0; j < rows; ++j) {
    for (Eigen::Index c = 0; c < cols; ++c) ds.U(j, c) = standard_normal(rng);
    ds.v[j] = ds.U.row(j).dot(hidden) + noise * standard_normal(rng) >= 0.0 ? 1.0 : -1.0;
  }
  std::vector<std::size_t> perm(N);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  shuffle(perm, rng);
  const auto n_test = std::min<std::size_t>(
      N - 1, static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(N))));
  ds.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  ds.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  ds.hidden_model = std::move(hidden);
  ds.raw_rows = N;
  return ds;
}

inline constexpr std::size_t kCovTypeFeatures = 54;
inline constexpr std::size_t kCovTypeReferenceRows = 566602;
inline constexpr std::size_t kCovTypeReferenceTrain = 400000;
inline constexpr int kCovTypePositiveClass = 2;

/// Training-set size: the reference 400000 / 566602 proportion, rounded up
/// to a multiple of the agent count so every agent gets the same share.
inline std::size_t covtype_train_count(std::size_t rows, std::size_t agents) {
  if (agents == 0) throw InvalidArgument("agent count must be positive");
  const double target = static_cast<double>(rows) * static_cast<double>(kCovTypeReferenceTrain) /
                        static_cast<double>(kCovTypeReferenceRows);
  const auto per_agent = static_cast<std::size_t>(std::ceil(target / static_cast<double>(agents) - 1e-9));
  return std::min(rows, per_agent * agents);
}

namespace detail {

inline double parse_field(std::string_view tok, std::size_t row) {
  while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r'))
    tok.remove_suffix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(value))
    throw ParseError(row, "cannot parse field '" + std::string(tok) + "'");
  return value;
}

}  // namespace detail

/// Reads the UCI covertype CSV (54 features then the class in 1..7),
/// standardizes the features, projects onto the top `p_reduced` principal
/// components, maps class 2 to +1 and the rest to -1, shuffles with `seed`
/// and splits train/test for `agents` agents.
inline Dataset load_covtype(const std::string& path, std::size_t p_reduced, std::uint64_t seed,
                            std::size_t agents) {
  if (p_reduced == 0 || p_reduced > kCovTypeFeatures)
    throw InvalidArgument("PCA dimension must lie in [1, 54]");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open covtype file '" + path + "'");

  std::vector<double> features;
  std::vector<double> labels;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::string_view rest(line);
    std::size_t fields = 0;
    while (true) {
      const auto comma = rest.find(',');
      const auto tok = rest.substr(0, comma);
      const double value = detail::parse_field(tok, row);
      if (fields < kCovTypeFeatures) {
        features.push_back(value);
      } else if (fields == kCovTypeFeatures) {
        if (value < 1.0 || value > 7.0 || value != std::floor(value))
          throw ParseError(row, "class label must be an integer in 1..7");
        labels.push_back(static_cast<int>(value) == kCovTypePositiveClass ? 1.0 : -1.0);
      }
      ++fields;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields != kCovTypeFeatures + 1)
      throw ParseError(row, "expected 55 fields, found " + std::to_string(fields));
  }
  const std::size_t N = labels.size();
  if (N < 2) throw ParseError(row, "covtype file has fewer than two rows");
  if (agents == 0 || agents > N) throw InvalidArgument("agent count out of range");

  const auto rows = static_cast<Eigen::Index>(N), cols = static_cast<Eigen::Index>(kCovTypeFeatures);
  Eigen::MatrixXd X = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      features.data(), rows, cols);
  features.clear();
  features.shrink_to_fit();

  const Eigen::RowVectorXd mean = X.colwise().mean();
  X.rowwise() -= mean;
  Eigen::RowVectorXd sd = (X.colwise().squaredNorm() / static_cast<double>(N)).cwiseSqrt();
  for (auto& s : sd)
    if (s == 0.0) s = 1.0;  // constant column stays at zero
  X.array().rowwise() /= sd.array();

  const Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(N);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const double total = es.eigenvalues().sum();
  const auto k = static_cast<Eigen::Index>(p_reduced);
  // Eigenvalues come out ascending; take the last k columns in reverse.
  Eigen::MatrixXd basis(cols, k);
  Dataset ds;
  ds.provenance = Provenance::CovType;
  for (Eigen::Index c = 0; c < k; ++c) {
    basis.col(c) = es.eigenvectors().col(cols - 1 - c);
    ds.explained_variance.push_back(es.eigenvalues()[cols - 1 - c] / total);
  }
  const Eigen::MatrixXd projected = X * basis;

  std::vector<std::size_t> perm(N);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto rng = make_engine(seed, 0xC0F);
  shuffle(perm, rng);
  ds.U.resize(rows, k);
  ds.v.resize(rows);
  for (std::size_t j = 0; j < N; ++j) {
    ds.U.row(static_cast<Eigen::Index>(j)) = projected.row(static_cast<Eigen::Index>(perm[j]));
    ds.v[static_cast<Eigen::Index>(j)] = labels[perm[j]];
  }
  const auto n_train = covtype_train_count(N, agents);
  ds.train.resize(n_train);
  std::iota(ds.train.begin(), ds.train.end(), std::size_t{0});
  ds.test.resize(N - n_train);
  std::iota(ds.test.begin(), ds.test.end(), n_train);
  ds.raw_rows = N;
  return ds;
}

struct Partition {
  std::vector<std::vector<std::size_t>> assignments;
  std::size_t per_agent = 0;
  std::size_t dropped = 0;
};

/// Seeded shuffle of the training indices, then contiguous blocks of
/// floor(|train| / n). Leftovers are dropped.
inline Partition partition_homogeneous(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("agent count must be positive");
  if (n > ds.train.size()) throw InvalidArgument("more agents than training samples");
  std::vector<std::size_t> order = ds.train;
  auto rng = make_engine(seed, 0x9A27);
  shuffle(order, rng);
  Partition part;
  part.per_agent = order.size() / n;
  part.dropped = order.size() - part.per_agent * n;
  part.assignments.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    part.assignments[i].assign(order.begin() + static_cast<std::ptrdiff_t>(i * part.per_agent),
                               order.begin() + static_cast<std::ptrdiff_t>((i + 1) * part.per_agent));
  return part;
}

inline std::vector<LocalData> local_data(const Dataset& ds, const Partition& part) {
  std::vector<LocalData> out;
  out.reserve(part.assignments.size());
  for (const auto& idx : part.assignments) {
    LocalData d;
    d.A.resize(static_cast<Eigen::Index>(idx.size()), ds.U.cols());
    d.b.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      d.A.row(static_cast<Eigen::Index>(r)) = ds.U.row(static_cast<Eigen::Index>(idx[r]));
      d.b[static_cast<Eigen::Index>(r)] = ds.v[static_cast<Eigen::Index>(idx[r])];
    }
    out.push_back(std::move(d));
  }
  return out;
}

/// Fraction of the given rows with sign(x'u) equal to the label.
inline double classification_accuracy(const Dataset& ds, const std::vector<std::size_t>& rows,
                                      const Eigen::VectorXd& x) {
  if (rows.empty()) return 0.0;
  std::size_t hit = 0;
  for (auto r : rows) {
    const double score = ds.U.row(static_cast<Eigen::Index>(r)).dot(x);
    const double pred = score >= 0.0 ? 1.0 : -1.0;
    if (pred == ds.v[static_cast<Eigen::Index>(r)]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(rows.size());
}

}  // namespace cnext
