#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include <cnext/data.hpp>

using namespace cnext;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "cnext_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Fake covertype rows: 54 numeric fields, class cycling through 1..7.
std::filesystem::path write_covtype(const std::string& name, std::size_t rows, std::uint64_t seed) {
  const auto path = temp_file(name);
  std::ofstream out(path);
  auto rng = make_engine(seed);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < kCovTypeFeatures; ++c) {
      // column 53 is constant to exercise the zero-variance path
      const double v = c == 53 ? 1.0 : (c < 10 ? 100.0 * uniform01(rng) : (bernoulli(rng, 0.3) ? 1.0 : 0.0));
      out << v << ',';
    }
    out << (r % 7) + 1 << '\n';
  }
  return path;
}

void expect_disjoint_cover(const Partition& part, const Dataset& ds) {
  std::set<std::size_t> seen;
  for (const auto& a : part.assignments) {
    EXPECT_EQ(a.size(), part.per_agent);
    for (auto i : a) EXPECT_TRUE(seen.insert(i).second) << "row " << i << " assigned twice";
  }
  const std::set<std::size_t> train(ds.train.begin(), ds.train.end());
  for (auto i : seen) EXPECT_TRUE(train.count(i));
  EXPECT_EQ(seen.size() + part.dropped, ds.train.size());
}

}  // namespace

TEST(Synthetic, RidgeShapesAndDeterminism) {
  const auto a = generate_ridge_synthetic(500, 20, 42);
  const auto b = generate_ridge_synthetic(500, 20, 42);
  const auto c = generate_ridge_synthetic(500, 20, 43);
  EXPECT_EQ(a.size(), 500u);
  EXPECT_EQ(a.dim(), 20u);
  EXPECT_EQ(a.train.size(), 500u);
  EXPECT_TRUE(a.test.empty());
  EXPECT_EQ(a.U, b.U);
  EXPECT_EQ(a.v, b.v);
  EXPECT_NE(a.U, c.U);
  EXPECT_EQ(a.provenance, Provenance::SyntheticRidge);
}

TEST(Synthetic, RidgeResidualsMatchNoiseLevel) {
  const auto ds = generate_ridge_synthetic(4000, 10, 1);
  ASSERT_TRUE(ds.hidden_model);
  const Eigen::VectorXd res = ds.v - ds.U * *ds.hidden_model;
  const double sd = std::sqrt(res.squaredNorm() / static_cast<double>(res.size()));
  EXPECT_NEAR(sd, kRidgeNoiseStddev, 0.01);
}

TEST(Synthetic, RidgeRejectsEmpty) {
  EXPECT_THROW(generate_ridge_synthetic(0, 5, 1), InvalidArgument);
  EXPECT_THROW(generate_ridge_synthetic(5, 0, 1), InvalidArgument);
}

TEST(Synthetic, LogisticLabelsAndSplit) {
  const auto ds = generate_logistic_synthetic(1000, 8, 3, 0.2);
  EXPECT_EQ(ds.test.size(), 200u);
  EXPECT_EQ(ds.train.size(), 800u);
  std::set<std::size_t> all(ds.train.begin(), ds.train.end());
  all.insert(ds.test.begin(), ds.test.end());
  EXPECT_EQ(all.size(), 1000u);
  for (double v : ds.v) EXPECT_TRUE(v == 1.0 || v == -1.0);
  // The generating model separates most rows.
  EXPECT_GT(classification_accuracy(ds, ds.test, *ds.hidden_model), 0.8);
}

TEST(CovType, TrainCountFollowsReferenceProportion) {
  EXPECT_EQ(covtype_train_count(kCovTypeReferenceRows, 10), kCovTypeReferenceTrain);
  // ceil(400000 / 14) * 14
  EXPECT_EQ(covtype_train_count(kCovTypeReferenceRows, 14), 400008u);
  EXPECT_EQ(covtype_train_count(100, 10) % 10, 0u);
  EXPECT_LE(covtype_train_count(3, 10), 3u);
  EXPECT_THROW(covtype_train_count(100, 0), InvalidArgument);
}

TEST(CovType, LoadsProjectsAndSplits) {
  const auto path = write_covtype("small.csv", 700, 5);
  const auto ds = load_covtype(path.string(), 10, 42, 10);
  EXPECT_EQ(ds.size(), 700u);
  EXPECT_EQ(ds.dim(), 10u);
  EXPECT_EQ(ds.raw_rows, 700u);
  EXPECT_EQ(ds.provenance, Provenance::CovType);
  EXPECT_EQ(ds.train.size() + ds.test.size(), 700u);
  EXPECT_EQ(ds.train.size() % 10, 0u);
  // Class 2 is every seventh row.
  EXPECT_EQ(std::count(ds.v.begin(), ds.v.end(), 1.0), 100);
  // Projected features are centred and the PCA columns are orthogonal.
  EXPECT_LE(ds.U.colwise().mean().cwiseAbs().maxCoeff(), 1e-10);
  const Eigen::MatrixXd gram = ds.U.transpose() * ds.U;
  for (Eigen::Index i = 0; i < 10; ++i)
    for (Eigen::Index j = 0; j < 10; ++j)
      if (i != j) EXPECT_LE(std::abs(gram(i, j)), 1e-8 * std::sqrt(gram(i, i) * gram(j, j)));
  ASSERT_EQ(ds.explained_variance.size(), 10u);
  EXPECT_TRUE(std::is_sorted(ds.explained_variance.rbegin(), ds.explained_variance.rend()));
  double total = 0.0;
  for (double r : ds.explained_variance) total += r;
  EXPECT_LE(total, 1.0 + 1e-12);
}

TEST(CovType, SameSeedSameShuffle) {
  const auto path = write_covtype("seeded.csv", 300, 6);
  const auto a = load_covtype(path.string(), 5, 1, 4);
  const auto b = load_covtype(path.string(), 5, 1, 4);
  const auto c = load_covtype(path.string(), 5, 2, 4);
  EXPECT_EQ(a.U, b.U);
  EXPECT_NE(a.v, c.v);
}

TEST(CovType, MissingFileIsIoError) {
  EXPECT_THROW(load_covtype("/nonexistent/covtype.data", 10, 1, 10), IoError);
}

TEST(CovType, ShortRowReportsLine) {
  const auto path = temp_file("short_row.csv");
  {
    std::ofstream out(path);
    for (int r = 0; r < 2; ++r) {
      for (std::size_t c = 0; c < kCovTypeFeatures; ++c) out << "1,";
      out << "2\n";
    }
    out << "1,2,3\n";
  }
  try {
    load_covtype(path.string(), 5, 1, 1);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 3u);
  }
}

TEST(CovType, BadFieldAndBadClassRejected) {
  const auto path = temp_file("bad_field.csv");
  {
    std::ofstream out(path);
    for (std::size_t c = 0; c < kCovTypeFeatures; ++c) out << (c == 7 ? "abc," : "1,");
    out << "2\n";
  }
  EXPECT_THROW(load_covtype(path.string(), 5, 1, 1), ParseError);
  const auto path2 = temp_file("bad_class.csv");
  {
    std::ofstream out(path2);
    for (std::size_t c = 0; c < kCovTypeFeatures; ++c) out << "1,";
    out << "9\n";
  }
  EXPECT_THROW(load_covtype(path2.string(), 5, 1, 1), ParseError);
  EXPECT_THROW(load_covtype(path2.string(), 0, 1, 1), InvalidArgument);
}

TEST(Partition, HomogeneousBlocksDropLeftovers) {
  const auto ds = generate_ridge_synthetic(503, 4, 2);
  const auto part = partition_homogeneous(ds, 10, 7);
  EXPECT_EQ(part.per_agent, 50u);
  EXPECT_EQ(part.dropped, 3u);
  expect_disjoint_cover(part, ds);
}

TEST(Partition, OnlyTrainingRowsAreAssigned) {
  const auto ds = generate_logistic_synthetic(400, 3, 4, 0.25);
  for (std::size_t n : {1u, 3u, 7u, 300u}) expect_disjoint_cover(partition_homogeneous(ds, n, 9), ds);
  EXPECT_THROW(partition_homogeneous(ds, 0, 1), InvalidArgument);
  EXPECT_THROW(partition_homogeneous(ds, 301, 1), InvalidArgument);
}

TEST(Partition, LocalDataCopiesRows) {
  const auto ds = generate_ridge_synthetic(40, 3, 5);
  const auto part = partition_homogeneous(ds, 4, 1);
  const auto locals = local_data(ds, part);
  ASSERT_EQ(locals.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t r = 0; r < part.per_agent; ++r) {
      const auto row = static_cast<Eigen::Index>(part.assignments[i][r]);
      EXPECT_EQ(locals[i].A.row(static_cast<Eigen::Index>(r)), ds.U.row(row));
      EXPECT_EQ(locals[i].b[static_cast<Eigen::Index>(r)], ds.v[row]);
    }
}

TEST(Accuracy, CountsSignAgreement) {
  Dataset ds;
  ds.U.resize(4, 1);
  ds.U << 1.0, -1.0, 2.0, 0.0;
  ds.v.resize(4);
  ds.v << 1.0, 1.0, 1.0, -1.0;
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
  // score 0 predicts +1, so the last row is a miss.
  EXPECT_DOUBLE_EQ(classification_accuracy(ds, {0, 1, 2, 3}, x), 0.5);
  EXPECT_EQ(classification_accuracy(ds, {}, x), 0.0);
}
