#include "nnpi/data.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

using namespace nnpi;

namespace {

Dataset parse(const std::string& text, const Schema& schema = {}) {
  std::istringstream in(text);
  return load_dataset(in, schema);
}

Dataset make(const Matrix& x, const Vector& y, const std::vector<std::string>& subjects) {
  Dataset ds;
  ds.features = x;
  ds.labels = y;
  ds.subject_ids = subjects;
  return ds;
}

}  // namespace

TEST(Load, ThreeRowsTwoFeatures) {
  const auto ds = parse("subject,label,a,b\ns1,0,1.5,2\ns1,1,3,4\ns2,4,5,6e-1\n");
  EXPECT_EQ(ds.rows(), 3u);
  EXPECT_EQ(ds.cols(), 2u);
  EXPECT_DOUBLE_EQ(ds.features(2, 1), 0.6);
  EXPECT_DOUBLE_EQ(ds.labels[2], 4.0);
  EXPECT_EQ(ds.subject_ids[2], "s2");
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_DOUBLE_EQ(ds.label_range(), 4.0);
}

TEST(Load, ColumnOrderIsFree) {
  const auto ds = parse("f1,label,subject\n0.25,3,x\n");
  EXPECT_EQ(ds.cols(), 1u);
  EXPECT_DOUBLE_EQ(ds.features(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(ds.labels[0], 3.0);
  EXPECT_EQ(ds.subject_ids[0], "x");
}

TEST(Load, ByteOrderMarkAndCrlf) {
  const auto ds = parse("\xEF\xBB\xBFsubject,label,f01\r\ns,1,2\r\n");
  EXPECT_EQ(ds.rows(), 1u);
  EXPECT_DOUBLE_EQ(ds.features(0, 0), 2.0);
}

TEST(Load, ExplicitFeatureColumns) {
  Schema s;
  s.feature_columns = {"c", "a"};
  s.delimiter = ';';
  const auto ds = parse("subject;label;a;b;c\nq;0;1;2;3\n", s);
  ASSERT_EQ(ds.cols(), 2u);
  EXPECT_DOUBLE_EQ(ds.features(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(ds.features(0, 1), 1.0);
}

TEST(Load, MissingLabelColumnIsSchemaError) {
  EXPECT_THROW(parse("subject,f01\ns,1\n"), SchemaError);
  EXPECT_THROW(parse("label,f01\n1,1\n"), SchemaError);
  EXPECT_THROW(parse("subject,label\ns,1\n"), SchemaError);
}

TEST(Load, NonNumericCellReportsRow) {
  try {
    parse("subject,label,f\ns,1,2\ns,1,2\ns,1,abc\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 3u);
  }
  EXPECT_THROW(parse("subject,label,f\ns,x,2\n"), ParseError);
  EXPECT_THROW(parse("subject,label,f\ns,1\n"), ParseError);
  EXPECT_THROW(parse("subject,label,f\ns,1,nan\n"), ParseError);
}

TEST(Load, EmptyInputs) {
  EXPECT_THROW(parse(""), EmptyInputError);
  EXPECT_THROW(parse("subject,label,f\n"), EmptyInputError);
  EXPECT_THROW(load_dataset(std::string("/nonexistent/file.csv")), Error);
}

TEST(Load, SaveRoundTripIsExact) {
  SynthConfig c;
  c.n = 50;
  c.d = 3;
  c.subjects = 5;
  c.clusters = 2;
  c.seed = 4;
  const auto ds = synth_generate(c);
  std::ostringstream out;
  save_dataset(out, ds);
  const auto back = parse(out.str());
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.subject_ids, ds.subject_ids);
  EXPECT_EQ(back.feature_names, default_feature_names(3));
}

TEST(Normalize, EndpointsMapToUnitInterval) {
  Matrix x(3, 1);
  x << 0, 2, 4;
  const auto n = minmax_normalize(make(x, Vector::Zero(3), {"a", "a", "a"}));
  EXPECT_DOUBLE_EQ(n.data.features(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(n.data.features(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(n.data.features(2, 0), 1.0);
  EXPECT_TRUE(n.warnings.empty());
}

TEST(Normalize, ConstantColumnMapsToZeroWithWarning) {
  Matrix x(3, 2);
  x << 5, 1, 5, 2, 5, 3;
  const auto n = minmax_normalize(make(x, Vector::Zero(3), {"a", "a", "a"}));
  EXPECT_TRUE(n.data.features.col(0).isZero());
  ASSERT_EQ(n.warnings.size(), 1u);
  EXPECT_NE(n.warnings[0].find("column 0"), std::string::npos);
}

TEST(Normalize, StoredParamsOnNewValue) {
  NormParams p;
  p.min = Vector::Constant(1, 0.0);
  p.max = Vector::Constant(1, 4.0);
  Matrix x(1, 1);
  x << 3.0;
  EXPECT_DOUBLE_EQ(p.apply(x)(0, 0), 0.75);
}

TEST(Normalize, LabelsUntouchedAndIdempotent) {
  Matrix x = Matrix::Random(40, 4) * 7.0;
  Vector y = Vector::LinSpaced(40, -1, 9);
  const auto n = minmax_normalize(make(x, y, std::vector<std::string>(40, "s")));
  EXPECT_EQ(n.data.labels, y);
  EXPECT_GE(n.data.features.minCoeff(), 0.0);
  EXPECT_LE(n.data.features.maxCoeff(), 1.0);
  const auto again = minmax_normalize(n.data);
  EXPECT_LT((again.data.features - n.data.features).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Normalize, JsonRoundTrip) {
  NormParams p;
  p.min = Vector::LinSpaced(3, 0.1, 0.3);
  p.max = Vector::LinSpaced(3, 1.1, 1.7);
  const auto q = NormParams::from_json(p.to_json());
  EXPECT_EQ(q.min, p.min);
  EXPECT_EQ(q.max, p.max);
  auto bad = p.to_json();
  bad["min"] = std::vector<double>{5, 0, 0};
  EXPECT_THROW(NormParams::from_json(bad), SchemaError);
  EXPECT_THROW(NormParams::from_json(nlohmann::json{{"format", "x"}}), SchemaError);
}

TEST(Normalize, ColumnMismatchThrows) {
  NormParams p;
  p.min = Vector::Zero(2);
  p.max = Vector::Ones(2);
  EXPECT_THROW(p.apply(Matrix::Zero(1, 3)), ShapeError);
}

TEST(Folds, LeaveOneOut) {
  const auto folds = kfold_split(10, 10, 1);
  for (const auto& f : folds) {
    EXPECT_EQ(f.test.size(), 1u);
    EXPECT_EQ(f.train.size(), 9u);
  }
}

TEST(Folds, NinetyTenSplit) {
  for (const auto& f : kfold_split(100, 10, 3)) EXPECT_EQ(f.train.size(), 90u);
}

TEST(Folds, PartitionForManyK) {
  for (std::size_t n : {7u, 23u, 100u})
    for (std::size_t k = 2; k <= std::min<std::size_t>(n, 12); ++k) {
      const auto folds = kfold_split(n, k, 99);
      ASSERT_EQ(folds.size(), k);
      std::vector<int> seen(n, 0);
      std::size_t lo = n, hi = 0;
      for (const auto& f : folds) {
        for (auto i : f.test) ++seen[i];
        lo = std::min(lo, f.test.size());
        hi = std::max(hi, f.test.size());
        std::set<std::size_t> train(f.train.begin(), f.train.end());
        for (auto i : f.test) EXPECT_EQ(train.count(i), 0u);
        EXPECT_EQ(train.size() + f.test.size(), n);
      }
      for (int c : seen) EXPECT_EQ(c, 1);
      EXPECT_LE(hi - lo, 1u);
    }
}

TEST(Folds, DeterministicPerSeed) {
  const auto a = kfold_split(50, 5, 17);
  const auto b = kfold_split(50, 5, 17);
  const auto c = kfold_split(50, 5, 18);
  bool differs = false;
  for (std::size_t f = 0; f < 5; ++f) {
    EXPECT_EQ(a[f].test, b[f].test);
    differs |= a[f].test != c[f].test;
  }
  EXPECT_TRUE(differs);
}

TEST(Folds, InvalidK) {
  EXPECT_THROW(kfold_split(5, 6, 0), ConfigError);
  EXPECT_THROW(kfold_split(5, 1, 0), ConfigError);
}

TEST(Profiles, LengthIsFeaturesTimesLevels) {
  Matrix x = Matrix::Constant(5, 22, 0.5);
  Vector y(5);
  y << 0, 1, 2, 3, 4;
  const auto set = subject_profiles(make(x, y, std::vector<std::string>(5, "s")), {0, 1, 2, 3, 4});
  ASSERT_EQ(set.profiles.size(), 1u);
  EXPECT_EQ(set.profiles[0].values.size(), 110u);
  for (double v : set.profiles[0].values) EXPECT_DOUBLE_EQ(v, 0.5);
  EXPECT_TRUE(set.warnings.empty());
}

TEST(Profiles, OneRowPerLevelReconstructsRows) {
  Matrix x(6, 2);
  x << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 0.0, 0.05;
  Vector y(6);
  y << 0, 1, 2, 0, 1, 2;
  const auto set = subject_profiles(make(x, y, {"a", "a", "a", "b", "b", "b"}), {0, 1, 2});
  ASSERT_EQ(set.profiles.size(), 2u);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t l = 0; l < 3; ++l)
      for (std::size_t j = 0; j < 2; ++j)
        EXPECT_DOUBLE_EQ(set.profiles[s].values[j * 3 + l], x(static_cast<Eigen::Index>(s * 3 + l), j));
}

TEST(Profiles, MissingLevelImputedFromOverallMean) {
  // three rows at levels 0, 0, 1 of a 3-level scale: level 2 is missing
  Matrix x(3, 1);
  x << 0.2, 0.4, 0.9;
  Vector y(3);
  y << 0, 0, 1;
  const auto set = subject_profiles(make(x, y, {"s", "s", "s"}), {0, 1, 2});
  const auto& v = set.profiles[0].values;
  EXPECT_DOUBLE_EQ(v[0], 0.3);
  EXPECT_DOUBLE_EQ(v[1], 0.9);
  EXPECT_DOUBLE_EQ(v[2], 0.5);  // (0.2 + 0.4 + 0.9) / 3
  ASSERT_EQ(set.warnings.size(), 1u);
  EXPECT_NE(set.warnings[0].find("level 2"), std::string::npos);
}

TEST(Profiles, ContinuousLabelsBinToNearestLowerOnTies) {
  EXPECT_EQ(nearest_level(1.49, {0, 1, 2}), 1u);
  EXPECT_EQ(nearest_level(1.5, {0, 1, 2}), 1u);
  EXPECT_EQ(nearest_level(1.51, {0, 1, 2}), 2u);
  EXPECT_EQ(nearest_level(-3, {0, 1, 2}), 0u);
  EXPECT_EQ(nearest_level(9, {0, 1, 2}), 2u);
}

TEST(Profiles, UnsortedLevelsRejected) {
  const auto ds = make(Matrix::Zero(1, 1), Vector::Zero(1), {"s"});
  EXPECT_THROW(subject_profiles(ds, {1, 0}), ConfigError);
  EXPECT_THROW(subject_profiles(ds, {}), ConfigError);
}

TEST(Synth, ZeroNoiseLiesOnMeanFunction) {
  SynthConfig c;
  c.n = 200;
  c.d = 3;
  c.subjects = 8;
  c.clusters = 4;
  c.noise = {NoiseKind::homoscedastic, 0.0, 0.0};
  const auto ds = synth_generate(c);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const auto cl = synth_cluster_of_subject(c, synth_subject_of_row(c, i));
    EXPECT_DOUBLE_EQ(ds.labels[i], synth_mean(cl, ds.features(i, 0)));
  }
}

TEST(Synth, DeterministicAndShaped) {
  SynthConfig c;
  c.seed = 5;
  const auto a = synth_generate(c);
  const auto b = synth_generate(c);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.rows(), 2000u);
  EXPECT_EQ(a.cols(), 22u);
  EXPECT_EQ(a.subjects().size(), 20u);
  c.seed = 6;
  EXPECT_NE(synth_generate(c).labels, a.labels);
}

TEST(Synth, SubjectsRoundRobinOverClusters) {
  SynthConfig c;
  c.subjects = 10;
  c.clusters = 4;
  EXPECT_EQ(synth_cluster_of_subject(c, 0), 0u);
  EXPECT_EQ(synth_cluster_of_subject(c, 5), 1u);
  EXPECT_EQ(synth_cluster_of_subject(c, 9), 1u);
}

TEST(Synth, HeteroscedasticResidualStdInTopBin) {
  SynthConfig c;
  c.n = 2000;
  c.d = 1;
  c.subjects = 1;
  c.clusters = 1;
  c.noise = {NoiseKind::heteroscedastic, 0.1, 0.4};
  c.seed = 21;
  const auto ds = synth_generate(c);
  double ss = 0.0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const double x0 = ds.features(i, 0);
    if (x0 < 0.9) continue;
    const double r = ds.labels[i] - synth_mean(0, x0);
    ss += r * r;
    ++m;
  }
  ASSERT_GT(m, 100u);
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(m)), 0.5, 0.05);
}

TEST(Synth, KnownNoiseCoverageOracle) {
  SynthConfig c;
  c.n = 10000;
  c.d = 1;
  c.subjects = 1;
  c.clusters = 1;
  c.seed = 8;
  const auto ds = synth_generate(c);
  const double z = 1.959963984540054;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const double x0 = ds.features(i, 0);
    if (std::abs(ds.labels[i] - synth_mean(0, x0)) <= z * c.noise.sigma(x0)) ++covered;
  }
  const double rate = static_cast<double>(covered) / 1e4;
  EXPECT_GE(rate, 0.93);
  EXPECT_LE(rate, 0.97);
}

TEST(Synth, TagFeaturesSeparateClustersOnAverage) {
  EXPECT_DOUBLE_EQ(synth_tag_mean(0, 1, 4), 0.3);
  EXPECT_DOUBLE_EQ(synth_tag_mean(3, 1, 4), 0.7);
  EXPECT_DOUBLE_EQ(synth_tag_mean(2, 1, 1), 0.5);
}

TEST(Synth, InvalidConfigs) {
  SynthConfig c;
  c.clusters = 0;
  EXPECT_THROW(synth_generate(c), ConfigError);
  c = {};
  c.subjects = 3;
  EXPECT_THROW(synth_generate(c), ConfigError);  // fewer subjects than clusters
  c = {};
  c.n = 10;
  EXPECT_THROW(synth_generate(c), ConfigError);
  c = {};
  c.noise.sigma0 = -1;
  EXPECT_THROW(synth_generate(c), ConfigError);
}
