#include "odisar/timeseries.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

namespace odisar {
namespace {

MultivariateSeries ramp_series(long t, long d) {
  std::vector<std::string> names;
  for (long f = 0; f < d; ++f) names.push_back("f" + std::to_string(f));
  MultivariateSeries s;
  s.schema = FeatureSchema(names);
  s.values.resize(t, d);
  for (long i = 0; i < t; ++i)
    for (long f = 0; f < d; ++f) s.values(i, f) = static_cast<double>(i * 10 + f);
  return s;
}

TEST(FeatureSchema, RejectsDuplicatesAndEmptyNames) {
  EXPECT_THROW(FeatureSchema({"a", "a"}), ConfigError);
  EXPECT_THROW(FeatureSchema({"a", ""}), ConfigError);
  EXPECT_THROW(FeatureSchema(std::vector<std::string>{}), ConfigError);
  EXPECT_THROW(FeatureSchema({"a", "b"}, {"m"}), ConfigError);
}

TEST(Csv, ParsesThreeRobotRows) {
  std::istringstream in("x,y,theta\n0,0,0\n1,2,0.5\n2,4,1\n");
  const auto s = parse_csv(in, FeatureSchema::robot(), 10.0);
  EXPECT_EQ(s.steps(), 3);
  EXPECT_EQ(s.features(), 3);
  EXPECT_DOUBLE_EQ(s.values(1, 1), 2.0);
}

TEST(Csv, AcceptsCrlfReorderedAndExtraColumns) {
  std::istringstream in("theta,extra,y,x\r\n1,9,2,3\r\n4,9,5,6\r\n");
  const auto s = parse_csv(in, FeatureSchema::robot(), 10.0);
  ASSERT_EQ(s.steps(), 2);
  EXPECT_DOUBLE_EQ(s.values(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(s.values(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(s.values(1, 2), 4.0);
}

TEST(Csv, MissingColumnIsNamed) {
  std::istringstream in("Surge Speed,Sway Speed,Roll Angle,Roll Rate\n1,2,3,4\n");
  try {
    parse_csv(in, FeatureSchema::vessel(), 1.0);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("Yaw Rate"), std::string::npos);
  }
}

TEST(Csv, RejectsNonNumericAndShortRows) {
  std::istringstream bad("x,y,theta\n1,nan,3\n");
  EXPECT_THROW(parse_csv(bad, FeatureSchema::robot(), 10.0), ParseError);
  std::istringstream text("x,y,theta\n1,abc,3\n");
  EXPECT_THROW(parse_csv(text, FeatureSchema::robot(), 10.0), ParseError);
  std::istringstream shorter("x,y,theta\n1,2\n");
  EXPECT_THROW(parse_csv(shorter, FeatureSchema::robot(), 10.0), ParseError);
  std::istringstream empty("");
  EXPECT_THROW(parse_csv(empty, FeatureSchema::robot(), 10.0), ParseError);
}

TEST(Csv, TwentyMinutesAtOneHertz) {
  std::ostringstream text;
  text << "Surge Speed,Sway Speed,Yaw Rate,Roll Angle,Roll Rate\n";
  for (int i = 0; i < 1200; ++i) text << i << ",0,0,0,0\n";
  std::istringstream in(text.str());
  EXPECT_EQ(parse_csv(in, FeatureSchema::vessel(), 1.0).steps(), 1200);
}

TEST(Csv, WriteThenParseIsExact) {
  MultivariateSeries s = ramp_series(7, 3);
  s.values(3, 1) = 0.1 + 0.2;
  s.values(5, 2) = -1.0 / 3.0;
  std::ostringstream out;
  write_csv(out, s);
  std::istringstream in(out.str());
  const auto back = parse_csv(in, s.schema, 1.0);
  EXPECT_EQ(back.values, s.values);
}

TEST(Normalizer, TwoPointStatistics) {
  Matrix x(2, 1);
  x << 1.0, 3.0;
  const auto n = fit_normalizer(x, FeatureSchema({"a"}));
  EXPECT_DOUBLE_EQ(n.mean(0), 2.0);
  EXPECT_DOUBLE_EQ(n.stddev(0), std::sqrt(2.0));
}

TEST(Normalizer, ConstantColumnRejected) {
  Matrix x(3, 2);
  x << 5, 1, 5, 2, 5, 3;
  EXPECT_THROW(fit_normalizer(x, FeatureSchema({"a", "b"})), ConfigError);
}

TEST(Normalizer, CentersAndRoundTrips) {
  Matrix x = Matrix::Random(50, 4) * 7.0;
  x.col(2).array() += 1000.0;
  const auto n = fit_normalizer(x, FeatureSchema({"a", "b", "c", "d"}));
  const Matrix z = n.normalize(x);
  for (Eigen::Index j = 0; j < z.cols(); ++j) EXPECT_NEAR(z.col(j).mean(), 0.0, 1e-9);
  const Matrix back = n.denormalize(z);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(back.data()[i], x.data()[i], 1e-9 * std::max(1.0, std::abs(x.data()[i])));
  }
  EXPECT_THROW(n.normalize(Matrix::Zero(3, 2)), ShapeError);
}

TEST(Windows, CountsMatchEnumeration) {
  EXPECT_EQ(make_windows(ramp_series(10, 2), 3, 2, 1).size(), 6u);
  EXPECT_EQ(window_count(1200, 60, 60, 60), 19u);
  // Offsets 0, 60, ..., 1080 are the only ones with off + 120 <= 1200.
  std::size_t n = 0;
  for (long off = 0; off + 120 <= 1200; off += 60) ++n;
  EXPECT_EQ(n, 19u);
  EXPECT_EQ(make_windows(ramp_series(1200, 1), 60, 60, 60).size(), 19u);
  EXPECT_THROW(make_windows(ramp_series(4, 1), 3, 2, 1), ConfigError);
}

TEST(Windows, ShapesAndStepRanges) {
  auto s = ramp_series(20, 2);
  s.origin_timestep = 100;
  const auto ws = make_windows(s, 4, 3, 2);
  for (const auto& p : ws) {
    EXPECT_EQ(p.input.rows(), 4);
    EXPECT_EQ(p.target.rows(), 3);
    EXPECT_EQ(p.end_step - p.forecast_start() + 1, 3);
    EXPECT_EQ(p.end_step - p.start_step + 1, 7);
    const long off = p.start_step - 100;
    EXPECT_EQ(p.input(0, 0), s.values(off, 0));
    EXPECT_EQ(p.target(0, 1), s.values(off + 4, 1));
  }
}

TEST(Split, FloorRule) {
  const auto ten = split_chrono(make_windows(ramp_series(14, 1), 3, 2, 1), 0.6, 0.2);
  EXPECT_EQ(ten.train.size(), 6u);
  EXPECT_EQ(ten.val.size(), 2u);
  EXPECT_EQ(ten.test.size(), 2u);
  const auto nineteen = split_chrono(make_windows(ramp_series(1200, 1), 60, 60, 60), 0.7, 0.15);
  EXPECT_EQ(nineteen.train.size(), 13u);
  EXPECT_EQ(nineteen.val.size(), 2u);
  EXPECT_EQ(nineteen.test.size(), 4u);
  EXPECT_LT(nineteen.train.back().start_step, nineteen.val.front().start_step);
  EXPECT_THROW(split_chrono({}, 1.0, 0.1), ConfigError);
}

}  // namespace
}  // namespace odisar
