#include "odisar/checkpoint.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace odisar {
namespace {

namespace fs = std::filesystem;

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("odisar_ckpt_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const char* name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

ModelConfig small(ModelConfig c) {
  c.d_model = 16;
  c.n_heads = 4;
  c.d_ff = 32;
  c.w = 6;
  c.h = 4;
  return c;
}

Normalizer some_normalizer(long d) {
  Normalizer n;
  n.mean = RowVector::LinSpaced(d, -1.0, 2.0);
  n.stddev = RowVector::LinSpaced(d, 0.5, 3.0);
  return n;
}

TEST_F(CheckpointTest, RoundTripIsBitIdentical) {
  const DTModel m(small(ModelConfig::vessel()), 11);
  save_checkpoint(path("m.json"), m, some_normalizer(5), FeatureSchema::vessel());
  const auto c = load_checkpoint(path("m.json"));
  EXPECT_EQ(c.schema, FeatureSchema::vessel());
  EXPECT_EQ(c.normalizer.mean, some_normalizer(5).mean);
  EXPECT_EQ(c.normalizer.stddev, some_normalizer(5).stddev);
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix x(6, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const auto a = m.forward(x, nn::Mode::Eval);
    const auto b = c.model.forward(x, nn::Mode::Eval);
    EXPECT_EQ(a.forecast, b.forecast);
    EXPECT_EQ(a.recon, b.recon);
  }
}

TEST_F(CheckpointTest, RecordsProfileDropout) {
  save_checkpoint(path("v.json"), DTModel(small(ModelConfig::vessel()), 1), some_normalizer(5),
                  FeatureSchema::vessel());
  EXPECT_EQ(load_checkpoint(path("v.json")).config.dropout, 0.1);
  save_checkpoint(path("r.json"), DTModel(small(ModelConfig::robot()), 1), some_normalizer(3),
                  FeatureSchema::robot());
  EXPECT_EQ(load_checkpoint(path("r.json")).config.dropout, 0.2);
}

TEST_F(CheckpointTest, TruncatedFileRejected) {
  save_checkpoint(path("m.json"), DTModel(small(ModelConfig::vessel()), 1), some_normalizer(5),
                  FeatureSchema::vessel());
  const auto size = fs::file_size(path("m.json"));
  fs::resize_file(path("m.json"), size / 2);
  try {
    load_checkpoint(path("m.json"));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
  EXPECT_THROW(load_checkpoint(path("absent.json")), ParseError);
}

TEST_F(CheckpointTest, VersionAndTensorChecks) {
  const DTModel m(small(ModelConfig::vessel()), 1);
  auto j = nlohmann::json::parse(checkpoint_to_json(m, some_normalizer(5), FeatureSchema::vessel()).dump());
  auto wrong_version = j;
  wrong_version["version"] = 99;
  try {
    checkpoint_from_json(wrong_version);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("version 1"), std::string::npos);
  }
  auto wrong_format = j;
  wrong_format["format"] = "something-else";
  EXPECT_THROW(checkpoint_from_json(wrong_format), ParseError);

  auto missing = j;
  missing["parameters"].erase(missing["parameters"].begin());
  EXPECT_THROW(checkpoint_from_json(missing), ParseError);

  auto extra = j;
  extra["parameters"]["bogus"] = extra["parameters"].begin().value();
  EXPECT_THROW(checkpoint_from_json(extra), ParseError);

  auto bad_shape = j;
  bad_shape["parameters"].begin().value()["rows"] = 1234;
  EXPECT_THROW(checkpoint_from_json(bad_shape), ParseError);
}

}  // namespace
}  // namespace odisar
