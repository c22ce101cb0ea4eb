#include <gtest/gtest.h>

#include "run_config.hpp"

using namespace lqe;
using namespace lqe::cli;

TEST(RunConfig, UnknownKeyIsNamed) {
  RunConfig c;
  try {
    set_key(c, "train.stepz", "10");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.stepz"), std::string::npos);
  }
}

TEST(RunConfig, BadValues) {
  RunConfig c;
  EXPECT_THROW(set_key(c, "train.steps", "ten"), ConfigError);
  EXPECT_THROW(set_key(c, "head.include_variance", "maybe"), ConfigError);
  EXPECT_THROW(set_key(c, "head.variant", "gflv3"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "train.steps 10\n"), ConfigError);
}

TEST(RunConfig, Precedence) {
  RunConfig c;
  const int default_steps = c.train.steps;
  apply_config_text(c, "# comment\n\ntrain.steps = 17\nhead.k = 3\n");
  EXPECT_EQ(c.train.steps, 17);
  EXPECT_NE(c.train.steps, default_steps);
  set_key(c, "train.steps", "23");
  EXPECT_EQ(c.train.steps, 23);
  EXPECT_EQ(c.k, 3);
}

TEST(RunConfig, EveryKeyRoundTrips) {
  RunConfig a;
  a.set_seed(99);
  RunConfig b;
  for (const auto& key : config_keys()) set_key(b, key, get_key(a, key));
  EXPECT_EQ(snapshot(a), snapshot(b));
  EXPECT_EQ(snapshot(a).size(), config_keys().size());
}

TEST(RunConfig, ValidateRejectsNonsense) {
  RunConfig c;
  EXPECT_NO_THROW(validate(c));
  c.train.steps = -1;
  EXPECT_THROW(validate(c), ConfigError);
  c = RunConfig{};
  c.k = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c = RunConfig{};
  c.scene.noise_sigma = -1;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(RunManifest, RoundTrip) {
  RunConfig c;
  c.set_seed(4);
  auto m = make_manifest("train", c);
  m.inputs["scenes"] = "fixtures/scenes";
  m.artifacts = {"checkpoint.json", "train_log.csv"};
  const auto text = manifest_to_json(m);
  const auto back = manifest_from_json(text);
  EXPECT_EQ(manifest_to_json(back), text);
  EXPECT_EQ(back.seed, 4u);
  EXPECT_EQ(back.artifacts, m.artifacts);
}
