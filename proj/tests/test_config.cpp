#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "scoreflow/config.hpp"
#include "scoreflow/error.hpp"

using namespace scoreflow;
using namespace scoreflow::io;

#ifndef SCOREFLOW_SOURCE_DIR
#error "SCOREFLOW_SOURCE_DIR must point at the project root"
#endif

namespace {

std::string error_of(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  const auto c = parse_config("");
  EXPECT_TRUE(same_settings(c, RunConfig{}));
  EXPECT_EQ(c.finetune.sampler.steps, 4u);
  EXPECT_EQ(c.finetune.sigma_min, 0.10);
  EXPECT_EQ(c.finetune.sigma_max, 0.24);
  for (const auto& [key, origin] : c.provenance) EXPECT_EQ(origin, "default") << key;
}

TEST(Config, CommentsAndBlankLinesIgnored) {
  const auto c = parse_config("# header\n\n  seed = 12   # trailing\n");
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.flow.seed, 12u);
  EXPECT_EQ(c.provenance.at("seed"), "file");
}

TEST(Config, InvertedBoundsNameBothKeys) {
  const auto msg = error_of("score_control.sigma_min = 0.3\nscore_control.sigma_max = 0.2\n");
  EXPECT_NE(msg.find("score_control.sigma_min"), std::string::npos) << msg;
  EXPECT_NE(msg.find("score_control.sigma_max"), std::string::npos) << msg;
}

TEST(Config, UnknownKeyRejected) {
  const auto msg = error_of("ppo.clip_ratio = 0.2\n");
  EXPECT_NE(msg.find("ppo.clip_ratio"), std::string::npos) << msg;
}

TEST(Config, TypeMismatchNamesKey) {
  const auto msg = error_of("sampler.steps = four\n");
  EXPECT_NE(msg.find("sampler.steps"), std::string::npos) << msg;
  EXPECT_FALSE(error_of("ppo.normalize_reward = maybe\n").empty());
}

TEST(Config, DuplicateKeyRejected) { EXPECT_FALSE(error_of("seed = 1\nseed = 2\n").empty()); }

TEST(Config, CrossFieldConstraints) {
  EXPECT_FALSE(error_of("ppo.clip_eps = 0\n").empty());
  EXPECT_FALSE(error_of("ppo.gamma = 1.0\n").empty());
  EXPECT_FALSE(error_of("ppo.gae_lambda = 1.5\n").empty());
  EXPECT_FALSE(error_of("sampler.steps = 0\n").empty());
  EXPECT_FALSE(error_of("sampler.clip_final = 4\nsampler.clip_intermediate = 3\n").empty());
  EXPECT_FALSE(error_of("sampler.variant = diffusion\n").empty());
}

TEST(Config, GymPresetValues) {
  const auto c = load_config(std::string(SCOREFLOW_SOURCE_DIR) + "/configs/gym.cfg");
  EXPECT_EQ(c.finetune.sampler.steps, 4u);
  EXPECT_EQ(c.finetune.ppo.gamma, 0.99);
  EXPECT_EQ(c.finetune.ppo.gae_lambda, 0.95);
  EXPECT_EQ(c.finetune.ppo.clip_eps, 0.01);
  EXPECT_EQ(c.finetune.sigma_min, 0.10);
  EXPECT_EQ(c.finetune.sigma_max, 0.24);
}

TEST(Config, ShippedPresetsLoad) {
  for (const auto& e : std::filesystem::directory_iterator(std::string(SCOREFLOW_SOURCE_DIR) + "/configs")) {
    EXPECT_NO_THROW(load_config(e.path().string())) << e.path();
  }
}

TEST(Config, CanonicalTextRoundTrips) {
  auto c = parse_config("seed = 3\nsampler.variant = alpha_one\nppo.entropy_coef = 0.0123456789\nseeds = 4,5\n");
  const auto again = parse_config(to_text(c));
  EXPECT_TRUE(same_settings(c, again));
  EXPECT_EQ(to_text(again), to_text(c));
}

TEST(Config, EveryKeyAppearsInCanonicalText) {
  const auto text = to_text(RunConfig{});
  for (const auto& k : config_keys()) EXPECT_NE(text.find(k + " = "), std::string::npos) << k;
}

TEST(Config, EnvSeedOverride) {
  auto c = parse_config("seed = 1\n");
  ::setenv("SCOREFLOW_SEED", "77", 1);
  EXPECT_TRUE(apply_env_overrides(c));
  ::unsetenv("SCOREFLOW_SEED");
  EXPECT_EQ(c.seed, 77u);
  EXPECT_EQ(c.provenance.at("seed"), "env");
  EXPECT_FALSE(apply_env_overrides(c));
}

TEST(Config, MissingFileIsError) { EXPECT_THROW(load_config("/nonexistent/run.cfg"), ConfigError); }

TEST(Config, EnvKeysReachFinetune) {
  const auto c = parse_config("env.horizon = 12\nenv.action_scale = 0.2\n");
  EXPECT_EQ(c.finetune.env.horizon, 12u);
  EXPECT_EQ(c.finetune.env.action_scale, 0.2);
}
