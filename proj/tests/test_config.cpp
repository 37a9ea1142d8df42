#include "diffcharge/config.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace dc = diffcharge;

namespace {

dc::RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return dc::parse_config(in);
}

TEST(Config, EmptyGivesDefaults) {
  const auto cfg = parse("");
  EXPECT_EQ(cfg, dc::RunConfig{});
  EXPECT_EQ(cfg.train.epochs, 200);
  EXPECT_EQ(cfg.train.batch_size, 4);
  EXPECT_EQ(cfg.train.early_stop_patience, 20);
  EXPECT_EQ(cfg.diffusion.steps, 50);
  EXPECT_EQ(cfg.network().attention_width(), 192);
  EXPECT_EQ(cfg.network().length, 720);
}

TEST(Config, SectionsAndTask) {
  const auto cfg = parse(
      "[run]\ntask = station\nseed = 9\n"
      "[train]\nepochs = 10\npatience = 3\nlr_decay = constant\n"
      "[data]\nstations = A,B,C\n");
  EXPECT_EQ(cfg.task, dc::Task::kStation);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.train.epochs, 10);
  EXPECT_EQ(cfg.train.lr_decay, dc::LrDecay::kConstant);
  EXPECT_TRUE(cfg.network().conditional);
  EXPECT_EQ(cfg.network().labels, 3);
  EXPECT_EQ(cfg.network().length, 288);
}

TEST(Config, SerializeRoundTrip) {
  dc::RunConfig cfg;
  cfg.task = dc::Task::kStation;
  cfg.seed = 123;
  cfg.train.learning_rate = 2.5e-4;
  cfg.diffusion.beta_last = 0.25;
  cfg.prices = "p.csv";
  cfg.stations = {"X", "Y"};
  EXPECT_EQ(parse(dc::serialize_config(cfg)), cfg);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse("[train]\nepocs = 3\n"), std::invalid_argument);
  EXPECT_THROW(parse("[train]\nepochs = many\n"), std::invalid_argument);
  EXPECT_THROW(parse("[train]\nepochs = 5\n"), std::invalid_argument);  // patience 20 > epochs
  EXPECT_THROW(parse("[network]\nhidden = 7\n"), std::invalid_argument);
  EXPECT_THROW(parse("[diffusion]\nbeta_last = 1.5\n"), std::invalid_argument);
  EXPECT_THROW(parse("[run]\ntask = fleet\n"), std::invalid_argument);
  EXPECT_THROW(parse("[data]\nrate_unit = volts\n"), std::invalid_argument);
  EXPECT_THROW(parse("[train]\nepochs = -3\n"), std::invalid_argument);
}

TEST(Config, NegativeOffsetAccepted) { EXPECT_EQ(parse("[data]\nutc_offset_minutes = -420\n").utc_offset_minutes, -420); }

TEST(Config, Overrides) {
  dc::RunConfig cfg;
  dc::apply_override(cfg, "train.epochs=5");
  dc::apply_override(cfg, "train.patience=5");
  dc::apply_override(cfg, "run.task=station");
  dc::apply_override(cfg, "data.stations=A,B,C");
  dc::apply_override(cfg, "train.lr_decay=constant");
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.train.epochs, 5);
  EXPECT_EQ(cfg.network().labels, 3);
  EXPECT_EQ(cfg.train.lr_decay, dc::LrDecay::kConstant);
  EXPECT_THROW(dc::apply_override(cfg, "train.epocs=5"), std::invalid_argument);
  EXPECT_THROW(dc::apply_override(cfg, "train.epochs"), std::invalid_argument);
  EXPECT_THROW(dc::apply_override(cfg, "network.hidden=x"), std::invalid_argument);
}

}  // namespace
