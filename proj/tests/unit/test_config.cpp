#include "doctest.h"
#include "helpers.hpp"

#include "flowguard/config.hpp"
#include "flowguard/errors.hpp"

#include <string>

using namespace flowguard;

namespace {

std::string error_of(const std::string& json) {
  try {
    parse_config(json);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("empty object keeps every default") {
    const auto c = parse_config("{}");
    const RunConfig d;
    CHECK(c.dataset.modes == d.dataset.modes);
    CHECK(c.rl.rl.eta == d.rl.rl.eta);
    CHECK(c.rl.rl.steps == 8);
    CHECK(c.rl.rl.group_size == 16);
    CHECK(c.rl.rl.groups_per_iter == 8);
    CHECK(c.rl.rl.iterations == 300);
    CHECK(c.rl.lr_by_variant == d.rl.lr_by_variant);
    CHECK_FALSE(c.rl.clip_range.has_value());
    c.validate();
  }

  TEST_CASE("defaults give every variant at least two inner epochs") {
    RunConfig c;
    for (auto v : kAllVariants) {
      c.rl.rl.variant.kind = v;
      CHECK(c.resolved_rl().inner_epochs >= 2);
    }
  }

  TEST_CASE("unknown keys and sections name the field") {
    CHECK(error_of(R"({"rl": {"itertions": 5}})").find("rl.itertions") != std::string::npos);
    CHECK(error_of(R"({"bogus": {}})").find("bogus") != std::string::npos);
  }

  TEST_CASE("wrong types name the field") {
    CHECK(error_of(R"({"rl": {"iterations": "many"}})").find("rl.iterations") != std::string::npos);
    CHECK(error_of(R"({"schedule": {"eta": true}})").find("schedule.eta") != std::string::npos);
    CHECK(error_of(R"({"rl": {"variant": "ppo"}})").find("grpo_guard") != std::string::npos);
    CHECK_FALSE(error_of("[1, 2").empty());
  }

  TEST_CASE("overrides and per-variant resolution") {
    const auto c = parse_config(R"({
      "schedule": {"variant": "dance_grpo", "eta": 0.3},
      "rl": {"variant": "baseline", "clip_range": 0.01, "lr_by_variant": {"baseline": 0.002},
             "epochs_by_variant": {"baseline": 3}}
    })");
    const auto rl = c.resolved_rl();
    CHECK(rl.schedule == ScheduleVariant::dance_grpo);
    CHECK(rl.eta == 0.3);
    CHECK(rl.variant.kind == VariantKind::baseline);
    CHECK(rl.variant.clip_range == 0.01);
    CHECK(rl.lr == 0.002);
    CHECK(rl.inner_epochs == 3);
  }

  TEST_CASE("validation rejects out-of-range values") {
    CHECK_THROWS_AS(parse_config(R"({"schedule": {"eta": 0}})").validate(), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"rl": {"clip_range": 1.5}})").validate(), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"rl": {"lr_by_variant": {"ppo": 0.1}}})").validate(), ConfigError);
  }

  TEST_CASE("dump and parse round-trip") {
    RunConfig c;
    c.rl.rl.eta = 0.55;
    c.rl.clip_range = 0.03;
    c.rewards.gold_eval_every = 7;
    const auto back = parse_config(dump_config(c));
    CHECK(back.rl.rl.eta == 0.55);
    CHECK(back.rl.clip_range == 0.03);
    CHECK(back.rewards.gold_eval_every == 7);
    CHECK(dump_config(back) == dump_config(c));
  }

  TEST_CASE("missing files are configuration errors") {
    CHECK_THROWS_AS(load_config("/nonexistent/flowguard.json"), ConfigError);
  }
}

TEST_SUITE("config") {
  TEST_CASE("shipped default config matches the built-in defaults") {
    const auto shipped = load_config(std::filesystem::path(FLOWGUARD_SOURCE_DIR) / "configs" / "default.json");
    CHECK(dump_config(shipped) == dump_config(RunConfig{}));
  }
}
