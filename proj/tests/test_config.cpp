#include "cfaa/config.hpp"

#include "cfaa/runner.hpp"

#include <doctest.h>

using namespace cfaa;

TEST_CASE("defaults carry the documented hyperparameters") {
    config::RunConfig cfg = config::RunConfig::defaults();
    CHECK(cfg.get_real("lambda_O") == 0.5);
    CHECK(cfg.get_real("lambda_A") == 0.8);
    CHECK(cfg.get_real("alpha") == 0.1);
    CHECK(cfg.get_real("nu") == 0.1);
    CHECK(cfg.get_int("batch_size") == 128);
    CHECK(cfg.get_int("K") == 0);  // derived as batch/2 downstream
    CHECK(cfg.get_int("top_k") == 10);
    CHECK(cfg.get_int("eval_negatives") == 99);
    CHECK(cfg.get_int("min_records") == 30);
    CHECK(cfg.get_real("rating_threshold") == 4.0);
    CHECK(cfg.get_text("nonlinearity") == "tanh");
    cfg.validate();
}

TEST_CASE("unknown keys are rejected by name") {
    config::RunConfig cfg = config::RunConfig::defaults();
    CHECK_THROWS_WITH_AS(cfg.set("lamda_O", "0.5"), doctest::Contains("lamda_O"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(cfg.apply_text("seed = 1\nlamda_O = 2\n", "inline"),
                         doctest::Contains("lamda_O"), std::invalid_argument);
}

TEST_CASE("values are type checked") {
    config::RunConfig cfg = config::RunConfig::defaults();
    CHECK_THROWS_AS(cfg.set("seed", "three"), std::invalid_argument);
    CHECK_THROWS_AS(cfg.set("lambda_O", "0.5x"), std::invalid_argument);
    cfg.set("seed", "42");
    CHECK(cfg.get_int("seed") == 42);
}

TEST_CASE("resolved text reproduces the configuration") {
    config::RunConfig cfg = config::RunConfig::defaults();
    cfg.set("arm", "v");
    cfg.set("lambda_O", "1.25");
    config::RunConfig back = config::RunConfig::defaults();
    back.apply_text(cfg.resolved_text(), "roundtrip");
    CHECK(back.resolved_text() == cfg.resolved_text());
    CHECK(back.get_real("lambda_O") == 1.25);
    CHECK(back.get_text("arm") == "v");
}

TEST_CASE("validation rejects bad values") {
    config::RunConfig cfg = config::RunConfig::defaults();
    cfg.set("arm", "both");
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("arm"), std::invalid_argument);
    cfg.set("arm", "full");
    cfg.set("nonlinearity", "relu");
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.set("nonlinearity", "tanh");
    cfg.set("target_keep_fraction", "1.5");
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("ablation arms map onto the loss weights") {
    model::LossWeights base = runner::weights_for_arm("base", 0.5, 0.8);
    CHECK(base.vertical == 0.0);
    CHECK(base.horizontal == 0.0);
    model::LossWeights v = runner::weights_for_arm("v", 0.5, 0.8);
    CHECK(v.vertical == 0.5);
    CHECK(v.horizontal == 0.0);
    model::LossWeights h = runner::weights_for_arm("h", 0.5, 0.8);
    CHECK(h.vertical == 0.0);
    CHECK(h.horizontal == 0.8);
    model::LossWeights full = runner::weights_for_arm("full", 0.5, 0.8);
    CHECK(full.vertical == 0.5);
    CHECK(full.horizontal == 0.8);
    CHECK_THROWS_AS(runner::weights_for_arm("none", 1, 1), std::invalid_argument);
}

TEST_CASE("checkpoint snapshots merge under explicit user keys") {
    config::RunConfig user = config::RunConfig::defaults();
    user.set("top_k", "5");
    config::RunConfig merged =
        runner::merge_with_checkpoint(user, "seed = 9\narm = h\ntop_k = 10\n");
    CHECK(merged.get_int("seed") == 9);          // from the snapshot
    CHECK(merged.get_text("arm") == "h");        // from the snapshot
    CHECK(merged.get_int("top_k") == 5);         // explicit user key wins
    CHECK(merged.get_int("batch_size") == 128);  // untouched default
}
