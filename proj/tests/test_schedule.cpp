#include <catch2/catch_amalgamated.hpp>

#include "attedit/schedule.hpp"

using namespace attedit;

TEST_CASE("linear beta schedule produces the hand-computed cumulative products") {
    // betas 0.1, 0.2, 0.3 -> abar = 0.9, 0.9*0.8, 0.9*0.8*0.7
    NoiseSchedule s = build_schedule(3, 0.1, 0.3);
    REQUIRE(s.num_steps == 3);
    REQUIRE(s.alpha_bar(0) == Catch::Approx(1.0).margin(0.0));
    REQUIRE(s.alpha_bar(1) == Catch::Approx(0.9).margin(1e-12));
    REQUIRE(s.alpha_bar(2) == Catch::Approx(0.72).margin(1e-12));
    REQUIRE(s.alpha_bar(3) == Catch::Approx(0.504).margin(1e-12));
}

TEST_CASE("defaults give a 30-step schedule") {
    NoiseSchedule s = build_schedule();
    REQUIRE(s.num_steps == kDefaultSteps);
    REQUIRE(s.num_steps == 30);
    REQUIRE(s.alphas_cumprod.size() == 31);
    REQUIRE(s.alpha_bar(1) == Catch::Approx(1.0 - kDefaultBetaStart).margin(1e-15));
}

TEST_CASE("single-step schedule uses the start beta") {
    NoiseSchedule s = build_schedule(1, 0.25, 0.9);
    REQUIRE(s.num_steps == 1);
    REQUIRE(s.alpha_bar(1) == Catch::Approx(0.75).margin(1e-12));
}

TEST_CASE("schedule construction rejects bad arguments") {
    REQUIRE_THROWS_AS(build_schedule(0, 0.1, 0.2), ValidationError);
    REQUIRE_THROWS_AS(build_schedule(-3, 0.1, 0.2), ValidationError);
    REQUIRE_THROWS_AS(build_schedule(5, 0.0, 0.2), ValidationError);
    REQUIRE_THROWS_AS(build_schedule(5, 0.1, 1.0), ValidationError);
    REQUIRE_THROWS_AS(build_schedule(5, 0.3, 0.2), ValidationError);
}

TEST_CASE("alpha_bar rejects out-of-range timesteps") {
    NoiseSchedule s = build_schedule(5, 0.01, 0.05);
    REQUIRE_THROWS_AS(s.alpha_bar(-1), ValidationError);
    REQUIRE_THROWS_AS(s.alpha_bar(6), ValidationError);
}

TEST_CASE("validate catches tampered schedules") {
    NoiseSchedule s = build_schedule(3, 0.1, 0.3);
    REQUIRE_NOTHROW(s.validate());

    NoiseSchedule grown = s;
    grown.alphas_cumprod[2] = 0.95;  // not decreasing
    REQUIRE_THROWS_AS(grown.validate(), ValidationError);

    NoiseSchedule zero = s;
    zero.alphas_cumprod[3] = 0.0;
    REQUIRE_THROWS_AS(zero.validate(), ValidationError);

    NoiseSchedule wrong_len = s;
    wrong_len.alphas_cumprod.pop_back();
    REQUIRE_THROWS_AS(wrong_len.validate(), ValidationError);

    NoiseSchedule no_anchor = s;
    no_anchor.alphas_cumprod[0] = 0.99;
    REQUIRE_THROWS_AS(no_anchor.validate(), ValidationError);
}

TEST_CASE("hash separates schedules and is stable") {
    NoiseSchedule a = build_schedule(30, 8.5e-4, 1.2e-2);
    NoiseSchedule b = build_schedule(30, 8.5e-4, 1.2e-2);
    NoiseSchedule c = build_schedule(29, 8.5e-4, 1.2e-2);
    NoiseSchedule d = build_schedule(30, 8.5e-4, 1.3e-2);
    REQUIRE(a.hash() == b.hash());
    REQUIRE(a.hash() != c.hash());
    REQUIRE(a.hash() != d.hash());
}

TEST_CASE("random schedules satisfy the cumulative-product recurrence") {
    Rng rng(42);
    for (int trial = 0; trial < 50; trial++) {
        int steps = 1 + static_cast<int>(rng.uniform() * 49);
        double b0 = 1e-4 + rng.uniform() * 0.3;
        double b1 = b0 + rng.uniform() * (0.98 - b0);
        NoiseSchedule s = build_schedule(steps, b0, b1);
        REQUIRE_NOTHROW(s.validate());
        for (int t = 1; t <= steps; t++) {
            double beta =
                steps == 1 ? b0 : b0 + (b1 - b0) * (t - 1) / static_cast<double>(steps - 1);
            REQUIRE(s.alpha_bar(t) ==
                    Catch::Approx(s.alpha_bar(t - 1) * (1.0 - beta)).margin(1e-12));
            REQUIRE(s.alpha_bar(t) < s.alpha_bar(t - 1));
            REQUIRE(s.alpha_bar(t) > 0.0);
        }
    }
}
