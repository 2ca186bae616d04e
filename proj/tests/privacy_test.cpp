#include <catch2/catch_amalgamated.hpp>

#include <fedstas/privacy.hpp>
#include <fedstas/rng.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

using namespace fedstas;

TEST_CASE("alpha_for_epsilon closed-form values") {
    CHECK(alpha_for_epsilon(3.0, 100) == Catch::Approx(0.1616).margin(5e-5));
    CHECK(alpha_for_epsilon(std::log(2.0), 2) == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(alpha_for_epsilon(50.0, 100) == Catch::Approx(1.0).margin(1e-9));
    CHECK(alpha_for_epsilon(0.5, 5) > 0.0);
    CHECK(alpha_for_epsilon(0.5, 5) < 1.0);
    CHECK_THROWS_AS(alpha_for_epsilon(0.0, 10), ContractError);
    CHECK_THROWS_AS(alpha_for_epsilon(-1.0, 10), ContractError);
    CHECK_THROWS_AS(alpha_for_epsilon(1.0, 1), ContractError);
}

TEST_CASE("ldp_ratio closed form agrees with exhaustive enumeration") {
    // Enumerate the full report distribution P(r | n) for every pair of true
    // sizes and every report value, and take the worst ratio directly.
    auto brute_ratio = [](double alpha, int cap) {
        const int k = cap - 1;
        double worst = 0.0;
        for (int n = 1; n <= k; ++n) {
            for (int np = 1; np <= k; ++np) {
                for (int y = 1; y <= k; ++y) {
                    const double p = (y == n ? alpha : 0.0) + (1.0 - alpha) / k;
                    const double q = (y == np ? alpha : 0.0) + (1.0 - alpha) / k;
                    if (q > 0.0) worst = std::max(worst, p / q);
                }
            }
        }
        return worst;
    };
    for (int cap : {3, 5, 10}) {
        for (double alpha : {0.05, 0.25, 0.5, 0.9}) {
            CHECK(ldp_ratio(alpha, cap) ==
                  Catch::Approx(brute_ratio(alpha, cap)).epsilon(1e-12));
        }
    }
}

TEST_CASE("alpha from the budget formula saturates the ratio at e^eps") {
    for (auto [eps, cap] : std::vector<std::pair<double, int>>{
             {3.0, 100}, {1.0, 10}, {0.5, 5}, {2.0, 3}}) {
        const double alpha = alpha_for_epsilon(eps, cap);
        CHECK(ldp_ratio(alpha, cap) == Catch::Approx(std::exp(eps)).margin(1e-9));
    }
}

TEST_CASE("ldp_ratio edge cases") {
    CHECK(ldp_ratio(0.0, 10) == Catch::Approx(1.0).epsilon(1e-15));  // pure noise
    CHECK(std::isinf(ldp_ratio(1.0, 10)));                           // deterministic
    CHECK(ldp_ratio(1.0, 2) == 1.0);  // a single possible size tells nothing
    CHECK_THROWS_AS(ldp_ratio(1.5, 10), ContractError);
    CHECK_THROWS_AS(ldp_ratio(0.5, 1), ContractError);
}

TEST_CASE("PrivacyConfig validation ties alpha to epsilon") {
    PrivacyConfig good = PrivacyConfig::from_epsilon(3.0, 100);
    CHECK(good.alpha == Catch::Approx(alpha_for_epsilon(3.0, 100)).epsilon(0));
    good.validate();

    PrivacyConfig stale = good;
    stale.alpha = 0.5;  // inconsistent with epsilon = 3
    CHECK_THROWS_AS(stale.validate(), ContractError);

    PrivacyConfig manual;
    manual.size_cap = 10;
    manual.alpha = 0.5;  // no epsilon: any alpha in (0,1] is fine
    manual.validate();

    PrivacyConfig bad;
    bad.size_cap = 1;
    bad.alpha = 0.5;
    CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("privatize_size stays in range and clips large sizes") {
    PrivacyConfig cfg;
    cfg.size_cap = 100;
    cfg.alpha = 0.2;
    Rng rng = rng_stream(1, "privacy", 1, 0);
    for (int i = 0; i < 20000; ++i) {
        const int r = privatize_size(150, cfg, rng);
        REQUIRE(r >= 1);
        REQUIRE(r <= 99);
    }
    CHECK_THROWS_AS(privatize_size(0, cfg, rng), ContractError);
}

TEST_CASE("alpha = 1 always reports the clipped truth") {
    PrivacyConfig cfg;
    cfg.size_cap = 50;
    cfg.alpha = 1.0;
    Rng rng = rng_stream(2, "privacy", 1, 0);
    for (int i = 0; i < 100; ++i) {
        CHECK(privatize_size(17, cfg, rng) == 17);
        CHECK(privatize_size(200, cfg, rng) == 49);
    }
}

TEST_CASE("report distribution matches the mixture exactly") {
    // P(r = y) = alpha * 1[y = n] + (1 - alpha) / (M - 1), M = 10.
    PrivacyConfig cfg;
    cfg.size_cap = 10;
    cfg.alpha = 0.35;
    const int n = 4;
    const int trials = 1000000;
    std::vector<int> counts(10, 0);
    Rng rng = rng_stream(5, "privacy", 1, 0);
    for (int t = 0; t < trials; ++t) ++counts[static_cast<std::size_t>(privatize_size(n, cfg, rng))];
    for (int y = 1; y <= 9; ++y) {
        const double p = (y == n ? cfg.alpha : 0.0) + (1.0 - cfg.alpha) / 9.0;
        const double se = std::sqrt(p * (1.0 - p) * trials);
        INFO("report value " << y);
        CHECK(std::abs(counts[static_cast<std::size_t>(y)] - p * trials) < 3.0 * se);
    }
}

TEST_CASE("estimate_total reproduces the hand-worked example") {
    PrivacyConfig cfg;
    cfg.size_cap = 100;
    cfg.alpha = 0.1616;
    CHECK(estimate_total(2, cfg, 120.0) == Catch::Approx(223.76).margin(5e-3));
}

TEST_CASE("estimate_total with alpha = 1 returns the raw sum") {
    PrivacyConfig cfg;
    cfg.size_cap = 100;
    cfg.alpha = 1.0;
    CHECK(estimate_total(3, cfg, 150.0) == 150.0);
    CHECK_THROWS_AS(estimate_total(0, cfg, 0.0), ContractError);
}

TEST_CASE("estimate_total is unbiased over many rounds of reports") {
    PrivacyConfig cfg = PrivacyConfig::from_epsilon(3.0, 100);
    std::vector<int> sizes;
    for (int i = 0; i < 50; ++i) sizes.push_back(20 + (i * 7) % 60);
    double truth = 0.0;
    for (int s : sizes) truth += s;

    const int trials = 20000;
    double mean = 0.0;
    for (int t = 0; t < trials; ++t) {
        double r_sum = 0.0;
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            Rng rng = rng_stream(9, "privacy", static_cast<std::uint64_t>(t),
                                 static_cast<std::uint64_t>(i));
            r_sum += privatize_size(sizes[i], cfg, rng);
        }
        mean += estimate_total(static_cast<int>(sizes.size()), cfg, r_sum) / trials;
    }
    CHECK(std::abs(mean - truth) / truth < 0.01);
}

TEST_CASE("estimate_total may go negative and is not clamped here") {
    PrivacyConfig cfg;
    cfg.size_cap = 100;
    cfg.alpha = 0.1;
    // All-minimal reports: R = m, correction dominates.
    CHECK(estimate_total(10, cfg, 10.0) < 0.0);
}
