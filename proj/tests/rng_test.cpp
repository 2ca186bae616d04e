#include <catch2/catch_amalgamated.hpp>

#include <fedstas/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

using namespace fedstas;

TEST_CASE("derive_seed matches frozen vectors") {
    // Pinned in docs/rng-streams.md. Any change here is a break in
    // cross-run reproducibility, not a refactor.
    CHECK(derive_seed(0, "partition", 0, 0) == 0x6D8A120353BC9B22ull);
    CHECK(derive_seed(42, "stratify", 1, 0) == 0x6E437D26D19A12BEull);
    CHECK(derive_seed(42, "client-sample", 7, 0) == 0x1B47BA82B8F76FD7ull);
    CHECK(derive_seed(1, "privacy", 3, 5) == 0x4BA2C0946E55D519ull);
    CHECK(derive_seed(123456789, "local-train", 99, 17) == 0x2B4471081CEAE734ull);
}

TEST_CASE("generator streams match frozen vectors") {
    struct Vec {
        std::uint64_t master;
        const char* tag;
        std::uint64_t round;
        std::uint64_t entity;
        std::uint64_t out[4];
    };
    const Vec vecs[] = {
        {0, "partition", 0, 0,
         {0xF407D5053DEE3983ull, 0x6847B7B7770B30EBull, 0x4BDFDAECAA84A321ull,
          0x5D1500D8C62AACA0ull}},
        {42, "stratify", 1, 0,
         {0x3AF3BF6DB11CC8C0ull, 0x344D081E10BA8DDEull, 0x932200D062017C16ull,
          0xA3BA9DDBDA200154ull}},
        {42, "client-sample", 7, 0,
         {0x47296F043805AAFEull, 0x0C7929F1CD43087Eull, 0x998C9B43C2C68858ull,
          0x35A0EDC12849257Cull}},
        {1, "privacy", 3, 5,
         {0xB37AFB139E22D570ull, 0x3D92A01A138D38E9ull, 0x88CBBF75D9F992C6ull,
          0x5AC3618F47E06C9Eull}},
        {123456789, "local-train", 99, 17,
         {0x5F5092A612B8C1F4ull, 0xA8C38DEDCC1C9AF9ull, 0x7D5F5BC57B06F7BEull,
          0xAECEEF3E85F25A4Full}},
    };
    for (const auto& v : vecs) {
        Rng rng = rng_stream(v.master, v.tag, v.round, v.entity);
        for (std::uint64_t expected : v.out) {
            CHECK(rng.next_u64() == expected);
        }
    }
}

TEST_CASE("next_double matches frozen values and stays in [0,1)") {
    Rng rng = rng_stream(42, "stratify", 1, 0);
    CHECK(rng.next_double() == Catch::Approx(0.23028179576896257).epsilon(0));
    CHECK(rng.next_double() == Catch::Approx(0.20430041059510462).epsilon(0));
    for (int i = 0; i < 10000; ++i) {
        double u = rng.next_double();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("changing any key component changes the stream") {
    auto first = [](std::uint64_t m, const char* t, std::uint64_t r, std::uint64_t e) {
        return rng_stream(m, t, r, e).next_u64();
    };
    std::uint64_t base = first(7, "stratify", 3, 9);
    CHECK(base != first(8, "stratify", 3, 9));
    CHECK(base != first(7, "privacy", 3, 9));
    CHECK(base != first(7, "stratify", 4, 9));
    CHECK(base != first(7, "stratify", 3, 10));
}

TEST_CASE("next_below is in range and covers small supports") {
    Rng rng = rng_stream(3, "partition", 0, 0);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) {
        std::uint64_t v = rng.next_below(5);
        REQUIRE(v < 5);
        ++counts[static_cast<std::size_t>(v)];
    }
    // Uniform over 5 values: each bucket expects 10000, sd ~ 89.
    for (int c : counts) {
        CHECK(c > 9500);
        CHECK(c < 10500);
    }
    CHECK(rng.next_below(1) == 0);
}

TEST_CASE("shuffle produces a permutation and is seed-deterministic") {
    std::vector<int> v(100);
    for (int i = 0; i < 100; ++i) v[static_cast<std::size_t>(i)] = i;
    std::vector<int> a = v;
    std::vector<int> b = v;
    {
        Rng rng = rng_stream(11, "partition", 0, 0);
        rng.shuffle(a);
    }
    {
        Rng rng = rng_stream(11, "partition", 0, 0);
        rng.shuffle(b);
    }
    CHECK(a == b);
    CHECK(a != v);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == v);
}

TEST_CASE("sample_without_replacement yields k distinct in-range values") {
    Rng rng = rng_stream(5, "client-sample", 2, 0);
    for (int rep = 0; rep < 200; ++rep) {
        auto picks = rng.sample_without_replacement(30, 7);
        REQUIRE(picks.size() == 7);
        std::set<std::size_t> uniq(picks.begin(), picks.end());
        REQUIRE(uniq.size() == 7);
        for (std::size_t p : picks) REQUIRE(p < 30);
    }
    auto all = rng.sample_without_replacement(6, 6);
    std::sort(all.begin(), all.end());
    CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("next_normal has the right first two moments") {
    Rng rng = rng_stream(9, "dataset", 0, 0);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = rng.next_normal();
        sum += x;
        sumsq += x * x;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    // SE of the mean is 1/sqrt(n) ~ 0.0022; allow 4 SEs.
    CHECK(std::abs(mean) < 0.009);
    CHECK(var == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("next_gamma has the right mean for shapes above and below one") {
    Rng rng = rng_stream(13, "dataset", 0, 0);
    for (double shape : {0.3, 1.0, 2.5, 7.0}) {
        const int n = 100000;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            double x = rng.next_gamma(shape);
            REQUIRE(x >= 0.0);
            sum += x;
        }
        double mean = sum / n;
        // Gamma(shape, 1) has mean = shape, var = shape. 5 SEs of slack.
        double se = std::sqrt(shape / n);
        CHECK(std::abs(mean - shape) < 5.0 * se);
    }
}

TEST_CASE("next_dirichlet sums to one with nonnegative parts") {
    Rng rng = rng_stream(17, "partition", 0, 0);
    for (int rep = 0; rep < 100; ++rep) {
        auto w = rng.next_dirichlet(0.5, 8);
        REQUIRE(w.size() == 8);
        double total = 0.0;
        for (double x : w) {
            REQUIRE(x >= 0.0);
            total += x;
        }
        CHECK(total == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("next_dirichlet survives concentration small enough to underflow") {
    // All gamma draws can underflow to zero at tiny alpha; the fallback is
    // a one-hot vector, which is the correct degenerate limit.
    Rng rng = rng_stream(19, "partition", 0, 0);
    for (int rep = 0; rep < 2000; ++rep) {
        auto w = rng.next_dirichlet(1e-300, 5);
        double total = 0.0;
        int nonzero = 0;
        for (double x : w) {
            total += x;
            if (x > 0.0) ++nonzero;
        }
        REQUIRE(total == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(nonzero >= 1);
    }
}
