#include "doctest.h"

#include "normkit/errors.hpp"
#include "normkit/rng.hpp"

#include <cmath>
#include <set>

using namespace normkit;

TEST_CASE("same seed and label reproduce the stream") {
    RngStream a(7, "x"), b(7, "x");
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
}

TEST_CASE("labels and seeds separate streams") {
    RngStream a(7, "x"), b(7, "y"), c(8, "x");
    const auto va = a.next_u64();
    CHECK(va != b.next_u64());
    CHECK(va != c.next_u64());
}

TEST_CASE("substreams do not depend on parent position") {
    RngStream parent(3, "root");
    const auto first = parent.substream("k").next_u64();
    parent.next_u64();
    parent.next_u64();
    CHECK(parent.substream("k").next_u64() == first);
    CHECK(parent.substream("k").label() == "root/k");
}

TEST_CASE("uniform and below ranges") {
    RngStream r(1, "u");
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        seen.insert(r.below(5));
    }
    CHECK(seen == std::set<std::uint64_t>{0, 1, 2, 3, 4});
    CHECK_THROWS_AS(r.below(0), ArgumentError);
}

TEST_CASE("normal draws have unit moments") {
    RngStream r(11, "n");
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
    }
    const double mean = s / n;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
    CHECK(s2 / n - mean * mean == doctest::Approx(1.0).epsilon(0.02));
}
