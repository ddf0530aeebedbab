#include "doctest.h"
#include "motiondiff/rng.hpp"

#include <cmath>
#include <vector>

using motiondiff::Rng;

TEST_CASE("same seed reproduces every stream exactly") {
    Rng a(1234), b(1234);
    for (int i = 0; i < 1000; ++i) {
        CHECK(a.next_u64() == b.next_u64());
        CHECK(a.uniform() == b.uniform());
        CHECK(a.normal() == b.normal());
        CHECK(a.uniform_int(-5, 17) == b.uniform_int(-5, 17));
    }
}

TEST_CASE("different seeds diverge") {
    Rng a(1), b(2);
    int differing = 0;
    for (int i = 0; i < 64; ++i)
        if (a.next_u64() != b.next_u64()) ++differing;
    CHECK(differing > 60);
}

TEST_CASE("uniform stays in [0,1) with the right mean") {
    Rng rng(7);
    const int n = 100000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        s += u;
    }
    CHECK(std::abs(s / n - 0.5) < 0.01);
}

TEST_CASE("uniform(lo,hi) respects bounds") {
    Rng rng(8);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform(-2.0, 3.0);
        REQUIRE(u >= -2.0);
        REQUIRE(u < 3.0);
    }
}

TEST_CASE("normal has unit moments") {
    Rng rng(9);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    const double m = s / n;
    const double var = s2 / n - m * m;
    CHECK(std::abs(m) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("bernoulli matches its rate") {
    Rng rng(10);
    const int n = 100000;
    int hits = 0;
    for (int i = 0; i < n; ++i)
        if (rng.bernoulli(0.3)) ++hits;
    CHECK(std::abs(hits / static_cast<double>(n) - 0.3) < 0.01);
}

TEST_CASE("uniform_int covers both endpoints inclusively") {
    Rng rng(11);
    bool lo_hit = false, hi_hit = false;
    for (int i = 0; i < 10000; ++i) {
        const int64_t v = rng.uniform_int(2, 5);
        REQUIRE(v >= 2);
        REQUIRE(v <= 5);
        lo_hit |= (v == 2);
        hi_hit |= (v == 5);
    }
    CHECK(lo_hit);
    CHECK(hi_hit);
}

TEST_CASE("forked streams are deterministic and mutually distinct") {
    Rng parent1(42), parent2(42);
    Rng f1 = parent1.fork(3);
    Rng f2 = parent2.fork(3);
    for (int i = 0; i < 100; ++i) CHECK(f1.next_u64() == f2.next_u64());

    Rng parent3(42);
    Rng a = parent3.fork(0);
    Rng b = parent3.fork(1);
    int differing = 0;
    for (int i = 0; i < 64; ++i)
        if (a.next_u64() != b.next_u64()) ++differing;
    CHECK(differing > 60);
}

TEST_CASE("fork does not mirror the parent stream") {
    Rng parent(99);
    Rng child = parent.fork(0);
    int differing = 0;
    for (int i = 0; i < 64; ++i)
        if (parent.next_u64() != child.next_u64()) ++differing;
    CHECK(differing > 60);
}
