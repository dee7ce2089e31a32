#pragma once

// Shared fixtures: the three named parameter sets used across the suites
// (identical to the files under params/), and a seeded RNG so any failure
// reproduces exactly.

#include <random>

#include "fqrt/model.hpp"

namespace fqrt::test {

inline ModelParams canonical() {
    ModelParams p;
    p.lambda1 = 1.3;
    p.lambda2 = 0.9;
    p.m1 = 1.0;
    p.m2 = 1.0;
    p.mu11 = 1.0;
    p.mu12 = 0.8;
    p.mu21 = 0.8;
    p.mu22 = 1.0;
    p.theta1 = 0.3;
    p.theta2 = 0.3;
    p.j = 4;
    p.k = 5;
    p.kappa = 0.0;
    return p;
}

// Class-1 overload heavy enough that sharing saturates pool 2 (x* in S+).
inline ModelParams heavy_class1() {
    ModelParams p = canonical();
    p.lambda1 = 3.0;
    return p;
}

// Fast pool-1 service: queue 1 stays short, the fixed point falls in S-.
inline ModelParams fast_pool1() {
    ModelParams p = canonical();
    p.lambda1 = 13.0;
    p.lambda2 = 1.5;
    p.mu11 = 10.0;
    p.theta1 = 2.0;
    p.theta2 = 0.2;
    return p;
}

inline std::mt19937_64 rng(std::uint64_t seed = 20260819) { return std::mt19937_64(seed); }

}  // namespace fqrt::test
