#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fqrt/model.hpp"
#include "fqrt/qbd.hpp"
#include "fqrt/solver.hpp"
#include "fqrt/stationary.hpp"
#include "support.hpp"

using namespace fqrt;

TEST_CASE("canonical fixed point in closed form") {
    const ModelParams p = test::canonical();
    const StationaryReport rep = stationary_point(p);

    // The sharing balance is linear with small-rational coefficients, so the
    // root comes out of the integer path as exactly 19/80.
    CHECK(rep.z_exact);
    CHECK(rep.z_raw == 0.2375);
    CHECK(rep.x_star.z12 == 0.2375);
    CHECK(rep.x_star.q1 == doctest::Approx(11.0 / 30.0).epsilon(1e-12));
    CHECK(rep.x_star.q2 == doctest::Approx(0.458333333333333).epsilon(1e-12));

    // x* sits on the boundary and the queues keep the target ratio.
    CHECK(rep.x_star.q1 == doctest::Approx(p.r() * rep.x_star.q2 + p.kappa).epsilon(1e-12));
    CHECK(rep.region_by_rates.region.positive_recurrent());
    CHECK(classify(rep.x_star, p).positive_recurrent());

    CHECK(rep.pi_star == doctest::Approx(0.19947506561679793).epsilon(1e-12));
    CHECK(rep.drift_at_star.delta_plus == doctest::Approx(-6.8625).epsilon(1e-12));
    CHECK(rep.drift_at_star.delta_minus == doctest::Approx(1.71).epsilon(1e-12));

    // Closed-form drifts against the generic rate evaluation at x*.
    const DriftPair d = drift_pair(rep.x_star, p);
    CHECK(rep.drift_at_star.delta_plus == doctest::Approx(d.delta_plus).epsilon(1e-12));
    CHECK(rep.drift_at_star.delta_minus == doctest::Approx(d.delta_minus).epsilon(1e-12));

    CHECK(rep.region_by_rates.margins.above_sharing_pull ==
          doctest::Approx(1.0 - 0.8 * 0.1 / 0.3).epsilon(1e-12));
    CHECK(rep.region_by_rates.margins.above_ratio_floor == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.region_by_rates.margins.below_ceiling ==
          doctest::Approx(0.8 * 3.0 + 0.8 / 0.3 - 1.0).epsilon(1e-12));
}

TEST_CASE("saturated and starved variants") {
    // Heavy class-1 arrivals: the raw sharing root 1.3 exceeds the pool, so
    // z* clamps to m2 and the fixed point moves into S+ with full sharing.
    const StationaryReport heavy = stationary_point(test::heavy_class1());
    CHECK(heavy.region_by_rates.region.tag == RegionTag::SPlus);
    CHECK(heavy.z_raw == doctest::Approx(1.3).epsilon(1e-12));
    CHECK(heavy.x_star.q1 == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(heavy.x_star.q2 == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(heavy.x_star.z12 == 1.0);
    CHECK(heavy.pi_star == 1.0);
    CHECK_FALSE(heavy.v_ball_alpha.has_value());

    // Fast pool-1 service: the root is negative, sharing shuts off and the
    // classes settle at their isolated overload levels in S-.
    const StationaryReport fast = stationary_point(test::fast_pool1());
    CHECK(fast.region_by_rates.region.tag == RegionTag::SMinus);
    CHECK(fast.z_raw < 0.0);
    CHECK(fast.x_star.q1 == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(fast.x_star.q2 == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(fast.x_star.z12 == 0.0);
    CHECK(fast.pi_star == 0.0);
    CHECK_FALSE(fast.v_ball_alpha.has_value());
}

TEST_CASE("rate inequalities and state classification pick the same region") {
    // Draws span all three regions: lambda2 keeps pool 2 saturated in
    // isolation (sa2 = 0, so the overload assumption holds automatically)
    // and lambda1 sweeps queue 1's overload from tiny to past the ceiling.
    auto gen = test::rng(8);
    std::uniform_real_distribution<double> l2(0.0, 1.0);
    std::uniform_real_distribution<double> l1(0.0, 1.0);
    int seen_plus = 0, seen_minus = 0, seen_bd = 0;

    for (int it = 0; it < 1000; ++it) {
        ModelParams p = test::canonical();
        p.lambda2 = p.mu22 * p.m2 + 0.02 + l2(gen);
        p.lambda1 = p.m1 * p.mu11 + 0.05 + l1(gen) * 3.5 * p.mu12 * p.m2;

        const StationaryReport rep = stationary_point(p);
        const Region by_rates = rep.region_by_rates.region;
        const Region by_state = classify(rep.x_star, p);
        REQUIRE(by_rates.tag == by_state.tag);
        if (by_rates.tag == RegionTag::Boundary) {
            REQUIRE(by_rates.positive_recurrent() == by_state.positive_recurrent());
            ++seen_bd;
        }
        seen_plus += by_rates.tag == RegionTag::SPlus;
        seen_minus += by_rates.tag == RegionTag::SMinus;
    }
    CHECK(seen_plus >= 50);
    CHECK(seen_minus >= 50);
    CHECK(seen_bd >= 50);
}

TEST_CASE("Lyapunov choice and its derivative identity") {
    const ModelParams p = test::canonical();
    const LyapunovChoice lc = lyapunov_choice(p);
    CHECK_FALSE(lc.uses_v1);  // mu12 < mu22 here
    CHECK(lc.C == doctest::Approx(2.25).epsilon(1e-14));
    // The weights must cancel the sharing split: the pi-dependent terms of
    // w . Psi vanish exactly when w1 = w2 + w3.
    CHECK(lc.w1 == doctest::Approx(lc.w2 + lc.w3).epsilon(1e-14));

    // w . Psi(x, pi) = -(a . (x - x*)) for every x and *every* pi in [0,1].
    const StationaryReport rep = stationary_point(p);
    auto gen = test::rng(9);
    std::uniform_real_distribution<double> queue(0.0, 4.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int it = 0; it < 1000; ++it) {
        const FluidState x{queue(gen), queue(gen), unit(gen)};
        const double pi = unit(gen);
        const PsiValue f = psi(x, p, pi);
        const double along = lc.w1 * f.dq1 + lc.w2 * f.dq2 + lc.w3 * f.dz12;
        const double analytic = lyapunov_lie_derivative(lc, x, rep.x_star);
        REQUIRE(along == doctest::Approx(analytic).epsilon(1e-10));
    }

    // The fast variant picks V1 (mu12 > mu22 after swapping the service
    // advantage) -- exercise the other branch.
    ModelParams swapped = p;
    swapped.mu12 = 1.0;
    swapped.mu22 = 0.8;
    const LyapunovChoice v1 = lyapunov_choice(swapped);
    CHECK(v1.uses_v1);
    CHECK(v1.w3 == 0.0);
    CHECK(v1.w1 == doctest::Approx(v1.w2 + v1.w3).epsilon(1e-14));
}

TEST_CASE("exponential-envelope constants") {
    const ExpBound eb = exp_stability_constants(test::canonical());
    CHECK_FALSE(eb.uses_v1);
    CHECK(eb.C == doctest::Approx(2.25).epsilon(1e-14));
    CHECK(eb.K == doctest::Approx(0.3).epsilon(1e-14));  // min(C*th1, th2, C*mu12 - mu22)
    CHECK(eb.rate == doctest::Approx(0.15).epsilon(1e-14));
    CHECK(eb.prefactor == doctest::Approx(2.25).epsilon(1e-14));

    const ExpBound fast = exp_stability_constants(test::fast_pool1());
    CHECK(fast.K == doctest::Approx(0.2).epsilon(1e-14));  // theta2 now binds
    CHECK(fast.rate == doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("invariant ball around the recurrent fixed point") {
    const ModelParams p = test::canonical();
    const std::optional<double> alpha = v_ball_alpha(p);
    REQUIRE(alpha.has_value());
    CHECK(*alpha == doctest::Approx(1.425).epsilon(1e-9));

    // Soundness: states whose Lyapunov gap is inside the ball must still be
    // positive recurrent on the boundary.
    const StationaryReport rep = stationary_point(p);
    const LyapunovChoice lc = rep.lyapunov;
    auto gen = test::rng(10);
    std::uniform_real_distribution<double> queue(0.0, 3.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int tested = 0;
    for (int it = 0; it < 5000 && tested < 300; ++it) {
        const double q2 = queue(gen);
        const FluidState x{p.r() * q2 + p.kappa, q2, unit(gen)};
        if (std::abs(lyapunov_gap(lc, x, rep.x_star)) >= *alpha) continue;
        ++tested;
        REQUIRE(classify(x, p).positive_recurrent());
    }
    CHECK(tested >= 100);
}

TEST_CASE("sufficient conditions for keeping the boundary relation") {
    const ModelParams p = test::canonical();
    const SscCheck at_origin = global_ssc_sufficient(p, {0.0, 0.0, 0.0});
    CHECK(at_origin.arrivals_below_joint_capacity);  // 1.3 < 0.8 + 1
    CHECK(at_origin.class2_saturates_pool2);         // 0.9 > 0.8
    CHECK(at_origin.q1_start_bounded);
    CHECK(at_origin.q2_start_bounded);
    CHECK(at_origin.sufficient);

    // Starting queues above their fluid ceilings void the certificate.
    CHECK_FALSE(global_ssc_sufficient(p, {2.0, 0.0, 0.0}).q1_start_bounded);
    CHECK_FALSE(global_ssc_sufficient(p, {0.0, 4.0, 0.0}).q2_start_bounded);
    CHECK_FALSE(global_ssc_sufficient(p, {2.0, 0.0, 0.0}).sufficient);

    // Heavy class-1 arrivals exceed the joint service capacity bound.
    const SscCheck heavy = global_ssc_sufficient(test::heavy_class1(), {0.0, 0.0, 0.0});
    CHECK_FALSE(heavy.arrivals_below_joint_capacity);
    CHECK_FALSE(heavy.sufficient);
}
