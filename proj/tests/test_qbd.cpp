#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "fqrt/model.hpp"
#include "fqrt/qbd.hpp"
#include "support.hpp"

using namespace fqrt;

namespace {

// Random positive-recurrent boundary states for the canonical rate family,
// with both drifts kept away from zero so every route converges briskly.
std::vector<FluidState> recurrent_boundary_states(const ModelParams& p, int count,
                                                  std::uint64_t seed) {
    auto gen = test::rng(seed);
    std::uniform_real_distribution<double> queue(0.05, 4.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<FluidState> out;
    while (static_cast<int>(out.size()) < count) {
        const double q2 = queue(gen);
        const FluidState x{p.r() * q2 + p.kappa, q2, unit(gen) * p.m2};
        const DriftPair d = drift_pair(x, p);
        if (d.delta_minus < 0.2 || d.delta_plus > -0.2) continue;
        if (!classify(x, p).positive_recurrent()) continue;
        out.push_back(x);
    }
    return out;
}

}  // namespace

TEST_CASE("jump rates at a hand-computed state") {
    const ModelParams p = test::canonical();
    const FtspRates r = ftsp_rates({0.4, 0.5, 0.25}, p);
    CHECK(r.lam_k_plus == doctest::Approx(1.3));
    CHECK(r.lam_k_minus == doctest::Approx(1.3));
    CHECK(r.mu_j_plus == doctest::Approx(0.9));
    CHECK(r.mu_j_minus == doctest::Approx(0.9));
    CHECK(r.lam_j_plus == doctest::Approx(0.15));   // theta2*q2
    CHECK(r.lam_j_minus == doctest::Approx(1.10));  // f + theta2*q2
    CHECK(r.mu_k_plus == doctest::Approx(2.07));    // mu11*m1 + f + theta1*q1
    CHECK(r.mu_k_minus == doctest::Approx(1.12));   // mu11*m1 + theta1*q1

    const DriftPair d = drift_of(r, p.j, p.k);
    const DriftPair d2 = drift_pair({0.4, 0.5, 0.25}, p);
    CHECK(d.delta_plus == doctest::Approx(d2.delta_plus).epsilon(1e-14));
    CHECK(d.delta_minus == doctest::Approx(d2.delta_minus).epsilon(1e-14));
}

TEST_CASE("generator blocks conserve rate") {
    const ModelParams p = test::canonical();
    const FtspRates r = ftsp_rates({0.4, 0.5, 0.25}, p);
    const QbdBlocks b = build_blocks(r, p.j, p.k);

    const int m = std::max(p.j, p.k);
    const int n = 2 * m;
    REQUIRE(b.m == m);
    REQUIRE(b.B.rows() == n);
    REQUIRE(b.A0.rows() == n);
    REQUIRE(b.A1.rows() == n);
    REQUIRE(b.A2.rows() == n);

    // Diagonal of A1 holds the full exit rate of the half the phase lives in.
    for (int i = 0; i < m; ++i) {
        CHECK(b.A1(i, i) == doctest::Approx(-r.sigma_plus()).epsilon(1e-14));
        CHECK(b.A1(m + i, m + i) == doctest::Approx(-r.sigma_minus()).epsilon(1e-14));
    }

    // Off-diagonal entries are rates; every jump lands somewhere, so the
    // repeating-level row sums vanish, and so do the boundary-level ones
    // (B redirects the down-jumps that would leave the boundary level).
    for (int i = 0; i < n; ++i) {
        double repeating = 0.0, boundary = 0.0;
        for (int c = 0; c < n; ++c) {
            CHECK(b.A0(i, c) >= 0.0);
            CHECK(b.A2(i, c) >= 0.0);
            if (c != i) CHECK(b.A1(i, c) >= 0.0);
            CHECK(b.B(i, c) - b.A1(i, c) >= -1e-15);  // B = A1 + redirected mass
            repeating += b.A0(i, c) + b.A1(i, c) + b.A2(i, c);
            boundary += b.B(i, c) + b.A0(i, c);
        }
        CHECK(std::abs(repeating) <= 1e-12 * r.sigma_plus());
        CHECK(std::abs(boundary) <= 1e-12 * r.sigma_plus());
        // The redirected mass is exactly the down-jump mass of the row.
        CHECK((b.B.row(i) - b.A1.row(i)).sum() ==
              doctest::Approx(b.A2.row(i).sum()).epsilon(1e-12));
    }

    CHECK_THROWS_AS(static_cast<void>(build_blocks(r, 0, 5)), std::invalid_argument);
}

TEST_CASE("recurrence: drift signs and block mass agree") {
    const ModelParams base = test::canonical();
    auto gen = test::rng(4);
    std::uniform_real_distribution<double> queue(0.0, 4.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> arr(0.2, 4.0);

    int seen_pr = 0, seen_up = 0;
    for (int it = 0; it < 300; ++it) {
        ModelParams p = base;
        p.lambda1 = arr(gen);
        const FluidState x{queue(gen), queue(gen), unit(gen)};
        const DriftPair d = drift_pair(x, p);
        const Recurrence by_sign = recurrence_check(d);
        const Recurrence by_mass = recurrence_check(build_blocks(ftsp_rates(x, p), p.j, p.k));
        CHECK(by_sign == by_mass);
        seen_pr += by_sign == Recurrence::PositiveRecurrent;
        seen_up += by_sign == Recurrence::NullOrTransientUp;
    }
    CHECK(seen_pr > 0);  // the draw has to exercise both outcomes
    CHECK(seen_up > 0);
}

TEST_CASE("matrix-geometric solve satisfies its fixed-point equations") {
    const ModelParams p = test::canonical();
    const FluidState x{0.4, 0.5, 0.25};
    const QbdBlocks b = build_blocks(ftsp_rates(x, p), p.j, p.k);
    const QbdSolution sol = solve_qbd(b);
    const int n = 2 * b.m;
    const double scale = b.A1.cwiseAbs().maxCoeff();

    // G is the first-passage matrix one level down: stochastic in the
    // positive recurrent case, root of A2 + A1*G + A0*G^2.
    CHECK((b.A2 + b.A1 * sol.G + b.A0 * sol.G * sol.G).cwiseAbs().maxCoeff() <= 1e-10 * scale);
    CHECK((sol.G * Eigen::VectorXd::Ones(n) - Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff() <=
          1e-10);
    CHECK(sol.g_residual <= 1e-10);
    CHECK(sol.G.minCoeff() >= 0.0);

    // R is the minimal root of A0 + R*A1 + R^2*A2 with sp(R) < 1, and is
    // linked to G through U = A1 + A0*G.
    CHECK((b.A0 + sol.R * b.A1 + sol.R * sol.R * b.A2).cwiseAbs().maxCoeff() <= 1e-10 * scale);
    CHECK((sol.U - (b.A1 + b.A0 * sol.G)).cwiseAbs().maxCoeff() <= 1e-10 * scale);
    CHECK((sol.R * (-sol.U) - b.A0).cwiseAbs().maxCoeff() <= 1e-10 * scale);
    CHECK(sol.spectral_radius_R == doctest::Approx(spectral_radius(sol.R)).epsilon(1e-10));
    CHECK(sol.spectral_radius_R < 1.0);
    CHECK(sol.R.minCoeff() >= 0.0);

    // Boundary weights: nonnegative left null vector of B + R*A2,
    // normalized through the geometric tail.
    CHECK((sol.alpha0 * (b.B + sol.R * b.A2)).cwiseAbs().maxCoeff() <= 1e-10 * scale);
    CHECK(sol.alpha0.minCoeff() >= -1e-14);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
    const double total =
        (sol.alpha0 * (eye - sol.R).inverse() * Eigen::VectorXd::Ones(n)).value();
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));

    // Geometric level masses stay nonnegative as they decay.
    Eigen::RowVectorXd level = sol.alpha0;
    for (int lvl = 0; lvl < 50; ++lvl) {
        level = level * sol.R;
        CHECK(level.minCoeff() >= -1e-12);
    }

    CHECK(sol.pi12 == doctest::Approx(0.19883040935672514).epsilon(1e-10));
}

TEST_CASE("three routes agree when r = 1") {
    // With j = k the difference process is a birth-death chain whose
    // positive-half mass has the closed form delta- / (delta- - delta+).
    ModelParams p = test::canonical();
    p.j = 1;
    p.k = 1;
    for (const FluidState& x : recurrent_boundary_states(p, 100, 5)) {
        const DriftPair d = drift_pair(x, p);
        const double closed = pi12_bd_closed_form(d);
        const double geo = solve_qbd(build_blocks(ftsp_rates(x, p), p.j, p.k)).pi12;
        const double oracle = truncated_oracle_pi12(x, p, 400);
        REQUIRE(std::abs(closed - geo) <= 1e-8);
        REQUIRE(std::abs(closed - oracle) <= 1e-8);
        REQUIRE(std::abs(geo - oracle) <= 1e-8);
    }
}

TEST_CASE("general ratio: solve, oracle, and the drift balance form agree") {
    // The positive-half mass of the skip-free difference process depends on
    // the rates only through the two drifts: pi = delta- / (delta- - delta+).
    // The balance form uses no block structure at all, so agreement pins the
    // lattice-to-level encoding; the truncated generator pins the algebra.
    const int ratios[][2] = {{4, 5}, {2, 3}, {1, 2}, {5, 3}, {3, 5}, {2, 1}};
    for (const auto& jk : ratios) {
        ModelParams p = test::canonical();
        p.j = jk[0];
        p.k = jk[1];
        for (const FluidState& x : recurrent_boundary_states(p, 12, 6 + p.j + 10 * p.k)) {
            const DriftPair d = drift_pair(x, p);
            const double balance = d.delta_minus / (d.delta_minus - d.delta_plus);
            const double geo = solve_qbd(build_blocks(ftsp_rates(x, p), p.j, p.k)).pi12;
            const double oracle = truncated_oracle_pi12(x, p, 400);
            REQUIRE(std::abs(geo - balance) <= 1e-8);
            REQUIRE(std::abs(geo - oracle) <= 1e-8);
        }
    }
}

TEST_CASE("scaled ratio pairs give the same sharing weight") {
    // (20, 25) reduces to (4, 5): same lattice walk on a finer level
    // partition, so pi12 must match far beyond the acceptance tolerance.
    const ModelParams p = test::canonical();
    ModelParams scaled = p;
    scaled.j = 20;
    scaled.k = 25;
    for (const FluidState& x : recurrent_boundary_states(p, 10, 7)) {
        const double a = solve_qbd(build_blocks(ftsp_rates(x, p), p.j, p.k)).pi12;
        const double b = solve_qbd(build_blocks(ftsp_rates(x, scaled), scaled.j, scaled.k)).pi12;
        REQUIRE(std::abs(a - b) <= 1e-10);
    }
}

TEST_CASE("sharing weight across the regions") {
    const ModelParams p = test::canonical();
    CHECK(pi12({0.5, 0.5, 0.25}, p) == 1.0);  // S+
    CHECK(pi12({0.3, 0.5, 0.25}, p) == 0.0);  // S-

    // Non-recurrent boundary subsets take the escaping side's limit.
    ModelParams up = p;
    up.lambda1 = 3.0;  // delta+ > 0 at this state
    CHECK(pi12({0.4, 0.5, 0.25}, up) == 1.0);
    ModelParams down = p;
    down.lambda1 = 0.5;  // delta- < 0
    CHECK(pi12({0.4, 0.5, 0.25}, down) == 0.0);

    // Recurrent boundary: the QBD value, cross-checked three ways.
    const double v = pi12({0.4, 0.5, 0.25}, p);
    CHECK(v == doctest::Approx(0.19883040935672514).epsilon(1e-10));
    CHECK(v == doctest::Approx(1.70 / 8.55).epsilon(1e-10));
    CHECK(truncated_oracle_pi12({0.4, 0.5, 0.25}, p) == doctest::Approx(v).epsilon(1e-10));
}

TEST_CASE("oracle guards") {
    const ModelParams p = test::canonical();
    // Upward-transient rates have no stationary distribution to report.
    ModelParams up = p;
    up.lambda1 = 3.0;
    CHECK_THROWS_AS(static_cast<void>(truncated_oracle_pi12({0.4, 0.5, 0.25}, up)), NotPositiveRecurrentError);
    CHECK_THROWS_AS(static_cast<void>(
                        solve_qbd(build_blocks(ftsp_rates({0.4, 0.5, 0.25}, up), up.j, up.k))),
                    NotPositiveRecurrentError);

    // A shallow truncation cannot certify the tail.
    CHECK_THROWS_AS(static_cast<void>(truncated_oracle_pi12({0.4, 0.5, 0.25}, p, 8)), TruncationInsufficientError);
    CHECK_THROWS_AS(static_cast<void>(truncated_oracle_pi12({0.4, 0.5, 0.25}, p, 1)), std::invalid_argument);

    // Nearly null drift below zero: mass decays too slowly for the default
    // depth, and the solve itself must still converge.
    ModelParams slow = p;
    slow.lambda1 = 0.961;  // delta- = 0.005 at the probe state
    CHECK_THROWS_AS(static_cast<void>(truncated_oracle_pi12({0.4, 0.5, 0.25}, slow)), TruncationInsufficientError);
    const double v = pi12({0.4, 0.5, 0.25}, slow);
    CHECK(v > 0.0);
    CHECK(v < 0.01);
}

TEST_CASE("block dump is valid JSON with the right shape") {
    const ModelParams p = test::canonical();
    const QbdBlocks b = build_blocks(ftsp_rates({0.4, 0.5, 0.25}, p), p.j, p.k);
    const nlohmann::json doc = nlohmann::json::parse(dump_qbd_json(b));
    for (const char* key : {"B", "A0", "A1", "A2"}) {
        REQUIRE(doc.contains(key));
        REQUIRE(doc[key].size() == 10);
        REQUIRE(doc[key][0].size() == 10);
    }
    CHECK(doc["A1"][0][0].get<double>() == doctest::Approx(b.A1(0, 0)));
}
