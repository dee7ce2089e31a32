#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>

#include "fqrt/model.hpp"
#include "fqrt/sim.hpp"
#include "support.hpp"

using namespace fqrt;

namespace {

SimConfig short_canonical(int n, std::uint64_t seed, double t_end) {
    SimConfig cfg;
    cfg.params = test::canonical();
    cfg.n = n;
    cfg.seed = seed;
    cfg.t_end = t_end;
    return cfg;
}

}  // namespace

TEST_CASE("threshold and shift defaults") {
    SimConfig cfg = short_canonical(1000, 1, 1.0);
    const SimConfig res = resolved_sim_config(cfg);
    // ceil(1 * 1000^0.6) = ceil(63.09...) = 64 customers.
    CHECK(*res.k12 == 64);
    CHECK(*res.k21 == 64);
    CHECK(*res.kappa_n == 0);

    cfg.threshold_c = 2.0;
    CHECK(*resolved_sim_config(cfg).k12 == 127);

    cfg.threshold_c = 1.0;
    cfg.params.kappa = 0.5;
    CHECK(*resolved_sim_config(cfg).kappa_n == 500);

    cfg.k12 = 10;
    cfg.k21 = 20;
    const SimConfig fixed = resolved_sim_config(cfg);
    CHECK(*fixed.k12 == 10);
    CHECK(*fixed.k21 == 20);
}

TEST_CASE("configuration rejects") {
    SimConfig cfg = short_canonical(0, 1, 1.0);
    CHECK_THROWS_AS(static_cast<void>(resolved_sim_config(cfg)), std::invalid_argument);
    cfg = short_canonical(100, 1, -1.0);
    CHECK_THROWS_AS(static_cast<void>(resolved_sim_config(cfg)), std::invalid_argument);
    cfg = short_canonical(100, 1, 1.0);
    cfg.params.mu11 = 0.0;
    CHECK_THROWS_AS(static_cast<void>(resolved_sim_config(cfg)), std::invalid_argument);
    cfg = short_canonical(100, 1, 1.0);
    cfg.k12 = -5;
    CHECK_THROWS_AS(static_cast<void>(resolved_sim_config(cfg)), std::invalid_argument);
}

TEST_CASE("seeded runs reproduce bit for bit") {
    const SimPath a = simulate(short_canonical(200, 42, 5.0));
    const SimPath b = simulate(short_canonical(200, 42, 5.0));
    REQUIRE(a.samples.size() == b.samples.size());
    REQUIRE(a.total_events == b.total_events);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].q1 == b.samples[i].q1);
        CHECK(a.samples[i].q2 == b.samples[i].q2);
        CHECK(a.samples[i].z12 == b.samples[i].z12);
        CHECK(a.samples[i].d == b.samples[i].d);
    }

    const SimPath c = simulate(short_canonical(200, 43, 5.0));
    CHECK(c.total_events != a.total_events);
}

TEST_CASE("audited run keeps every count invariant") {
    SimConfig cfg = short_canonical(100, 7, 10.0);
    cfg.audit = true;  // simulate() throws on the first violated invariant
    const SimPath path = simulate(cfg);
    CHECK(path.total_events > 0);

    // Server counts never exceed the pools, queues never go negative, and
    // the sampled difference process matches its definition.
    for (const SimSample& s : path.samples) {
        CHECK(s.q1 >= 0.0);
        CHECK(s.q2 >= 0.0);
        CHECK(s.z11 + s.z21 <= 1.0 + 1e-12);
        CHECK(s.z12 + s.z22 <= 1.0 + 1e-12);
    }
    for (const QueueTracePoint& pt : path.queue_trace) {
        CHECK(pt.d_int == 5 * pt.q1 - 4 * pt.q2);
    }
}

TEST_CASE("no arrivals, no events") {
    SimConfig cfg = short_canonical(100, 1, 2.0);
    cfg.params.lambda1 = 0.0;
    cfg.params.lambda2 = 0.0;
    const SimPath path = simulate(cfg);
    CHECK(path.total_events == 0);
    REQUIRE(path.samples.size() == 21);  // grid still emitted
    for (const SimSample& s : path.samples) {
        CHECK(s.q1 == 0.0);
        CHECK(s.z11 == 0.0);
        CHECK(s.z22 == 0.0);
        CHECK(s.d == 0.0);
    }
}

TEST_CASE("difference-process statistics over a window") {
    const SimPath path = simulate(short_canonical(1000, 1, 30.0));

    // One-way sharing under class-1 overload: the reverse direction never
    // activates on this path.
    for (const SimSample& s : path.samples) CHECK(s.z21 == 0.0);

    const DiffStats st = difference_process_stats(path, 15.0, 30.0);
    CHECK(st.transitions >= 10000);
    // Loose sanity band; the acceptance gate runs the full 10-seed version.
    CHECK(st.frac_d_positive > 0.1);
    CHECK(st.frac_d_positive < 0.3);
    CHECK(st.mean_queue_ratio > 0.7);
    CHECK(st.mean_queue_ratio < 0.9);

    CHECK_THROWS_AS(static_cast<void>(difference_process_stats(path, 0.0, 0.2)), WindowTooShortError);
    CHECK_THROWS_AS(static_cast<void>(difference_process_stats(path, 20.0, 10.0)), std::invalid_argument);
}

TEST_CASE("sample CSV layout") {
    const SimPath path = simulate(short_canonical(50, 3, 1.0));
    const std::string csv = sim_csv(path);
    CHECK(csv.rfind("t,Q1,Q2,Z11,Z12,Z21,Z22,D\n", 0) == 0);
    CHECK(csv.find("\n0,0,0,0,0,0,0,0\n") != std::string::npos);
}
