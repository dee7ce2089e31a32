#include "fqrt/stationary.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include <json.hpp>

namespace fqrt {

namespace {

// Minimal exact rational on 64-bit terms with 128-bit intermediates. Any
// overflow or failure to recover a parameter exactly falls back to the
// floating-point path; exactness is an upgrade, never a requirement.
struct Rat {
    std::int64_t num = 0;
    std::int64_t den = 1;
};

constexpr std::int64_t kRatLimit = std::int64_t(1) << 62;

std::optional<Rat> rat_make(__int128 n, __int128 d) {
    if (d == 0) return std::nullopt;
    if (d < 0) {
        n = -n;
        d = -d;
    }
    // Euclidean reduction in 128 bits.
    __int128 a = n < 0 ? -n : n;
    __int128 b = d;
    while (b != 0) {
        const __int128 t = a % b;
        a = b;
        b = t;
    }
    if (a > 1) {
        n /= a;
        d /= a;
    }
    if (n > kRatLimit || n < -kRatLimit || d > kRatLimit) return std::nullopt;
    return Rat{static_cast<std::int64_t>(n), static_cast<std::int64_t>(d)};
}

std::optional<Rat> rat_add(const Rat& x, const Rat& y) {
    return rat_make(static_cast<__int128>(x.num) * y.den + static_cast<__int128>(y.num) * x.den,
                    static_cast<__int128>(x.den) * y.den);
}

std::optional<Rat> rat_sub(const Rat& x, const Rat& y) {
    return rat_add(x, Rat{-y.num, y.den});
}

std::optional<Rat> rat_mul(const Rat& x, const Rat& y) {
    return rat_make(static_cast<__int128>(x.num) * y.num,
                    static_cast<__int128>(x.den) * y.den);
}

double rat_to_double(const Rat& x) {
    return static_cast<double>(x.num) / static_cast<double>(x.den);
}

// Recover v as a small rational whose double rounding reproduces v exactly
// (continued fractions, denominator capped). This covers every parameter
// entered as a short decimal.
std::optional<Rat> rat_from_double(double v) {
    if (!std::isfinite(v)) return std::nullopt;
    if (v == 0.0) return Rat{0, 1};
    const bool neg = v < 0.0;
    const double x = std::abs(v);
    std::int64_t p0 = 0, q0 = 1, p1 = 1, q1 = 0;  // convergents p/q
    double frac = x;
    for (int it = 0; it < 64; ++it) {
        const double whole = std::floor(frac);
        if (whole > 1e15) return std::nullopt;
        const auto a = static_cast<std::int64_t>(whole);
        const std::int64_t p2 = a * p1 + p0;
        const std::int64_t q2 = a * q1 + q0;
        if (p2 > 1'000'000'000LL || q2 > 1'000'000'000LL || p2 < 0 || q2 < 0) {
            return std::nullopt;
        }
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
        if (q1 > 0 && static_cast<double>(p1) / static_cast<double>(q1) == x) {
            return Rat{neg ? -p1 : p1, q1};
        }
        const double rem = frac - whole;
        if (rem <= 0.0 || rem < 1e-15 * frac) break;
        frac = 1.0 / rem;
    }
    return std::nullopt;
}

// Unclamped sharing balance root via exact rationals; empty on any failure.
std::optional<double> z_raw_rational(const ModelParams& p) {
    const auto lam1 = rat_from_double(p.lambda1);
    const auto lam2 = rat_from_double(p.lambda2);
    const auto m1 = rat_from_double(p.m1);
    const auto m2 = rat_from_double(p.m2);
    const auto mu11 = rat_from_double(p.mu11);
    const auto mu12 = rat_from_double(p.mu12);
    const auto mu22 = rat_from_double(p.mu22);
    const auto th1 = rat_from_double(p.theta1);
    const auto th2 = rat_from_double(p.theta2);
    const auto kap = rat_from_double(p.kappa);
    if (!lam1 || !lam2 || !m1 || !m2 || !mu11 || !mu12 || !mu22 || !th1 || !th2 || !kap) {
        return std::nullopt;
    }
    const Rat jj{p.j, 1};
    const Rat kk{p.k, 1};

    // k*theta2*(lambda1 - m1*mu11) - j*theta1*(lambda2 - m2*mu22)
    //   - k*theta1*theta2*kappa, over j*theta1*mu22 + k*theta2*mu12.
    auto ov1 = rat_mul(*m1, *mu11);
    if (!ov1) return std::nullopt;
    auto t1 = rat_sub(*lam1, *ov1);
    if (!t1) return std::nullopt;
    auto t1s = rat_mul(kk, *th2);
    if (!t1s) return std::nullopt;
    t1 = rat_mul(*t1s, *t1);
    if (!t1) return std::nullopt;

    auto ov2 = rat_mul(*m2, *mu22);
    if (!ov2) return std::nullopt;
    auto t2 = rat_sub(*lam2, *ov2);
    if (!t2) return std::nullopt;
    auto t2s = rat_mul(jj, *th1);
    if (!t2s) return std::nullopt;
    t2 = rat_mul(*t2s, *t2);
    if (!t2) return std::nullopt;

    auto t3 = rat_mul(*th1, *th2);
    if (!t3) return std::nullopt;
    t3 = rat_mul(*t3, *kap);
    if (!t3) return std::nullopt;
    t3 = rat_mul(kk, *t3);
    if (!t3) return std::nullopt;

    auto num = rat_sub(*t1, *t2);
    if (!num) return std::nullopt;
    num = rat_sub(*num, *t3);
    if (!num) return std::nullopt;

    auto d1 = rat_mul(*t2s, *mu22);
    if (!d1) return std::nullopt;
    auto d2 = rat_mul(*t1s, *mu12);
    if (!d2) return std::nullopt;
    auto den = rat_add(*d1, *d2);
    if (!den || den->num == 0) return std::nullopt;

    auto z = rat_make(static_cast<__int128>(num->num) * den->den,
                      static_cast<__int128>(num->den) * den->num);
    if (!z) return std::nullopt;
    return rat_to_double(*z);
}

double z_raw_double(const ModelParams& p) {
    const double r = p.r();
    const double num = p.theta2 * (p.lambda1 - p.m1 * p.mu11) -
                       r * p.theta1 * (p.lambda2 - p.m2 * p.mu22) -
                       p.theta1 * p.theta2 * p.kappa;
    const double den = r * p.theta1 * p.mu22 + p.theta2 * p.mu12;
    return num / den;
}

}  // namespace

RegionByRates region_of_star_by_rates(const ModelParams& p) {
    const IsolationQuantities iso = isolation_quantities(p);
    const double r = p.r();
    const double lhs = iso.qa1 - p.kappa;
    const double ceiling = r * p.lambda2 / p.theta2 + p.mu12 * p.m2 / p.theta1;

    RegionByRates out;
    out.margins.above_sharing_pull = lhs - p.mu12 * iso.sa2 / p.theta1;
    out.margins.above_ratio_floor = lhs - r * iso.qa2;
    out.margins.below_ceiling = ceiling - lhs;

    const double tol = 1e-12 * std::max({1.0, std::abs(lhs), ceiling});
    if (out.margins.below_ceiling < -tol) {
        out.region.tag = RegionTag::SPlus;
        return out;
    }
    if (out.margins.above_ratio_floor < -tol || out.margins.above_sharing_pull < -tol) {
        out.region.tag = RegionTag::SMinus;
        return out;
    }
    out.region.tag = RegionTag::Boundary;
    if (out.margins.below_ceiling <= tol) {
        // Sharing saturates pool 2 exactly: upward drift vanishes.
        out.region.sub = BoundarySub::APlusZero;
    } else if (out.margins.above_ratio_floor <= tol &&
               out.margins.above_ratio_floor <= out.margins.above_sharing_pull + tol) {
        // No sharing at the fixed point: downward drift vanishes.
        out.region.sub = BoundarySub::AMinusZero;
    } else {
        out.region.sub = BoundarySub::A;
    }
    return out;
}

LyapunovChoice lyapunov_choice(const ModelParams& p) {
    LyapunovChoice lc;
    if (p.mu12 > p.mu22) {
        lc.uses_v1 = true;
        lc.C = 1.0;
        lc.w1 = 1.0;
        lc.w2 = 1.0;
        lc.w3 = 0.0;
        lc.a1 = p.theta1;
        lc.a2 = p.theta2;
        lc.a3 = p.mu12 - p.mu22;
    } else {
        lc.uses_v1 = false;
        lc.C = p.mu22 / p.mu12 + 1.0;
        lc.w1 = lc.C;
        lc.w2 = 1.0;
        lc.w3 = lc.C - 1.0;
        lc.a1 = lc.C * p.theta1;
        lc.a2 = p.theta2;
        lc.a3 = lc.C * p.mu12 - p.mu22;
    }
    return lc;
}

double lyapunov_gap(const LyapunovChoice& lc, const FluidState& x, const FluidState& x_star) {
    return lc.w1 * (x.q1 - x_star.q1) + lc.w2 * (x.q2 - x_star.q2) +
           lc.w3 * (x.z12 - x_star.z12);
}

double lyapunov_lie_derivative(const LyapunovChoice& lc, const FluidState& x,
                               const FluidState& x_star) {
    return -(lc.a1 * (x.q1 - x_star.q1) + lc.a2 * (x.q2 - x_star.q2) +
             lc.a3 * (x.z12 - x_star.z12));
}

ExpBound exp_stability_constants(const ModelParams& p) {
    const LyapunovChoice lc = lyapunov_choice(p);
    ExpBound eb;
    eb.uses_v1 = lc.uses_v1;
    eb.C = lc.C;
    if (lc.uses_v1) {
        eb.K = std::min({p.theta1, p.theta2, p.mu12 - p.mu22});
        eb.prefactor = 1.0;
    } else {
        eb.K = std::min({lc.C * p.theta1, p.theta2, lc.C * p.mu12 - p.mu22});
        eb.prefactor = lc.C / std::min(1.0, lc.C - 1.0);
    }
    eb.rate = eb.K / 2.0;
    return eb;
}

DriftPair drift_at_star(const ModelParams& p) {
    const StationaryReport rep = stationary_point(p);
    return rep.drift_at_star;
}

std::optional<double> v_ball_alpha(const ModelParams& p) {
    const StationaryReport rep = stationary_point(p);
    return rep.v_ball_alpha;
}

SscCheck global_ssc_sufficient(const ModelParams& p, const FluidState& x0) {
    const double nu = std::min(p.mu12, p.mu22);
    SscCheck c;
    c.arrivals_below_joint_capacity = p.lambda1 < nu * p.m2 + p.m1 * p.mu11;
    c.class2_saturates_pool2 = p.lambda2 > nu * p.m2;
    c.q2_start_bounded = x0.q2 <= p.lambda2 / p.theta2;
    c.q1_start_bounded = x0.q1 <= (p.lambda1 - p.m1 * p.mu11) / p.theta1;
    c.sufficient = c.arrivals_below_joint_capacity && c.class2_saturates_pool2 &&
                   c.q2_start_bounded && c.q1_start_bounded;
    return c;
}

StationaryReport stationary_point(const ModelParams& p) {
    StationaryReport rep;

    const auto z_exact = z_raw_rational(p);
    rep.z_exact = z_exact.has_value();
    rep.z_raw = z_exact.value_or(z_raw_double(p));

    const double z = std::clamp(rep.z_raw, 0.0, p.m2);
    rep.x_star.z12 = z;
    rep.x_star.q1 = (p.lambda1 - p.m1 * p.mu11 - p.mu12 * z) / p.theta1;
    rep.x_star.q2 = (p.lambda2 - p.mu22 * (p.m2 - z)) / p.theta2;

    const double share = p.mu12 * z;
    const double keep = p.mu22 * (p.m2 - z);
    rep.pi_star = share / (share + keep);

    rep.region_by_rates = region_of_star_by_rates(p);

    const double scale = static_cast<double>(p.j + p.k);
    rep.drift_at_star.delta_plus = -scale * keep;
    rep.drift_at_star.delta_minus = scale * share;

    rep.lyapunov = lyapunov_choice(p);
    rep.exp_bound = exp_stability_constants(p);

    if (rep.region_by_rates.region.positive_recurrent()) {
        // Recurrence margin in per-unit-ratio drift units (r+1 scaling).
        const double r = p.r();
        const double xi = (r + 1.0) * std::min(share, keep);
        const double denom =
            p.mu22 >= p.mu12 ? r * p.theta2 : (p.mu12 - p.mu22 + p.theta1 + r * p.theta2);
        rep.v_ball_alpha = xi / denom;
    }

    rep.ssc_at_star = global_ssc_sufficient(p, rep.x_star);
    return rep;
}

std::string stationary_report_json(const ModelParams& p, const StationaryReport& rep) {
    nlohmann::json j;
    j["x_star"] = {{"q1", rep.x_star.q1}, {"q2", rep.x_star.q2}, {"z12", rep.x_star.z12}};
    j["z_raw"] = rep.z_raw;
    j["z_exact"] = rep.z_exact;
    j["pi_star"] = rep.pi_star;
    j["region"] = to_string(rep.region_by_rates.region);
    j["margins"] = {{"above_sharing_pull", rep.region_by_rates.margins.above_sharing_pull},
                    {"above_ratio_floor", rep.region_by_rates.margins.above_ratio_floor},
                    {"below_ceiling", rep.region_by_rates.margins.below_ceiling}};
    j["drift_at_star"] = {{"delta_plus", rep.drift_at_star.delta_plus},
                          {"delta_minus", rep.drift_at_star.delta_minus}};
    j["lyapunov"] = {{"which", rep.lyapunov.uses_v1 ? "V1" : "V2"}, {"C", rep.lyapunov.C}};
    j["exp_bound"] = {{"prefactor", rep.exp_bound.prefactor},
                      {"rate", rep.exp_bound.rate},
                      {"K", rep.exp_bound.K}};
    nlohmann::json ssc;
    ssc["global_sufficient"] = rep.ssc_at_star.sufficient;
    if (rep.v_ball_alpha) {
        ssc["v_ball_alpha"] = *rep.v_ball_alpha;
    } else {
        ssc["v_ball_alpha"] = nullptr;
    }
    j["ssc"] = ssc;
    (void)p;
    return j.dump(2);
}

}  // namespace fqrt
