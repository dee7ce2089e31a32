#include "fqrt/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fqrt {

namespace {

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

std::string to_string(RegionTag tag) {
    switch (tag) {
        case RegionTag::SPlus: return "SPlus";
        case RegionTag::SMinus: return "SMinus";
        case RegionTag::Boundary: return "Boundary";
    }
    return "?";
}

std::string to_string(const Region& region) {
    if (region.tag != RegionTag::Boundary) return to_string(region.tag);
    switch (region.sub) {
        case BoundarySub::A: return "A";
        case BoundarySub::APlusStrict: return "APlusStrict";
        case BoundarySub::APlusZero: return "APlusZero";
        case BoundarySub::AMinusStrict: return "AMinusStrict";
        case BoundarySub::AMinusZero: return "AMinusZero";
    }
    return "?";
}

IsolationQuantities isolation_quantities(const ModelParams& p) {
    IsolationQuantities iso;
    iso.qa1 = std::max(0.0, (p.lambda1 - p.mu11 * p.m1) / p.theta1);
    iso.qa2 = std::max(0.0, (p.lambda2 - p.mu22 * p.m2) / p.theta2);
    iso.sa1 = std::max(0.0, p.m1 - p.lambda1 / p.mu11);
    iso.sa2 = std::max(0.0, p.m2 - p.lambda2 / p.mu22);
    return iso;
}

ValidationReport validate_params(const ModelParams& p) {
    ValidationReport rep;

    rep.positivity_ok = true;
    const struct { const char* name; double value; } rates[] = {
        {"lambda1", p.lambda1}, {"lambda2", p.lambda2}, {"m1", p.m1},
        {"m2", p.m2},           {"mu11", p.mu11},       {"mu12", p.mu12},
        {"mu21", p.mu21},       {"mu22", p.mu22},       {"theta1", p.theta1},
        {"theta2", p.theta2},
    };
    for (const auto& rate : rates) {
        if (!positive_finite(rate.value)) {
            rep.positivity_ok = false;
            rep.diagnostics.push_back(std::string(rate.name) + " must be finite and > 0");
        }
    }
    if (!(std::isfinite(p.kappa) && p.kappa >= 0.0)) {
        rep.positivity_ok = false;
        rep.diagnostics.emplace_back("kappa must be finite and >= 0");
    }

    rep.ratio_ok = p.j >= 1 && p.k >= 1;
    if (!rep.ratio_ok) {
        rep.diagnostics.emplace_back("j and k must be integers >= 1");
    } else if (std::gcd(p.j, p.k) != 1) {
        // Non-coprime pairs define the same ratio and the same dynamics on a
        // coarser lattice; flag but do not reject.
        rep.ratio_ok = false;
        rep.diagnostics.emplace_back("j and k are not coprime; equivalent to the reduced ratio");
    }

    if (!rep.positivity_ok) return rep;

    rep.isolation = isolation_quantities(p);
    // Overload condition: class-1 overload past the shift must dominate the
    // sharing pull of pool-2 spare capacity, theta1*(qa1 - kappa) >= mu12*sa2.
    rep.assumption_lhs = p.theta1 * (rep.isolation.qa1 - p.kappa);
    rep.assumption_rhs = p.mu12 * rep.isolation.sa2;
    rep.assumption_ok = rep.assumption_lhs >= rep.assumption_rhs;
    if (!rep.assumption_ok) {
        rep.diagnostics.emplace_back(
            "overload assumption fails: theta1*(qa1 - kappa) < mu12*sa2; "
            "in-boundary solving is not supported for these parameters");
    }
    return rep;
}

DriftPair drift_pair(const FluidState& x, const ModelParams& p) {
    // Pool-2 service flow with z11 = m1 substituted.
    const double pool2_flow = p.mu12 * x.z12 + p.mu22 * (p.m2 - x.z12);

    // Rates of the difference process when it is positive: every newly
    // freed server (either pool) takes class-1 work.
    const double lam_k_plus = p.lambda1;
    const double lam_j_plus = p.theta2 * x.q2;
    const double mu_k_plus = p.mu11 * p.m1 + pool2_flow + p.theta1 * x.q1;
    const double mu_j_plus = p.lambda2;

    // When nonpositive: pool-2 service flow feeds class 2 instead.
    const double lam_k_minus = p.lambda1;
    const double lam_j_minus = pool2_flow + p.theta2 * x.q2;
    const double mu_k_minus = p.mu11 * p.m1 + p.theta1 * x.q1;
    const double mu_j_minus = p.lambda2;

    const double j = static_cast<double>(p.j);
    const double k = static_cast<double>(p.k);
    DriftPair d;
    d.delta_plus = j * (lam_j_plus - mu_j_plus) + k * (lam_k_plus - mu_k_plus);
    d.delta_minus = j * (lam_j_minus - mu_j_minus) + k * (lam_k_minus - mu_k_minus);
    return d;
}

double boundary_distance(const FluidState& x, const ModelParams& p) {
    return x.q1 - p.r() * x.q2 - p.kappa;
}

double boundary_band(const FluidState& x, const ModelParams& p) {
    return kBoundaryTolScale * std::max({1.0, x.q1, p.r() * x.q2});
}

Region classify(const FluidState& x, const ModelParams& p) {
    const double d = boundary_distance(x, p);
    const double band = boundary_band(x, p);
    Region region;
    if (d > band) {
        region.tag = RegionTag::SPlus;
        return region;
    }
    if (d < -band) {
        region.tag = RegionTag::SMinus;
        return region;
    }

    region.tag = RegionTag::Boundary;
    const DriftPair drift = drift_pair(x, p);
    const double gap = drift.delta_minus - drift.delta_plus;  // > 0 always
    const double tol = kDriftTolScale * gap;
    if (drift.delta_plus > tol) {
        region.sub = BoundarySub::APlusStrict;
    } else if (drift.delta_plus >= -tol) {
        region.sub = BoundarySub::APlusZero;
    } else if (drift.delta_minus < -tol) {
        region.sub = BoundarySub::AMinusStrict;
    } else if (drift.delta_minus <= tol) {
        region.sub = BoundarySub::AMinusZero;
    } else {
        region.sub = BoundarySub::A;
    }
    return region;
}

QueueBounds queue_bounds(const FluidState& x0, const ModelParams& p) {
    QueueBounds b;
    b.q1_bound = std::max(x0.q1, p.lambda1 / p.theta1);
    b.q2_bound = std::max(x0.q2, p.lambda2 / p.theta2);
    return b;
}

}  // namespace fqrt
