#pragma once

// Core model state for a two-class / two-pool overloaded service system
// under a queue-ratio control with one-way sharing: class-1 fluid may be
// served in pool 2 (z12), and the target queue relation on the shared
// boundary is q1 - r*q2 = kappa with r = j/k rational.

#include <cstdint>
#include <string>
#include <vector>

namespace fqrt {

// Service-system primitives. Rates are per-server; m1/m2 are pool sizes
// (fluid scale). The ratio r = j/k is kept as an integer pair so that
// boundary tests and the difference-process lattice are exact.
struct ModelParams {
    double lambda1 = 0.0;  // class-1 arrival rate
    double lambda2 = 0.0;  // class-2 arrival rate
    double m1 = 0.0;       // pool-1 capacity
    double m2 = 0.0;       // pool-2 capacity
    double mu11 = 0.0;     // service rate, class 1 in pool 1
    double mu12 = 0.0;     // service rate, class 1 in pool 2
    double mu21 = 0.0;     // service rate, class 2 in pool 1
    double mu22 = 0.0;     // service rate, class 2 in pool 2
    double theta1 = 0.0;   // class-1 abandonment rate
    double theta2 = 0.0;   // class-2 abandonment rate
    int j = 1;             // ratio numerator   (r = j/k)
    int k = 1;             // ratio denominator
    double kappa = 0.0;    // boundary shift (>= 0)

    [[nodiscard]] double r() const { return static_cast<double>(j) / static_cast<double>(k); }
};

// Fluid state restricted to the overloaded regime: pool 1 full, no
// class-2 fluid in pool 1, so (q1, q2, z12) determines everything
// (z11 = m1, z22 = m2 - z12, z21 = 0).
struct FluidState {
    double q1 = 0.0;
    double q2 = 0.0;
    double z12 = 0.0;
};

// Mean drift rates of the fast queue-difference process above (+) and at
// or below (-) zero. Positive recurrence <=> delta_minus > 0 > delta_plus.
struct DriftPair {
    double delta_plus = 0.0;
    double delta_minus = 0.0;
};

// Region of the state space relative to the sharing boundary
// q1 - r*q2 = kappa, with the boundary refined by drift signs.
enum class RegionTag : std::uint8_t { SPlus, SMinus, Boundary };

enum class BoundarySub : std::uint8_t {
    A,            // delta_minus > 0 > delta_plus (positive recurrent)
    APlusStrict,  // delta_plus > 0
    APlusZero,    // delta_plus = 0 (within tolerance), delta_minus > 0
    AMinusStrict, // delta_minus < 0
    AMinusZero,   // delta_minus = 0 (within tolerance), delta_plus < 0
};

struct Region {
    RegionTag tag = RegionTag::SPlus;
    BoundarySub sub = BoundarySub::A;  // meaningful only when tag == Boundary

    [[nodiscard]] bool is_boundary() const { return tag == RegionTag::Boundary; }
    [[nodiscard]] bool positive_recurrent() const {
        return tag == RegionTag::Boundary && sub == BoundarySub::A;
    }
};

[[nodiscard]] std::string to_string(RegionTag tag);
[[nodiscard]] std::string to_string(const Region& region);

// Steady-state quantities of each class served in isolation (no sharing):
// qa_i is the overload queue length, sa_i the idle capacity.
struct IsolationQuantities {
    double qa1 = 0.0;
    double qa2 = 0.0;
    double sa1 = 0.0;
    double sa2 = 0.0;
};

struct ValidationReport {
    bool positivity_ok = false;     // all rates/pools strictly positive, finite
    bool ratio_ok = false;          // j, k >= 1 and gcd(j, k) == 1
    bool assumption_ok = false;     // theta1*(qa1 - kappa) >= mu12*sa2
    double assumption_lhs = 0.0;
    double assumption_rhs = 0.0;
    IsolationQuantities isolation;
    std::vector<std::string> diagnostics;

    // Hard validity: positivity only. A false ratio_ok (non-coprime j,k)
    // and a failed overload assumption are warning-level findings: the
    // former still defines the same r, the latter disables only the
    // in-boundary solver pipeline.
    [[nodiscard]] bool ok() const { return positivity_ok; }
};

// Classification tolerances. The boundary band is relative to the queue
// scale; the drift-zero band is relative to the (always positive) drift
// gap delta_minus - delta_plus.
inline constexpr double kBoundaryTolScale = 1e-9;
inline constexpr double kDriftTolScale = 1e-9;

[[nodiscard]] ValidationReport validate_params(const ModelParams& p);

[[nodiscard]] IsolationQuantities isolation_quantities(const ModelParams& p);

// Mean drifts of the difference process at state x (z11 = m1 substituted).
[[nodiscard]] DriftPair drift_pair(const FluidState& x, const ModelParams& p);

// Region of x: off-boundary by the signed distance q1 - r*q2 - kappa
// against a relative band, on-boundary refined by the drift signs.
[[nodiscard]] Region classify(const FluidState& x, const ModelParams& p);

// Signed boundary distance q1 - r*q2 - kappa and its tolerance band.
[[nodiscard]] double boundary_distance(const FluidState& x, const ModelParams& p);
[[nodiscard]] double boundary_band(const FluidState& x, const ModelParams& p);

// A priori per-class queue bounds valid along any solution from x0:
// q_i(t) <= max(q_i(0), lambda_i / theta_i).
struct QueueBounds {
    double q1_bound = 0.0;
    double q2_bound = 0.0;
};
[[nodiscard]] QueueBounds queue_bounds(const FluidState& x0, const ModelParams& p);

}  // namespace fqrt
