#pragma once

// Stationary-point analysis: closed-form fixed point of the boundary
// dynamics, its region by rate inequalities, drift values, and stability
// certificates (Lyapunov constants, exponential envelope, invariant ball,
// global state-space-collapse sufficient conditions).

#include <optional>
#include <string>

#include "fqrt/model.hpp"

namespace fqrt {

// Signed margins of the three stationary-region inequalities; positive
// margins mean the inequality holds with room to spare.
struct RegionMargins {
    double above_sharing_pull = 0.0;  // (qa1 - kappa) - mu12*sa2/theta1
    double above_ratio_floor = 0.0;   // (qa1 - kappa) - r*qa2
    double below_ceiling = 0.0;       // r*lambda2/theta2 + mu12*m2/theta1 - (qa1 - kappa)
};

struct RegionByRates {
    Region region;
    RegionMargins margins;
};

// Weighted linear Lyapunov function V = w . (x - x*); its derivative along
// the dynamics is -(a . (x - x*)) in every region.
struct LyapunovChoice {
    bool uses_v1 = false;  // true: V1 = q1~ + q2~ (mu12 > mu22 case)
    double C = 1.0;        // mu22/mu12 + 1, weight for the V2 case
    double w1 = 1.0, w2 = 1.0, w3 = 0.0;
    double a1 = 0.0, a2 = 0.0, a3 = 0.0;
};

struct ExpBound {
    bool uses_v1 = false;
    double C = 1.0;
    double K = 0.0;          // decay constant of the Lyapunov derivative
    double rate = 0.0;       // guaranteed envelope rate K/2
    double prefactor = 1.0;  // envelope prefactor
};

struct SscCheck {
    bool arrivals_below_joint_capacity = false;  // lambda1 < nu*m2 + m1*mu11
    bool class2_saturates_pool2 = false;         // lambda2 > nu*m2
    bool q2_start_bounded = false;               // q2(0) <= lambda2/theta2
    bool q1_start_bounded = false;               // q1(0) <= (lambda1 - m1*mu11)/theta1
    bool sufficient = false;
};

struct StationaryReport {
    FluidState x_star;
    double z_raw = 0.0;    // unclamped root of the sharing balance
    bool z_exact = false;  // z computed through the exact rational path
    double pi_star = 0.0;  // sharing weight making x_star stationary
    RegionByRates region_by_rates;
    DriftPair drift_at_star;  // (j+k)-scaled closed form
    LyapunovChoice lyapunov;
    ExpBound exp_bound;
    std::optional<double> v_ball_alpha;  // present only when x* is positive recurrent
    SscCheck ssc_at_star;
};

// Closed-form stationary point. The sharing level solves a linear balance;
// when every parameter is exactly a small rational the root is evaluated
// in integer arithmetic (z_exact = true), otherwise in doubles.
[[nodiscard]] StationaryReport stationary_point(const ModelParams& p);

// Region of x* from the isolation-rate inequalities alone (no state
// classification), together with the inequality margins.
[[nodiscard]] RegionByRates region_of_star_by_rates(const ModelParams& p);

// Drifts at the stationary point in closed form:
// delta_plus = -(j+k)*mu22*(m2 - z*), delta_minus = (j+k)*mu12*z*.
[[nodiscard]] DriftPair drift_at_star(const ModelParams& p);

[[nodiscard]] LyapunovChoice lyapunov_choice(const ModelParams& p);

// Signed Lyapunov gap V(x) - V(x*).
[[nodiscard]] double lyapunov_gap(const LyapunovChoice& lc, const FluidState& x,
                                  const FluidState& x_star);

// Analytic Lie derivative -(a . (x - x*)), valid in every region.
[[nodiscard]] double lyapunov_lie_derivative(const LyapunovChoice& lc, const FluidState& x,
                                             const FluidState& x_star);

[[nodiscard]] ExpBound exp_stability_constants(const ModelParams& p);

// Invariant-ball radius for |V(x) - V(x*)|: states within alpha stay
// positive recurrent. Empty when x* itself is not in the recurrent set.
[[nodiscard]] std::optional<double> v_ball_alpha(const ModelParams& p);

// Sufficient conditions for the boundary relation to hold for all time
// once reached, regardless of where the trajectory starts.
[[nodiscard]] SscCheck global_ssc_sufficient(const ModelParams& p, const FluidState& x0);

// Full report as a JSON document.
[[nodiscard]] std::string stationary_report_json(const ModelParams& p,
                                                 const StationaryReport& report);

}  // namespace fqrt
