#pragma once

// Forward-Euler integration of the fluid dynamics. Outside the overloaded
// set S the solver runs a transient cascade (pools filling, queue 1 rising
// to the shift, pool-2 spare capacity absorbing class-1 overflow); inside S
// it advances the three-dimensional field whose sharing weight pi12 comes
// from the fast-process steady state, with trajectories snapped onto the
// boundary while the fast process is positive recurrent there.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fqrt/model.hpp"

namespace fqrt {

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Step size too coarse for the boundary band at the current state.
struct StepTooLargeError : SolverError {
    using SolverError::SolverError;
};
// Parameters fail the overload assumption required by the in-S dynamics.
struct AssumptionViolatedError : SolverError {
    using SolverError::SolverError;
};
// The transient cascade cannot hand over to the in-S dynamics.
struct NeverReachesSError : SolverError {
    using SolverError::SolverError;
};

enum class Phase : std::uint8_t {
    FillingPools,   // a pool still has idle capacity for its own class
    Queue1Growing,  // pool 1 full, queue 1 below the shift kappa
    SharingRampUp,  // queue 1 pinned at kappa, overflow filling pool 2
    InS,            // both pools full, q1 >= kappa: averaged dynamics
    WrongWayDrain,  // leftover class-2 work in pool 1 draining out
};

[[nodiscard]] std::string to_string(Phase phase);

// Full occupancy state used outside S; inside S it collapses to
// (q1, q2, z12) with z11 = m1, z22 = m2 - z12, z21 = 0.
struct ExtendedState {
    double q1 = 0.0;
    double q2 = 0.0;
    double z11 = 0.0;
    double z12 = 0.0;
    double z22 = 0.0;
    double z21 = 0.0;

    [[nodiscard]] FluidState restricted() const { return {q1, q2, z12}; }
};

struct TrajectorySample {
    double t = 0.0;
    ExtendedState state;
    Phase phase = Phase::FillingPools;
    std::optional<double> pi12;   // present exactly when phase == InS
    std::optional<Region> region; // present exactly when phase == InS
    double d_presnap = 0.0;       // boundary distance before any snap this step
};

struct Trajectory {
    double h = 0.0;
    std::vector<TrajectorySample> samples;  // on the uniform grid t = k*h
    std::vector<std::string> diagnostics;
    std::optional<double> s_entry_time;  // when the cascade handed over to InS
    // State at the handover instant (off the grid), with its region and
    // sharing weight: the grid can step straight over the boundary crossing.
    std::optional<TrajectorySample> s_entry_sample;

    [[nodiscard]] bool reached_s() const { return s_entry_time.has_value(); }
};

struct PsiValue {
    double dq1 = 0.0;
    double dq2 = 0.0;
    double dz12 = 0.0;
};

// In-S vector field with the sharing weight supplied by the caller.
[[nodiscard]] PsiValue psi(const FluidState& x, const ModelParams& p, double pi12_value);

struct EulerStep {
    FluidState next;
    Region region;          // region of the pre-step state
    double pi12 = 0.0;      // sharing weight at the pre-step state
    bool snapped = false;   // boundary projection applied after the step
    double clamp_size = 0.0;
    double d_presnap = 0.0; // boundary distance of the raw post-step state
};

// One in-S Euler step: evaluates (region, pi12) at x, advances by h, then
// projects onto the boundary (keeping q1) when the raw step lands within
// the band |q1 - r*q2 - kappa| < h and the projected state is positive
// recurrent. Box violations are clamped and reported in clamp_size.
[[nodiscard]] EulerStep euler_step(const FluidState& x, const ModelParams& p, double h);

struct SolveOptions {
    double h = 0.01;
    double t_end = 50.0;
};

// Integrate from an arbitrary occupancy state. Samples lie on the uniform
// grid t = k*h; phase transitions are located inside the step by the sign
// change of the phase's defining residual and the crossing variable is
// pinned exactly at the event.
[[nodiscard]] Trajectory solve_ivp(const ExtendedState& x0, const ModelParams& p,
                                   const SolveOptions& opts = {});

// First time the in-S trajectory carries a boundary region tag, linearly
// interpolated between samples on the boundary distance.
[[nodiscard]] std::optional<double> hitting_time(const Trajectory& traj, const ModelParams& p);

struct ExpFit {
    double beta = 0.0;       // fitted decay rate of ||x - x*||_1
    double r_squared = 0.0;
    int points = 0;
};

// Least-squares fit of log ||x(t) - x*||_1 over the in-S samples from
// t_from until the distance reaches its numerical floor.
[[nodiscard]] std::optional<ExpFit> fit_exponential_rate(const Trajectory& traj,
                                                         const FluidState& x_star,
                                                         double t_from);

// CSV columns: t,q1,q2,z11,z12,z22,z21,pi12,region,phase with nine
// significant digits; pi12/region are empty outside S.
void write_trajectory_csv(const Trajectory& traj, std::ostream& os);
[[nodiscard]] std::string trajectory_csv(const Trajectory& traj);

}  // namespace fqrt
