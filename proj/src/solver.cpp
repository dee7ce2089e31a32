#include "fqrt/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include "fqrt/qbd.hpp"

namespace fqrt {

namespace {

// Relative tolerance for "pool is full" tests during the transient cascade.
constexpr double kPoolTolScale = 1e-9;
// Below this fraction of m1 the leftover class-2 content of pool 1 is zeroed.
constexpr double kZ21FloorScale = 1e-9;
// Clamps larger than this (relative to the state scale) are reported.
constexpr double kClampReportScale = 1e-6;
// Cap on event-refinement passes inside a single step.
constexpr int kMaxSubEvents = 8;

double pool_tol(double m) { return kPoolTolScale * std::max(1.0, m); }

// Sharing weight for a state whose pool-1 service flow differs from the
// nominal m1*mu11 (used while class-2 work is still draining out of pool 1).
double pi12_with_pool1_flow(const FluidState& x, const ModelParams& p, double pool1_flow) {
    const double d = boundary_distance(x, p);
    const double band = boundary_band(x, p);
    if (d > band) return 1.0;
    if (d < -band) return 0.0;
    const FtspRates rates = ftsp_rates_with_pool1_flow(x, p, pool1_flow);
    const DriftPair drift = drift_of(rates, p.j, p.k);
    switch (recurrence_check(drift)) {
        case Recurrence::NullOrTransientUp: return 1.0;
        case Recurrence::NullOrTransientDown: return 0.0;
        case Recurrence::PositiveRecurrent: break;
    }
    if (p.j == p.k) return pi12_bd_closed_form(drift);
    return solve_qbd(build_blocks(rates, p.j, p.k)).pi12;
}

// Advance the restricted state by h with a fixed sharing weight, then apply
// the boundary projection and box clamps. Factored out so solve_ivp and the
// public euler_step share one stepping rule.
void advance_restricted(const FluidState& x, const ModelParams& p, double h, double pi,
                        EulerStep& out) {
    const PsiValue v = psi(x, p, pi);
    FluidState n{x.q1 + h * v.dq1, x.q2 + h * v.dq2, x.z12 + h * v.dz12};
    out.d_presnap = boundary_distance(n, p);
    out.snapped = false;
    if (std::abs(out.d_presnap) < h) {
        // Project onto the boundary, keeping q1. Only hold the state there
        // while the fast process at the projected point is positive
        // recurrent; otherwise the trajectory passes through.
        const FluidState cand{n.q1, (n.q1 - p.kappa) / p.r(), n.z12};
        if (cand.q2 >= 0.0) {
            const Region reg = classify(cand, p);
            if (reg.tag == RegionTag::Boundary && reg.sub == BoundarySub::A) {
                n = cand;
                out.snapped = true;
            }
        }
    }
    double clamp = 0.0;
    const auto clamp_to = [&clamp](double& value, double lo, double hi) {
        const double c = std::clamp(value, lo, hi);
        clamp += std::abs(c - value);
        value = c;
    };
    const double q1_floor = std::max(0.0, p.kappa);
    clamp_to(n.q1, q1_floor, std::numeric_limits<double>::infinity());
    clamp_to(n.q2, 0.0, std::numeric_limits<double>::infinity());
    clamp_to(n.z12, 0.0, p.m2);
    out.clamp_size = clamp;
    out.next = n;
}

void check_step_size(const FluidState& x, const ModelParams& p, double h) {
    if (!(h > 0.0) || !std::isfinite(h)) {
        throw SolverError("step size must be positive and finite");
    }
    const double scale = std::max({x.q1, p.r() * x.q2, 1.0});
    if (h > 0.1 * scale) {
        throw StepTooLargeError("step size " + std::to_string(h) +
                                " exceeds a tenth of the state scale " + std::to_string(scale));
    }
}

struct TransientDeriv {
    double dq1 = 0.0;
    double dq2 = 0.0;
    double dz11 = 0.0;
    double dz12 = 0.0;
    double dz22 = 0.0;
    double dz21 = 0.0;
};

Phase derive_phase(const ExtendedState& s, const ModelParams& p) {
    if (s.z21 > kZ21FloorScale * p.m1) return Phase::WrongWayDrain;
    const bool p1_full = s.z11 + s.z21 >= p.m1 - pool_tol(p.m1);
    const bool p2_full = s.z12 + s.z22 >= p.m2 - pool_tol(p.m2);
    const double q_tol = kPoolTolScale * std::max(1.0, p.kappa);
    if (!p1_full) return Phase::FillingPools;
    if (!p2_full) return s.q1 >= p.kappa - q_tol ? Phase::SharingRampUp : Phase::Queue1Growing;
    return s.q1 >= p.kappa - q_tol ? Phase::InS : Phase::Queue1Growing;
}

// Derivative of the pre-S dynamics for the given phase. Queue derivatives
// are floored so a queue sitting at zero cannot be driven negative.
TransientDeriv transient_derivative(const ExtendedState& s, const ModelParams& p, Phase phase) {
    TransientDeriv d;
    const bool p2_full = s.z12 + s.z22 >= p.m2 - pool_tol(p.m2);

    // Class-2 side: own pool fills first; once full the queue obeys its
    // abandonment dynamics, fed by every server of pool 2 that frees up.
    if (!p2_full) {
        d.dz22 = p.lambda2 - p.mu22 * s.z22;
        d.dz12 = -p.mu12 * s.z12;
    } else {
        const double pool2_flow = p.mu12 * s.z12 + p.mu22 * s.z22;
        d.dq2 = p.lambda2 - pool2_flow - p.theta2 * s.q2;
        if (s.q2 <= 0.0 && d.dq2 < 0.0) d.dq2 = 0.0;
        d.dz12 = -p.mu12 * s.z12;
        d.dz22 = -d.dz12;
    }

    switch (phase) {
        case Phase::FillingPools:
            d.dz11 = p.lambda1 - p.mu11 * s.z11;
            break;
        case Phase::Queue1Growing:
            d.dq1 = p.lambda1 - p.mu11 * p.m1 - p.theta1 * s.q1;
            if (s.q1 <= 0.0 && d.dq1 < 0.0) d.dq1 = 0.0;
            break;
        case Phase::SharingRampUp:
            // Queue 1 is pinned at the shift; the excess inflow feeds pool 2
            // net of the class-1 work already turning over there.
            d.dq1 = 0.0;
            d.dq2 = 0.0;
            d.dz12 = (p.lambda1 - p.mu11 * p.m1 - p.theta1 * p.kappa) - p.mu12 * s.z12;
            d.dz22 = p.lambda2 - p.mu22 * s.z22;
            break;
        case Phase::WrongWayDrain: {
            // Class-2 work leaves pool 1 as it completes; the freed agents
            // pick up class-1 work (new arrivals while the pool has slack).
            d.dz21 = -p.mu21 * s.z21;
            const bool p1_full = s.z11 + s.z21 >= p.m1 - pool_tol(p.m1);
            d.dz11 = p.mu21 * s.z21 + (p1_full ? 0.0 : p.lambda1 - p.mu11 * s.z11);
            if (p1_full && p2_full && s.q1 >= p.kappa - kPoolTolScale * std::max(1.0, p.kappa)) {
                // Both pools busy: run the averaged field with the actual
                // pool-1 service flow in place of m1*mu11.
                const double pool1_flow = p.mu11 * s.z11 + p.mu21 * s.z21;
                const FluidState x = s.restricted();
                const double pi = pi12_with_pool1_flow(x, p, pool1_flow);
                const double pool2_flow = p.mu12 * s.z12 + p.mu22 * s.z22;
                d.dq1 = p.lambda1 - pool1_flow - pi * pool2_flow - p.theta1 * s.q1;
                d.dq2 = p.lambda2 - (1.0 - pi) * pool2_flow - p.theta2 * s.q2;
                d.dz12 = pi * p.mu22 * s.z22 - (1.0 - pi) * p.mu12 * s.z12;
                d.dz22 = -d.dz12;
                if (s.q1 <= 0.0 && d.dq1 < 0.0) d.dq1 = 0.0;
                if (s.q2 <= 0.0 && d.dq2 < 0.0) d.dq2 = 0.0;
            } else if (!p1_full) {
                d.dq1 = p.lambda1 - p.mu11 * s.z11 - p.mu21 * s.z21 - p.theta1 * s.q1;
                // With idle capacity the queue should be empty already;
                // anything left decays through service and abandonment.
                if (s.q1 <= 0.0) d.dq1 = 0.0;
                d.dz11 = p.lambda1 - p.mu11 * s.z11 + p.mu21 * s.z21;
            } else {
                d.dq1 = p.lambda1 - p.mu11 * s.z11 - p.mu21 * s.z21 - p.theta1 * s.q1;
                if (s.q1 <= 0.0 && d.dq1 < 0.0) d.dq1 = 0.0;
                d.dz11 = p.mu21 * s.z21;
            }
            break;
        }
        case Phase::InS:
            break;  // handled by the restricted stepper
    }
    return d;
}

void apply_deriv(ExtendedState& s, const TransientDeriv& d, double tau) {
    s.q1 += tau * d.dq1;
    s.q2 += tau * d.dq2;
    s.z11 += tau * d.dz11;
    s.z12 += tau * d.dz12;
    s.z22 += tau * d.dz22;
    s.z21 += tau * d.dz21;
    s.q1 = std::max(s.q1, 0.0);
    s.q2 = std::max(s.q2, 0.0);
    s.z11 = std::max(s.z11, 0.0);
    s.z12 = std::max(s.z12, 0.0);
    s.z22 = std::max(s.z22, 0.0);
    s.z21 = std::max(s.z21, 0.0);
}

// Earliest event inside the remaining step: pool fills, queue 1 reaching
// the shift, or the drain floor. Returns the crossing time and an action
// that pins the crossing variable exactly at its target.
struct Event {
    double tau = 0.0;
    enum class Kind { None, Pool1Full, Pool2Full, Queue1AtShift, DrainFloor } kind = Kind::None;
};

Event next_event(const ExtendedState& s, const ModelParams& p, Phase phase,
                 const TransientDeriv& d, double remaining) {
    Event ev;
    ev.tau = remaining;
    const auto consider = [&ev](double gap, double rate, Event::Kind kind) {
        if (rate <= 0.0) return;
        const double tau = gap / rate;
        if (tau >= 0.0 && tau < ev.tau) {
            ev.tau = tau;
            ev.kind = kind;
        }
    };
    const bool p1_full = s.z11 + s.z21 >= p.m1 - pool_tol(p.m1);
    const bool p2_full = s.z12 + s.z22 >= p.m2 - pool_tol(p.m2);
    if (!p1_full) {
        consider(p.m1 - s.z11 - s.z21, d.dz11 + d.dz21, Event::Kind::Pool1Full);
    }
    if (!p2_full) {
        consider(p.m2 - s.z12 - s.z22, d.dz12 + d.dz22, Event::Kind::Pool2Full);
    }
    if (phase == Phase::Queue1Growing && s.q1 < p.kappa) {
        consider(p.kappa - s.q1, d.dq1, Event::Kind::Queue1AtShift);
    }
    if (phase == Phase::WrongWayDrain) {
        const double floor = kZ21FloorScale * p.m1;
        consider(s.z21 - floor, -d.dz21, Event::Kind::DrainFloor);
    }
    return ev;
}

void settle_event(ExtendedState& s, const ModelParams& p, Event::Kind kind) {
    switch (kind) {
        case Event::Kind::Pool1Full:
            s.z11 = p.m1 - s.z21;
            break;
        case Event::Kind::Pool2Full: {
            // Pin the sum; attribute the correction to the own-class share.
            s.z22 = p.m2 - s.z12;
            if (s.z22 < 0.0) {
                s.z12 = p.m2;
                s.z22 = 0.0;
            }
            break;
        }
        case Event::Kind::Queue1AtShift:
            s.q1 = p.kappa;
            break;
        case Event::Kind::DrainFloor:
            s.z11 = std::min(s.z11 + s.z21, p.m1);
            s.z21 = 0.0;
            break;
        case Event::Kind::None:
            break;
    }
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::string to_string(Phase phase) {
    switch (phase) {
        case Phase::FillingPools: return "FillingPools";
        case Phase::Queue1Growing: return "Queue1Growing";
        case Phase::SharingRampUp: return "SharingRampUp";
        case Phase::InS: return "InS";
        case Phase::WrongWayDrain: return "WrongWayDrain";
    }
    return "?";
}

PsiValue psi(const FluidState& x, const ModelParams& p, double pi12_value) {
    const double keep = p.mu22 * (p.m2 - x.z12);
    const double share = p.mu12 * x.z12;
    const double pool2_flow = share + keep;
    PsiValue v;
    v.dq1 = p.lambda1 - p.m1 * p.mu11 - pi12_value * pool2_flow - p.theta1 * x.q1;
    v.dq2 = p.lambda2 - (1.0 - pi12_value) * pool2_flow - p.theta2 * x.q2;
    v.dz12 = pi12_value * keep - (1.0 - pi12_value) * share;
    return v;
}

EulerStep euler_step(const FluidState& x, const ModelParams& p, double h) {
    check_step_size(x, p, h);
    EulerStep st;
    st.region = classify(x, p);
    st.pi12 = pi12(x, p);
    advance_restricted(x, p, h, st.pi12, st);
    return st;
}

Trajectory solve_ivp(const ExtendedState& x0, const ModelParams& p, const SolveOptions& opts) {
    const ValidationReport vr = validate_params(p);
    if (!vr.ok()) {
        std::string msg = "invalid parameters";
        if (!vr.diagnostics.empty()) msg += ": " + vr.diagnostics.front();
        throw std::invalid_argument(msg);
    }
    if (!(opts.t_end > 0.0) || !(opts.h > 0.0) || opts.t_end < opts.h) {
        throw std::invalid_argument("need 0 < h <= t_end");
    }

    Trajectory traj;
    traj.h = opts.h;
    const double h = opts.h;

    // --- initial-state sanitation -------------------------------------
    ExtendedState cur = x0;
    for (double* v : {&cur.q1, &cur.q2, &cur.z11, &cur.z12, &cur.z22, &cur.z21}) {
        if (!std::isfinite(*v)) throw std::invalid_argument("initial state must be finite");
        if (*v < 0.0) {
            if (*v < -1e-9) {
                traj.diagnostics.push_back("clamped negative initial component " +
                                           format_double(*v));
            }
            *v = 0.0;
        }
    }
    if (cur.z11 + cur.z21 > p.m1 + pool_tol(p.m1) ||
        cur.z12 + cur.z22 > p.m2 + pool_tol(p.m2)) {
        throw std::invalid_argument("initial pool occupancy exceeds capacity");
    }
    cur.z11 = std::min(cur.z11, p.m1 - cur.z21);
    cur.z22 = std::min(cur.z22, p.m2 - cur.z12);
    // Queued fluid cannot coexist with idle capacity: absorb the own-class
    // queue first, then let class-1 overflow past the boundary claim pool-2
    // slack (only while no class-2 work occupies pool 1).
    {
        const double t1 = std::min(cur.q1, p.m1 - cur.z11 - cur.z21);
        cur.q1 -= t1;
        cur.z11 += t1;
        const double t2 = std::min(cur.q2, p.m2 - cur.z12 - cur.z22);
        cur.q2 -= t2;
        cur.z22 += t2;
        if (cur.z21 <= kZ21FloorScale * p.m1) {
            const double spare2 = p.m2 - cur.z12 - cur.z22;
            const double excess = cur.q1 - (p.kappa + p.r() * cur.q2);
            const double a = std::clamp(excess, 0.0, spare2);
            if (a > 0.0) {
                cur.q1 -= a;
                cur.z12 += a;
            }
        }
    }

    const auto n_steps = static_cast<long long>(std::llround(opts.t_end / h));
    bool assumption_checked = false;
    double worst_clamp = 0.0;
    double last_presnap = boundary_distance(cur.restricted(), p);

    for (long long k = 0;; ++k) {
        const double t = static_cast<double>(k) * h;
        const Phase phase = derive_phase(cur, p);

        TrajectorySample sample;
        sample.t = t;
        sample.state = cur;
        sample.phase = phase;
        sample.d_presnap = last_presnap;
        if (phase == Phase::InS) {
            if (!traj.s_entry_time) traj.s_entry_time = t;
            if (!assumption_checked) {
                assumption_checked = true;
                if (!vr.assumption_ok) {
                    throw AssumptionViolatedError(
                        "overload assumption fails: theta1*(qa1 - kappa) = " +
                        format_double(vr.assumption_lhs) + " < mu12*sa2 = " +
                        format_double(vr.assumption_rhs));
                }
            }
            const FluidState x = cur.restricted();
            sample.region = classify(x, p);
            sample.pi12 = pi12(x, p);
            if (!traj.s_entry_sample) traj.s_entry_sample = sample;
        }
        traj.samples.push_back(sample);
        if (k == n_steps) break;

        if (phase == Phase::InS) {
            const FluidState x = cur.restricted();
            check_step_size(x, p, h);
            EulerStep st;
            advance_restricted(x, p, h, *sample.pi12, st);
            if (st.clamp_size > 0.0) worst_clamp = std::max(worst_clamp, st.clamp_size);
            cur.q1 = st.next.q1;
            cur.q2 = st.next.q2;
            cur.z12 = st.next.z12;
            cur.z11 = p.m1;
            cur.z21 = 0.0;
            cur.z22 = p.m2 - st.next.z12;
            last_presnap = st.d_presnap;
            continue;
        }

        // Transient cascade: advance piecewise, pinning each phase-defining
        // residual exactly where it crosses.
        double remaining = h;
        int guard = 0;
        while (remaining > 1e-15 && guard++ < kMaxSubEvents) {
            const Phase sub_phase = derive_phase(cur, p);
            if (sub_phase == Phase::InS) {
                const double elapsed = h - remaining;
                const FluidState x = cur.restricted();
                const double pi = pi12(x, p);
                if (!traj.s_entry_time) {
                    traj.s_entry_time = t + elapsed;
                    TrajectorySample entry;
                    entry.t = t + elapsed;
                    entry.state = cur;
                    entry.phase = Phase::InS;
                    entry.region = classify(x, p);
                    entry.pi12 = pi;
                    entry.d_presnap = boundary_distance(x, p);
                    traj.s_entry_sample = entry;
                }
                EulerStep st;
                advance_restricted(x, p, remaining, pi, st);
                if (st.clamp_size > 0.0) worst_clamp = std::max(worst_clamp, st.clamp_size);
                cur.q1 = st.next.q1;
                cur.q2 = st.next.q2;
                cur.z12 = st.next.z12;
                cur.z11 = p.m1;
                cur.z21 = 0.0;
                cur.z22 = p.m2 - st.next.z12;
                last_presnap = st.d_presnap;
                remaining = 0.0;
                break;
            }
            const TransientDeriv d = transient_derivative(cur, p, sub_phase);
            const Event ev = next_event(cur, p, sub_phase, d, remaining);
            apply_deriv(cur, d, ev.tau);
            settle_event(cur, p, ev.kind);
            remaining -= ev.tau;
            if (ev.kind == Event::Kind::None) break;
        }
        if (derive_phase(cur, p) != Phase::InS) {
            last_presnap = boundary_distance(cur.restricted(), p);
        }
    }

    if (worst_clamp > kClampReportScale * std::max({1.0, p.m2, p.kappa})) {
        traj.diagnostics.push_back("box clamp of size " + format_double(worst_clamp) +
                                   " applied during integration");
    }

    if (!traj.reached_s()) {
        // Only fail hard when the dynamics genuinely cannot reach S. The
        // cascade hands over iff queue 1 can climb to the shift and the
        // class-1 overflow can then soak up pool 2's spare capacity, which
        // is exactly the overload inequality theta1*(qa1 - kappa) >= mu12*sa2.
        // When it holds the run merely stopped short of the handover, and the
        // partial trajectory is the honest answer.
        const ValidationReport vr = validate_params(p);
        if (!vr.assumption_ok) {
            throw NeverReachesSError(
                "trajectory cannot enter the overloaded set: theta1*(qa1 - kappa) = " +
                format_double(vr.assumption_lhs) +
                " < mu12*sa2 = " + format_double(vr.assumption_rhs));
        }
    }
    return traj;
}

std::optional<double> hitting_time(const Trajectory& traj, const ModelParams& p) {
    for (std::size_t i = 0; i < traj.samples.size(); ++i) {
        const TrajectorySample& s = traj.samples[i];
        if (s.phase != Phase::InS || !s.region || s.region->tag != RegionTag::Boundary) continue;
        if (i == 0) return s.t;
        const TrajectorySample& prev = traj.samples[i - 1];
        if (prev.phase != Phase::InS) {
            // Entered S at the boundary mid-step; the handover time is exact.
            return traj.s_entry_time.value_or(s.t);
        }
        const double d0 = boundary_distance(prev.state.restricted(), p);
        const double d1 = s.d_presnap;
        const double denom = d0 - d1;
        double frac = denom != 0.0 ? d0 / denom : 1.0;
        frac = std::clamp(frac, 0.0, 1.0);
        return prev.t + frac * (s.t - prev.t);
    }
    return std::nullopt;
}

std::optional<ExpFit> fit_exponential_rate(const Trajectory& traj, const FluidState& x_star,
                                           double t_from) {
    std::vector<std::pair<double, double>> pts;
    double floor = -1.0;
    for (const TrajectorySample& s : traj.samples) {
        if (s.phase != Phase::InS || s.t < t_from) continue;
        const FluidState x = s.state.restricted();
        const double dist = std::abs(x.q1 - x_star.q1) + std::abs(x.q2 - x_star.q2) +
                            std::abs(x.z12 - x_star.z12);
        if (floor < 0.0) floor = std::max(1e-9, 1e-6 * dist);
        if (dist < floor) break;  // numerical plateau: stop collecting
        pts.emplace_back(s.t, std::log(dist));
    }
    if (pts.size() < 5) return std::nullopt;
    double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0, syy = 0.0;
    for (const auto& [t, y] : pts) {
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
        syy += y * y;
    }
    const auto n = static_cast<double>(pts.size());
    const double vt = stt - st * st / n;
    const double vy = syy - sy * sy / n;
    const double cov = sty - st * sy / n;
    if (vt <= 0.0) return std::nullopt;
    ExpFit fit;
    fit.beta = -cov / vt;
    fit.r_squared = vy > 0.0 ? (cov * cov) / (vt * vy) : 1.0;
    fit.points = static_cast<int>(pts.size());
    return fit;
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& os) {
    os << "t,q1,q2,z11,z12,z22,z21,pi12,region,phase\n";
    for (const TrajectorySample& s : traj.samples) {
        os << format_double(s.t) << ',' << format_double(s.state.q1) << ','
           << format_double(s.state.q2) << ',' << format_double(s.state.z11) << ','
           << format_double(s.state.z12) << ',' << format_double(s.state.z22) << ','
           << format_double(s.state.z21) << ',';
        if (s.pi12) os << format_double(*s.pi12);
        os << ',';
        if (s.region) os << to_string(*s.region);
        os << ',' << to_string(s.phase) << '\n';
    }
}

std::string trajectory_csv(const Trajectory& traj) {
    std::ostringstream os;
    write_trajectory_csv(traj, os);
    return os.str();
}

}  // namespace fqrt
