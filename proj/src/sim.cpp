#include "fqrt/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <sstream>

namespace fqrt {

namespace {

enum class SharingMode : std::uint8_t { None, Pool2HelpsClass1, Pool1HelpsClass2 };

// One uniform in (0,1) from the top 53 bits; the half-bit offset keeps the
// draw away from 0 so exponential times are finite. Drawing bits directly
// pins the event sequence to the seed across standard libraries.
double uniform_open(std::mt19937_64& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

struct Chain {
    const ModelParams& p;
    long long n1, n2;            // pool sizes in servers
    long long k12, k21, kappa_n; // thresholds and queue-1 shift, in counts
    long long jj, kk;            // ratio r = jj/kk

    long long Q1 = 0, Q2 = 0;
    long long Z11 = 0, Z12 = 0, Z21 = 0, Z22 = 0;
    SharingMode mode = SharingMode::None;

    [[nodiscard]] long long d_int() const { return kk * (Q1 - kappa_n) - jj * Q2; }
    [[nodiscard]] long long rev_d_int() const { return jj * Q2 - kk * Q1; }
    [[nodiscard]] long long idle1() const { return n1 - Z11 - Z21; }
    [[nodiscard]] long long idle2() const { return n2 - Z12 - Z22; }

    void check_invariants() const {
        const bool ok = Q1 >= 0 && Q2 >= 0 && Z11 >= 0 && Z12 >= 0 && Z21 >= 0 && Z22 >= 0 &&
                        Z11 + Z21 <= n1 && Z12 + Z22 <= n2 && (Z12 == 0 || Z21 == 0);
        if (!ok) {
            throw std::logic_error("simulator state invariant violated");
        }
    }

    // Re-evaluate the control and drain idle capacity until nothing moves:
    // own queues fill own pools first; while sharing is active a free pool-2
    // agent takes the head of queue 1 exactly when D > 0 (symmetrically for
    // the reverse direction). Covers both newly-free-agent routing and
    // arrivals that find idle agents.
    void settle() {
        // Threshold reinstatement happens before any routing decision.
        if (mode == SharingMode::Pool2HelpsClass1 &&
            (Q1 == 0 || rev_d_int() >= kk * k21)) {
            mode = SharingMode::None;
        }
        if (mode == SharingMode::Pool1HelpsClass2 &&
            (Q2 == 0 || d_int() >= kk * k12)) {
            mode = SharingMode::None;
        }
        if (mode == SharingMode::None) {
            if (Z21 == 0 && d_int() > kk * k12) {
                mode = SharingMode::Pool2HelpsClass1;
            } else if (Z12 == 0 && rev_d_int() > kk * k21) {
                mode = SharingMode::Pool1HelpsClass2;
            }
        }
        bool moved = true;
        while (moved) {
            moved = false;
            if (idle1() > 0 && Q1 > 0) {
                --Q1;
                ++Z11;
                moved = true;
            } else if (idle2() > 0) {
                if (mode == SharingMode::Pool2HelpsClass1 && d_int() > 0 && Q1 > 0) {
                    --Q1;
                    ++Z12;
                    moved = true;
                } else if (Q2 > 0) {
                    --Q2;
                    ++Z22;
                    moved = true;
                }
            } else if (idle1() > 0 && mode == SharingMode::Pool1HelpsClass2 &&
                       rev_d_int() > 0 && Q2 > 0) {
                --Q2;
                ++Z21;
                moved = true;
            }
            if (moved && mode == SharingMode::Pool2HelpsClass1 && Q1 == 0) {
                mode = SharingMode::None;
            }
            if (moved && mode == SharingMode::Pool1HelpsClass2 && Q2 == 0) {
                mode = SharingMode::None;
            }
        }
    }
};

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

SimConfig resolved_sim_config(const SimConfig& cfg) {
    const ModelParams& p = cfg.params;
    if (cfg.n < 1) throw std::invalid_argument("scale factor n must be >= 1");
    if (!(cfg.t_end > 0.0) || !(cfg.sample_dt > 0.0)) {
        throw std::invalid_argument("need positive t_end and sample_dt");
    }
    if (p.lambda1 < 0.0 || p.lambda2 < 0.0 || p.theta1 < 0.0 || p.theta2 < 0.0 ||
        p.mu11 <= 0.0 || p.mu12 <= 0.0 || p.mu21 <= 0.0 || p.mu22 <= 0.0 || p.m1 <= 0.0 ||
        p.m2 <= 0.0 || p.kappa < 0.0 || p.j < 1 || p.k < 1 || !(cfg.threshold_c > 0.0)) {
        throw std::invalid_argument("simulator configuration is invalid");
    }
    if ((cfg.k12 && *cfg.k12 < 0) || (cfg.k21 && *cfg.k21 < 0) ||
        (cfg.kappa_n && *cfg.kappa_n < 0)) {
        throw std::invalid_argument("thresholds and kappa_n must be nonnegative");
    }
    SimConfig out = cfg;
    const auto default_threshold = static_cast<long long>(
        std::ceil(cfg.threshold_c * std::pow(static_cast<double>(cfg.n), 0.6)));
    out.k12 = cfg.k12.value_or(default_threshold);
    out.k21 = cfg.k21.value_or(default_threshold);
    out.kappa_n = cfg.kappa_n.value_or(std::llround(cfg.n * p.kappa));
    return out;
}

SimPath simulate(const SimConfig& cfg) {
    const ModelParams& p = cfg.params;
    SimPath path;
    path.cfg = resolved_sim_config(cfg);
    path.n_servers1 = std::llround(cfg.n * p.m1);
    path.n_servers2 = std::llround(cfg.n * p.m2);

    Chain c{p,
            path.n_servers1,
            path.n_servers2,
            *path.cfg.k12,
            *path.cfg.k21,
            *path.cfg.kappa_n,
            static_cast<long long>(p.j),
            static_cast<long long>(p.k)};

    std::mt19937_64 rng(cfg.seed);
    const double L1 = cfg.n * p.lambda1;
    const double L2 = cfg.n * p.lambda2;
    const double inv_n = 1.0 / cfg.n;

    const auto n_samples = static_cast<long long>(std::floor(cfg.t_end / cfg.sample_dt)) + 1;
    path.samples.reserve(static_cast<std::size_t>(n_samples));
    path.queue_trace.push_back({0.0, c.d_int(), c.Q1, c.Q2});

    double t = 0.0;
    long long next_sample = 0;
    const auto emit_until = [&](double horizon) {
        while (next_sample < n_samples &&
               static_cast<double>(next_sample) * cfg.sample_dt <= horizon) {
            SimSample s;
            s.t = static_cast<double>(next_sample) * cfg.sample_dt;
            s.q1 = static_cast<double>(c.Q1) * inv_n;
            s.q2 = static_cast<double>(c.Q2) * inv_n;
            s.z11 = static_cast<double>(c.Z11) * inv_n;
            s.z12 = static_cast<double>(c.Z12) * inv_n;
            s.z21 = static_cast<double>(c.Z21) * inv_n;
            s.z22 = static_cast<double>(c.Z22) * inv_n;
            s.d = static_cast<double>(c.d_int()) / static_cast<double>(c.kk);
            path.samples.push_back(s);
            ++next_sample;
        }
    };

    while (true) {
        const double rate_s11 = c.Z11 * p.mu11;
        const double rate_s12 = c.Z12 * p.mu12;
        const double rate_s21 = c.Z21 * p.mu21;
        const double rate_s22 = c.Z22 * p.mu22;
        const double rate_a1 = c.Q1 * p.theta1;
        const double rate_a2 = c.Q2 * p.theta2;
        const double total =
            L1 + L2 + rate_s11 + rate_s12 + rate_s21 + rate_s22 + rate_a1 + rate_a2;
        if (total <= 0.0) {
            // Absorbing empty system (possible only with zero arrival rates).
            emit_until(cfg.t_end);
            break;
        }
        const double dt = -std::log(uniform_open(rng)) / total;
        if (t + dt > cfg.t_end) {
            emit_until(cfg.t_end);
            break;
        }
        t += dt;
        emit_until(std::nexttoward(t, 0.0L));

        const long long q1_before = c.Q1;
        const long long q2_before = c.Q2;

        double pick = uniform_open(rng) * total;
        if ((pick -= L1) < 0.0) {
            ++c.Q1;
        } else if ((pick -= L2) < 0.0) {
            ++c.Q2;
        } else if ((pick -= rate_s11) < 0.0) {
            --c.Z11;
        } else if ((pick -= rate_s12) < 0.0) {
            --c.Z12;
        } else if ((pick -= rate_s21) < 0.0) {
            --c.Z21;
        } else if ((pick -= rate_s22) < 0.0) {
            --c.Z22;
        } else if ((pick -= rate_a1) < 0.0) {
            --c.Q1;
        } else {
            --c.Q2;
        }
        c.settle();
        if (cfg.audit) c.check_invariants();
        ++path.total_events;

        if (c.Q1 != q1_before || c.Q2 != q2_before) {
            path.queue_trace.push_back({t, c.d_int(), c.Q1, c.Q2});
        }
    }
    return path;
}

DiffStats difference_process_stats(const SimPath& path, double w_begin, double w_end) {
    const double horizon = path.cfg.t_end;
    if (!(w_begin >= 0.0) || !(w_end <= horizon) || !(w_begin < w_end)) {
        throw std::invalid_argument("stats window must lie inside the simulated horizon");
    }
    DiffStats stats;
    double time_positive = 0.0;
    double ratio_weighted = 0.0;
    double ratio_time = 0.0;

    const auto& trace = path.queue_trace;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const double seg_begin = trace[i].t;
        const double seg_end = i + 1 < trace.size() ? trace[i + 1].t : horizon;
        if (trace[i].t > w_begin && trace[i].t <= w_end && i > 0) ++stats.transitions;
        const double lo = std::max(seg_begin, w_begin);
        const double hi = std::min(seg_end, w_end);
        if (hi <= lo) continue;
        const double len = hi - lo;
        if (trace[i].d_int > 0) time_positive += len;
        if (trace[i].q2 > 0) {
            ratio_weighted +=
                len * static_cast<double>(trace[i].q1) / static_cast<double>(trace[i].q2);
            ratio_time += len;
        }
    }
    if (stats.transitions < 10000) {
        throw WindowTooShortError("only " + std::to_string(stats.transitions) +
                                  " difference-process transitions in the window; need 10^4");
    }
    stats.frac_d_positive = time_positive / (w_end - w_begin);
    stats.mean_queue_ratio = ratio_time > 0.0 ? ratio_weighted / ratio_time : 0.0;
    return stats;
}

void write_sim_csv(const SimPath& path, std::ostream& os) {
    os << "t,Q1,Q2,Z11,Z12,Z21,Z22,D\n";
    for (const SimSample& s : path.samples) {
        os << format_double(s.t) << ',' << format_double(s.q1) << ',' << format_double(s.q2)
           << ',' << format_double(s.z11) << ',' << format_double(s.z12) << ','
           << format_double(s.z21) << ',' << format_double(s.z22) << ',' << format_double(s.d)
           << '\n';
    }
}

std::string sim_csv(const SimPath& path) {
    std::ostringstream os;
    write_sim_csv(path, os);
    return os.str();
}

}  // namespace fqrt
