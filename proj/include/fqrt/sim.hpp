#pragma once

// Exact-jump simulation of the scale-n Markovian X model under the shifted
// queue-ratio control with one-way sharing. The integer-count chain is
// advanced event by event (competing exponentials, one categorical draw per
// event); paths are reported on a uniform grid in fluid scale, and the
// difference process D = (Q1 - kappa_n) - r*Q2 is traced at every queue
// change so its time statistics can be computed exactly.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fqrt/model.hpp"

namespace fqrt {

struct WindowTooShortError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimConfig {
    ModelParams params;  // fluid-scale rates; the simulator multiplies by n
    int n = 1000;
    // Sharing thresholds in customer counts; defaults are ceil(c * n^0.6),
    // growing faster than sqrt(n) and slower than n.
    std::optional<long long> k12;
    std::optional<long long> k21;
    double threshold_c = 1.0;
    std::optional<long long> kappa_n;  // default round(n * kappa)
    std::uint64_t seed = 1;
    double t_end = 50.0;
    double sample_dt = 0.1;
    bool audit = false;  // verify count invariants after every event
};

// Scaled snapshot on the sampling grid. d is the unscaled difference
// process (Q1 - kappa_n) - r*Q2 at the sample time.
struct SimSample {
    double t = 0.0;
    double q1 = 0.0, q2 = 0.0;
    double z11 = 0.0, z12 = 0.0, z21 = 0.0, z22 = 0.0;
    double d = 0.0;
};

// Step of the piecewise-constant queue trace: holds from t until the next
// entry. d_int = k*(Q1 - kappa_n) - j*Q2 has the sign of D.
struct QueueTracePoint {
    double t = 0.0;
    long long d_int = 0;
    long long q1 = 0;
    long long q2 = 0;
};

struct SimPath {
    // Resolved configuration (thresholds and kappa_n filled in).
    SimConfig cfg;
    long long n_servers1 = 0;
    long long n_servers2 = 0;
    std::vector<SimSample> samples;
    std::vector<QueueTracePoint> queue_trace;
    long long total_events = 0;
};

// Validate and fill in defaulted thresholds and the queue-1 shift.
[[nodiscard]] SimConfig resolved_sim_config(const SimConfig& cfg);

// Run the chain from the empty state until t_end.
[[nodiscard]] SimPath simulate(const SimConfig& cfg);

struct DiffStats {
    double frac_d_positive = 0.0;  // time fraction of {D > 0} in the window
    double mean_queue_ratio = 0.0; // time-averaged Q1/Q2 where Q2 > 0
    long long transitions = 0;     // queue-trace changes inside the window
};

// Time statistics of the difference process over [w_begin, w_end]. Throws
// WindowTooShortError when the window holds fewer than 10^4 transitions.
[[nodiscard]] DiffStats difference_process_stats(const SimPath& path, double w_begin,
                                                 double w_end);

// CSV columns: t,Q1,Q2,Z11,Z12,Z21,Z22,D (state scaled by n, D unscaled).
void write_sim_csv(const SimPath& path, std::ostream& os);
[[nodiscard]] std::string sim_csv(const SimPath& path);

}  // namespace fqrt
