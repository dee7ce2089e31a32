#pragma once

// Fast-time-scale queue-difference process and its steady state.
//
// At a fixed fluid state x, the scaled queue difference k*q1 - j*q2 (shifted
// by the boundary offset) moves on the integer lattice with jumps of +-j and
// +-k whose rates switch at zero. Folding the lattice into levels of m =
// max(j, k) consecutive positive and nonpositive states gives a level-
// homogeneous quasi-birth-death generator with 2m phases; its stationary
// probability of the positive half is the sharing weight pi12 used by the
// fluid dynamics on the boundary.

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

#include "fqrt/model.hpp"

namespace fqrt {

struct QbdError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Logarithmic reduction failed to reach tolerance within the iteration cap.
struct NonConvergentError : QbdError {
    using QbdError::QbdError;
};
// Boundary balance system has no usable one-dimensional solution.
struct SingularBoundaryError : QbdError {
    using QbdError::QbdError;
};
struct NotPositiveRecurrentError : QbdError {
    using QbdError::QbdError;
};
// Truncated-generator cross-check: probability mass has not decayed enough
// at the configured truncation depth to certify the requested accuracy.
struct TruncationInsufficientError : QbdError {
    using QbdError::QbdError;
};

// Jump rates of the difference process, by jump size (j or k) and by the
// sign regime (+: difference positive, -: at or below zero).
struct FtspRates {
    double lam_j_plus = 0.0;
    double lam_k_plus = 0.0;
    double mu_j_plus = 0.0;
    double mu_k_plus = 0.0;
    double lam_j_minus = 0.0;
    double lam_k_minus = 0.0;
    double mu_j_minus = 0.0;
    double mu_k_minus = 0.0;

    [[nodiscard]] double sigma_plus() const {
        return lam_j_plus + lam_k_plus + mu_j_plus + mu_k_plus;
    }
    [[nodiscard]] double sigma_minus() const {
        return lam_j_minus + lam_k_minus + mu_j_minus + mu_k_minus;
    }
};

// Rates at fluid state x with pool 1 fully busy on class-1 work
// (service flow mu11*m1).
[[nodiscard]] FtspRates ftsp_rates(const FluidState& x, const ModelParams& p);

// Same with an explicit pool-1 completion flow, for states where part of
// pool 1 is still working off class-2 customers.
[[nodiscard]] FtspRates ftsp_rates_with_pool1_flow(const FluidState& x, const ModelParams& p,
                                                   double pool1_flow);

// Mean drifts implied by a rate set.
[[nodiscard]] DriftPair drift_of(const FtspRates& rates, int j, int k);

// Generator blocks: B acts within the boundary level (which holds states
// 1..m and 0..-(m-1)), A0/A1/A2 move up/within/down between the repeating
// levels further out. All are 2m x 2m, block-diagonal in the +/- halves
// except for the crossing terms inside B.
struct QbdBlocks {
    int j = 1;
    int k = 1;
    int m = 1;
    Eigen::MatrixXd B;
    Eigen::MatrixXd A0;
    Eigen::MatrixXd A1;
    Eigen::MatrixXd A2;
};

[[nodiscard]] QbdBlocks build_blocks(const FtspRates& rates, int j, int k);

enum class Recurrence : std::uint8_t {
    PositiveRecurrent,
    NullOrTransientUp,    // drift above zero is nonnegative: difference escapes upward
    NullOrTransientDown,  // drift at/below zero is nonpositive: escapes downward
};

// Sign route: classify directly from the mean drifts.
[[nodiscard]] Recurrence recurrence_check(const DriftPair& d);
// Matrix route: uniform test vector against the assembled up/down blocks
// of each half; independent cross-check of the sign route.
[[nodiscard]] Recurrence recurrence_check(const QbdBlocks& b);

struct QbdSolution {
    Recurrence recurrence = Recurrence::PositiveRecurrent;
    Eigen::MatrixXd G;          // first-passage probabilities one level down
    Eigen::MatrixXd R;          // expected sojourn ratio matrix, sp(R) < 1
    Eigen::MatrixXd U;          // within-level taboo generator A1 + A0*G
    Eigen::RowVectorXd alpha0;  // boundary-level weights, alpha0*(I-R)^{-1}*1 = 1
    double pi12 = 0.0;          // stationary mass of the positive half
    double spectral_radius_R = 0.0;
    int lr_iterations = 0;
    double g_residual = 0.0;  // ||1 - G*1||_inf at termination
};

// Matrix-geometric solve via logarithmic reduction on the uniformized
// blocks; boundary weights from the left null space of B + R*A2.
[[nodiscard]] QbdSolution solve_qbd(const QbdBlocks& b);

// Birth-death closed form, valid when r = 1 (j == k): the positive-side
// occupancy is delta_minus / (delta_minus - delta_plus).
[[nodiscard]] double pi12_bd_closed_form(const DriftPair& d);

// Total sharing-weight map: 1 on SPlus, 0 on SMinus, drift-side limits on
// the non-recurrent boundary subsets, closed form when r = 1, QBD solve
// otherwise. Near-degenerate drifts short-circuit to the limiting value.
[[nodiscard]] double pi12(const FluidState& x, const ModelParams& p);

// Independent oracle: build the generator truncated at `level_cap` levels
// (top level made reflecting), solve the global balance equations sparsely,
// and sum the positive-half mass. Throws TruncationInsufficientError when
// the two outermost levels still hold more than `tail_tol` mass.
[[nodiscard]] double truncated_oracle_pi12(const FluidState& x, const ModelParams& p,
                                           int level_cap = 200, double tail_tol = 1e-8);

[[nodiscard]] double spectral_radius(const Eigen::MatrixXd& a);

// Assembled blocks as JSON (matrices as row-major nested arrays keyed
// "B", "A0", "A1", "A2") for debugging and golden-layout tests.
[[nodiscard]] std::string dump_qbd_json(const QbdBlocks& b);

}  // namespace fqrt
