#include "fqrt/qbd.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <vector>

#include <json.hpp>

namespace fqrt {

namespace {

constexpr int kLrMaxIterations = 60;
constexpr double kLrTolerance = 1e-12;
constexpr double kResidualScale = 1e-10;
// Below this ratio of the smaller drift magnitude to the drift gap, the
// stationary split is 0/1 to beyond round-off and the solve is skipped.
constexpr double kDegenerateDriftRatio = 1e-10;

double ones_residual(const Eigen::MatrixXd& g) {
    return (Eigen::VectorXd::Ones(g.rows()) - g * Eigen::VectorXd::Ones(g.cols()))
        .lpNorm<Eigen::Infinity>();
}

// Logarithmic reduction for the minimal first-passage matrix of one
// uniformized half (t0 up, t1 within, t2 down). Quadratically convergent.
Eigen::MatrixXd lr_minimal_g(const Eigen::MatrixXd& t0, const Eigen::MatrixXd& t1,
                             const Eigen::MatrixXd& t2, int& iterations, double& residual) {
    const int m = static_cast<int>(t0.rows());
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m, m);

    Eigen::PartialPivLU<Eigen::MatrixXd> head(eye - t1);
    Eigen::MatrixXd up = head.solve(t0);
    Eigen::MatrixXd dn = head.solve(t2);
    Eigen::MatrixXd g = dn;
    Eigen::MatrixXd carry = up;

    residual = ones_residual(g);
    iterations = 0;
    while (residual > kLrTolerance && iterations < kLrMaxIterations) {
        const Eigen::MatrixXd cross = up * dn + dn * up;
        const Eigen::MatrixXd up_sq = up * up;
        const Eigen::MatrixXd dn_sq = dn * dn;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(eye - cross);
        up = lu.solve(up_sq);
        dn = lu.solve(dn_sq);
        g += carry * dn;
        carry *= up;
        ++iterations;
        residual = ones_residual(g);
    }
    if (residual > kLrTolerance) {
        throw NonConvergentError(
            "logarithmic reduction did not converge; the drift conditions "
            "delta_minus > 0 > delta_plus are likely violated or near-degenerate");
    }
    return g;
}

// R = A0 * (-U)^{-1}, computed as a linear solve from the right.
Eigen::MatrixXd sojourn_ratio(const Eigen::MatrixXd& a0, const Eigen::MatrixXd& u) {
    const Eigen::MatrixXd neg_u_t = (-u).transpose();
    return neg_u_t.partialPivLu().solve(a0.transpose()).transpose();
}

Recurrence recurrence_from(double up_mass, double down_mass, double up_mass_neg,
                           double down_mass_neg) {
    // Positive recurrence needs the downward pull to win strictly on both
    // halves: up < down on the positive half, and (since "up" on the
    // negative half means deeper) up < down there as well.
    const double gap = (down_mass - up_mass) + (down_mass_neg - up_mass_neg);
    const double tol = kDriftTolScale * std::max(std::abs(gap), 1e-300);
    if (down_mass - up_mass > tol && down_mass_neg - up_mass_neg > tol) {
        return Recurrence::PositiveRecurrent;
    }
    if (up_mass >= down_mass - tol) return Recurrence::NullOrTransientUp;
    return Recurrence::NullOrTransientDown;
}

}  // namespace

FtspRates ftsp_rates_with_pool1_flow(const FluidState& x, const ModelParams& p,
                                     double pool1_flow) {
    const double pool2_flow = p.mu12 * x.z12 + p.mu22 * (p.m2 - x.z12);
    FtspRates r;
    r.lam_k_plus = p.lambda1;
    r.lam_j_plus = p.theta2 * x.q2;
    r.mu_k_plus = pool1_flow + pool2_flow + p.theta1 * x.q1;
    r.mu_j_plus = p.lambda2;
    r.lam_k_minus = p.lambda1;
    r.lam_j_minus = pool2_flow + p.theta2 * x.q2;
    r.mu_k_minus = pool1_flow + p.theta1 * x.q1;
    r.mu_j_minus = p.lambda2;
    return r;
}

FtspRates ftsp_rates(const FluidState& x, const ModelParams& p) {
    return ftsp_rates_with_pool1_flow(x, p, p.mu11 * p.m1);
}

DriftPair drift_of(const FtspRates& r, int j, int k) {
    const double jd = j;
    const double kd = k;
    DriftPair d;
    d.delta_plus = jd * (r.lam_j_plus - r.mu_j_plus) + kd * (r.lam_k_plus - r.mu_k_plus);
    d.delta_minus = jd * (r.lam_j_minus - r.mu_j_minus) + kd * (r.lam_k_minus - r.mu_k_minus);
    return d;
}

QbdBlocks build_blocks(const FtspRates& rates, int j, int k) {
    if (j < 1 || k < 1) throw std::invalid_argument("ratio integers must be >= 1");
    const int m = std::max(j, k);
    const int n = 2 * m;
    QbdBlocks b;
    b.j = j;
    b.k = k;
    b.m = m;
    b.A0 = Eigen::MatrixXd::Zero(n, n);
    b.A1 = Eigen::MatrixXd::Zero(n, n);
    b.A2 = Eigen::MatrixXd::Zero(n, n);
    b.B = Eigen::MatrixXd::Zero(n, n);

    struct Step {
        int s;
        double lam;
        double mu;
    };
    const Step plus_steps[2] = {{j, rates.lam_j_plus, rates.mu_j_plus},
                                {k, rates.lam_k_plus, rates.mu_k_plus}};
    const Step minus_steps[2] = {{j, rates.lam_j_minus, rates.mu_j_minus},
                                 {k, rates.lam_k_minus, rates.mu_k_minus}};

    // Phase i (1-based) of a level holds positive state (level)*m + i in the
    // first half and nonpositive state -((level)*m + i - 1) in the second.
    // Entries accumulate so that equal jump sizes (j == k) fold correctly.
    for (int i = 1; i <= m; ++i) {
        b.A1(i - 1, i - 1) = -rates.sigma_plus();
        b.A1(m + i - 1, m + i - 1) = -rates.sigma_minus();

        for (const Step& st : plus_steps) {
            const int up = i + st.s;  // +s keeps the sign: same or next level
            if (up <= m) {
                b.A1(i - 1, up - 1) += st.lam;
            } else {
                b.A0(i - 1, up - m - 1) += st.lam;
            }
            const int down = i - st.s;  // -s: within level, level below, or across zero
            if (down >= 1) {
                b.A1(i - 1, down - 1) += st.mu;
            } else {
                b.A2(i - 1, down + m - 1) += st.mu;
                b.B(i - 1, m + st.s - i) += st.mu;  // lands on state i - s <= 0
            }
        }
        for (const Step& st : minus_steps) {
            const int deeper = i + st.s;  // -s jump: farther below zero
            if (deeper <= m) {
                b.A1(m + i - 1, m + deeper - 1) += st.mu;
            } else {
                b.A0(m + i - 1, deeper - m - 1 + m) += st.mu;
            }
            const int toward = i - st.s;  // +s jump: toward or across zero
            if (toward >= 1) {
                b.A1(m + i - 1, m + toward - 1) += st.lam;
            } else {
                b.A2(m + i - 1, m + toward + m - 1) += st.lam;
                b.B(m + i - 1, st.s - i) += st.lam;  // lands on state s - i + 1 >= 1
            }
        }
    }
    // The boundary level keeps the within-level structure; only the jumps
    // that cross zero differ, and those were accumulated above.
    b.B += b.A1;
    return b;
}

Recurrence recurrence_check(const DriftPair& d) {
    const double gap = d.delta_minus - d.delta_plus;
    const double tol = kDriftTolScale * std::max(gap, 1e-300);
    if (d.delta_minus > tol && d.delta_plus < -tol) return Recurrence::PositiveRecurrent;
    if (d.delta_plus >= -tol) return Recurrence::NullOrTransientUp;
    return Recurrence::NullOrTransientDown;
}

Recurrence recurrence_check(const QbdBlocks& b) {
    const int m = b.m;
    // Uniform test vector: mean level motion reduces to total block mass.
    const double up_pos = b.A0.topLeftCorner(m, m).sum();
    const double down_pos = b.A2.topLeftCorner(m, m).sum();
    const double up_neg = b.A0.bottomRightCorner(m, m).sum();
    const double down_neg = b.A2.bottomRightCorner(m, m).sum();
    return recurrence_from(up_pos, down_pos, up_neg, down_neg);
}

double spectral_radius(const Eigen::MatrixXd& a) {
    return Eigen::EigenSolver<Eigen::MatrixXd>(a, false).eigenvalues().cwiseAbs().maxCoeff();
}

QbdSolution solve_qbd(const QbdBlocks& b) {
    const int m = b.m;
    const int n = 2 * m;

    QbdSolution sol;
    sol.recurrence = recurrence_check(b);
    if (sol.recurrence != Recurrence::PositiveRecurrent) {
        throw NotPositiveRecurrentError(
            "QBD solve requires delta_minus > 0 > delta_plus; use the limiting 0/1 value");
    }

    // Uniformize both halves with the same constant so the embedded chain
    // shares one time scale; G and R are invariant under this rescaling.
    const double c = b.A1.diagonal().cwiseAbs().maxCoeff();
    const Eigen::MatrixXd eye_m = Eigen::MatrixXd::Identity(m, m);

    sol.G = Eigen::MatrixXd::Zero(n, n);
    sol.U = Eigen::MatrixXd::Zero(n, n);
    sol.R = Eigen::MatrixXd::Zero(n, n);
    sol.lr_iterations = 0;
    sol.g_residual = 0.0;

    for (int half = 0; half < 2; ++half) {
        const int off = half * m;
        const Eigen::MatrixXd a0 = b.A0.block(off, off, m, m);
        const Eigen::MatrixXd a1 = b.A1.block(off, off, m, m);
        const Eigen::MatrixXd a2 = b.A2.block(off, off, m, m);

        int iters = 0;
        double resid = 0.0;
        const Eigen::MatrixXd g =
            lr_minimal_g(a0 / c, a1 / c + eye_m, a2 / c, iters, resid);
        const Eigen::MatrixXd u = a1 + a0 * g;
        const Eigen::MatrixXd r = sojourn_ratio(a0, u);

        sol.G.block(off, off, m, m) = g;
        sol.U.block(off, off, m, m) = u;
        sol.R.block(off, off, m, m) = r;
        sol.lr_iterations = std::max(sol.lr_iterations, iters);
        sol.g_residual = std::max(sol.g_residual, resid);

        // Defining equations, checked against the strongest block scale.
        const double scale = a1.lpNorm<Eigen::Infinity>();
        const double g_eq = (a2 + a1 * g + a0 * g * g).lpNorm<Eigen::Infinity>();
        const double r_eq = (a0 + r * a1 + r * r * a2).lpNorm<Eigen::Infinity>();
        if (g_eq > kResidualScale * scale || r_eq > kResidualScale * scale) {
            throw NonConvergentError(
                "matrix-quadratic residual above tolerance after logarithmic reduction; "
                "drift conditions delta_minus > 0 > delta_plus may be nearly degenerate");
        }
    }

    sol.spectral_radius_R = std::max(spectral_radius(sol.R.topLeftCorner(m, m)),
                                     spectral_radius(sol.R.bottomRightCorner(m, m)));

    // Boundary weights: left null vector of B + R*A2, taken from a
    // rank-revealing factorization.
    const Eigen::MatrixXd bound = b.B + sol.R * b.A2;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(bound.transpose());
    Eigen::RowVectorXd alpha;
    if (lu.dimensionOfKernel() >= 1) {
        const Eigen::MatrixXd ker = lu.kernel();
        // With a reducible lattice (non-coprime j, k) the kernel splits by
        // residue class; any combination with nonzero total weight yields
        // the same positive-half mass. Pick the best-conditioned column.
        int best = 0;
        double best_sum = 0.0;
        for (int col = 0; col < ker.cols(); ++col) {
            const double s = std::abs(ker.col(col).sum()) / ker.col(col).cwiseAbs().maxCoeff();
            if (s > best_sum) {
                best_sum = s;
                best = col;
            }
        }
        alpha = ker.col(best).transpose();
    } else {
        // Numerically full-rank at the default threshold: pin the redundant
        // balance equation and solve directly.
        Eigen::MatrixXd pinned = bound;
        pinned.col(0) = Eigen::VectorXd::Ones(n);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
        rhs(0) = 1.0;
        alpha = pinned.transpose().fullPivLu().solve(rhs).transpose();
    }

    const double alpha_scale = alpha.cwiseAbs().maxCoeff();
    if (!(alpha_scale > 0.0) ||
        (alpha * bound).lpNorm<Eigen::Infinity>() >
            1e-8 * alpha_scale * bound.lpNorm<Eigen::Infinity>()) {
        throw SingularBoundaryError("boundary balance vector could not be resolved");
    }

    // Normalize by total mass alpha0 * (I - R)^{-1} * 1 = 1.
    Eigen::PartialPivLU<Eigen::MatrixXd> geo((Eigen::MatrixXd::Identity(n, n) - sol.R));
    const Eigen::VectorXd total_w = geo.solve(Eigen::VectorXd::Ones(n));
    const double mass = alpha.dot(total_w);
    if (std::abs(mass) < 1e-14 * alpha_scale * total_w.cwiseAbs().maxCoeff() * n) {
        throw SingularBoundaryError("boundary vector has vanishing total mass");
    }
    alpha /= mass;
    sol.alpha0 = alpha;

    Eigen::VectorXd plus_ind = Eigen::VectorXd::Zero(n);
    plus_ind.head(m).setOnes();
    sol.pi12 = std::clamp(alpha.dot(geo.solve(plus_ind)), 0.0, 1.0);
    return sol;
}

double pi12_bd_closed_form(const DriftPair& d) {
    return d.delta_minus / (d.delta_minus - d.delta_plus);
}

double pi12(const FluidState& x, const ModelParams& p) {
    const Region region = classify(x, p);
    switch (region.tag) {
        case RegionTag::SPlus:
            return 1.0;
        case RegionTag::SMinus:
            return 0.0;
        case RegionTag::Boundary:
            break;
    }
    switch (region.sub) {
        case BoundarySub::APlusStrict:
        case BoundarySub::APlusZero:
            return 1.0;
        case BoundarySub::AMinusStrict:
        case BoundarySub::AMinusZero:
            return 0.0;
        case BoundarySub::A:
            break;
    }

    const DriftPair d = drift_pair(x, p);
    const double gap = d.delta_minus - d.delta_plus;
    if (std::min(std::abs(d.delta_plus), d.delta_minus) < kDegenerateDriftRatio * gap) {
        return std::abs(d.delta_plus) <= d.delta_minus ? 1.0 : 0.0;
    }
    if (p.j == p.k) {
        return pi12_bd_closed_form(d);
    }
    const QbdBlocks blocks = build_blocks(ftsp_rates(x, p), p.j, p.k);
    return solve_qbd(blocks).pi12;
}

double truncated_oracle_pi12(const FluidState& x, const ModelParams& p, int level_cap,
                             double tail_tol) {
    if (level_cap < 2) throw std::invalid_argument("level_cap must be >= 2");
    const DriftPair d = drift_pair(x, p);
    if (recurrence_check(d) != Recurrence::PositiveRecurrent) {
        throw NotPositiveRecurrentError("truncated oracle requires a positive recurrent state");
    }

    const QbdBlocks b = build_blocks(ftsp_rates(x, p), p.j, p.k);
    const int n = 2 * b.m;
    const int levels = level_cap + 1;
    const int dim = levels * n;

    // Assemble the transposed generator with the first balance equation
    // replaced by normalization; the top level reflects its upward flow
    // back into itself so every row still conserves rate.
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(dim) * 8 + dim);
    for (int s = 0; s < dim; ++s) trip.emplace_back(0, s, 1.0);

    auto emit = [&trip](const Eigen::MatrixXd& block, int row_level, int col_level, int n_) {
        for (int i = 0; i < n_; ++i) {
            for (int jj = 0; jj < n_; ++jj) {
                const double v = block(i, jj);
                if (v == 0.0) continue;
                const int row = row_level * n_ + i;
                const int col = col_level * n_ + jj;
                if (col == 0) continue;  // replaced by normalization
                trip.emplace_back(col, row, v);
            }
        }
    };

    emit(b.B, 0, 0, n);
    emit(b.A0, 0, 1, n);
    for (int lvl = 1; lvl < level_cap; ++lvl) {
        emit(b.A2, lvl, lvl - 1, n);
        emit(b.A1, lvl, lvl, n);
        emit(b.A0, lvl, lvl + 1, n);
    }
    emit(b.A2, level_cap, level_cap - 1, n);
    emit(Eigen::MatrixXd(b.A1 + b.A0), level_cap, level_cap, n);

    Eigen::SparseMatrix<double> sys(dim, dim);
    sys.setFromTriplets(trip.begin(), trip.end());
    sys.makeCompressed();

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(sys);
    if (lu.info() != Eigen::Success) {
        throw SingularBoundaryError("truncated generator factorization failed");
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    rhs(0) = 1.0;
    const Eigen::VectorXd pi = lu.solve(rhs);

    const double outer_mass = pi.tail(2 * n).cwiseAbs().sum();
    if (outer_mass > tail_tol) {
        throw TruncationInsufficientError(
            "probability mass at the truncation depth exceeds the tail tolerance");
    }

    double mass_plus = 0.0;
    for (int lvl = 0; lvl < levels; ++lvl) {
        mass_plus += pi.segment(lvl * n, b.m).sum();
    }
    return std::clamp(mass_plus, 0.0, 1.0);
}

std::string dump_qbd_json(const QbdBlocks& b) {
    auto matrix_rows = [](const Eigen::MatrixXd& a) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index jj = 0; jj < a.cols(); ++jj) row.push_back(a(i, jj));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    nlohmann::json out;
    out["j"] = b.j;
    out["k"] = b.k;
    out["m"] = b.m;
    out["B"] = matrix_rows(b.B);
    out["A0"] = matrix_rows(b.A0);
    out["A1"] = matrix_rows(b.A1);
    out["A2"] = matrix_rows(b.A2);
    return out.dump(2);
}

}  // namespace fqrt
