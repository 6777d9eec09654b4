#pragma once

#include <Eigen/Cholesky>
#include <optional>

#include "tksd/common.hpp"

namespace tksd {

// Configuration for the Gaussian kernel k(x,y) = exp(-||x-y||^2 / (2 sigma^2))
// and for regularised factorisations of Gram matrices built from it.
struct KernelConfig {
    double bandwidth = 1.0;          // sigma, must be > 0
    std::optional<double> jitter{};  // eps >= 0; unset -> 1e-8 * trace(K)/m at factorisation time
    int jitter_growth_limit = 6;     // number of x10 escalations allowed after the first attempt
};

// Kernel value and its coordinate-wise derivatives at one pair (x, y).
// dky = -dkx for a translation-invariant kernel; both are kept so callers
// never have to remember the sign convention.
struct KernelBundle {
    double k = 0.0;
    Vector dkx;   // dkx[l]  = d/dx_l k(x,y)
    Vector dky;   // dky[l]  = d/dy_l k(x,y)
    Vector dkxy;  // dkxy[l] = d^2/(dx_l dy_l) k(x,y)
};

// Median of all n(n-1)/2 pairwise Euclidean distances between rows of X.
// Even counts use the midpoint of the two middle order statistics.
// Throws std::invalid_argument for n < 2, DegenerateDataError when the median
// distance is zero (bandwidth would be invalid).
[[nodiscard]] double median_heuristic(const Matrix& X);

// Evaluate k and its derivatives at a single pair.
[[nodiscard]] KernelBundle kernel_bundle(const Vector& x, const Vector& y, const KernelConfig& cfg);

// Gram matrix K(i,j) = k(X_i, Y_j) for row-sample matrices X (n x d), Y (r x d).
[[nodiscard]] Matrix gram(const Matrix& X, const Matrix& Y, const KernelConfig& cfg);

// First-derivative Gram: entry (i,j) = d/d(X_i)_l k(X_i, Y_j).
[[nodiscard]] Matrix grad_gram(const Matrix& X, const Matrix& Y, Eigen::Index l,
                               const KernelConfig& cfg);

// Cross second-derivative Gram: entry (i,j) = d^2/(d(X_i)_l d(Y_j)_l) k(X_i, Y_j).
[[nodiscard]] Matrix cross_grad_gram(const Matrix& X, const Matrix& Y, Eigen::Index l,
                                     const KernelConfig& cfg);

// Cholesky factorisation of K + eps*I with jitter escalation.
//
// The first attempt uses cfg.jitter if set (0 allowed), otherwise the default
// eps = 1e-8 * trace(K)/m.  On failure the jitter is escalated x10 from the
// default base, cfg.jitter_growth_limit times, before giving up with
// NotPositiveDefiniteError.  The factorisation is done once and may be reused
// for many right-hand sides.
class SpdSolver {
public:
    SpdSolver(const Matrix& K, const KernelConfig& cfg);

    [[nodiscard]] Matrix solve(const Matrix& B) const;
    [[nodiscard]] Vector solve(const Vector& b) const;
    [[nodiscard]] double jitter_used() const { return jitter_used_; }
    [[nodiscard]] Eigen::Index dim() const { return llt_.matrixLLT().rows(); }

private:
    Eigen::LLT<Matrix> llt_;
    double jitter_used_ = 0.0;
};

// One-shot convenience wrapper around SpdSolver: solves (K + eps*I) X = B and
// reports the jitter that was actually used.
struct SpdSolveResult {
    Matrix solution;
    double jitter_used = 0.0;
};
[[nodiscard]] SpdSolveResult regularized_spd_solve(const Matrix& K, const Matrix& B,
                                                   const KernelConfig& cfg);

}  // namespace tksd
