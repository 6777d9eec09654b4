#pragma once

#include <string>
#include <variant>
#include <vector>

#include "tksd/geometry.hpp"
#include "tksd/kernel.hpp"
#include "tksd/models.hpp"

namespace tksd {

// ---------------------------------------------------------------------------
// Kernel workspaces
// ---------------------------------------------------------------------------

// Data-only kernel bundle: the n x n Gram of a dataset together with its
// first and cross-second derivative matrices per coordinate, plus the
// theta-independent row/column aggregates the statistics consume.  Everything
// here is fixed across an entire fit.
class DataKernel {
public:
    DataKernel(Matrix X, const KernelConfig& cfg);

    [[nodiscard]] const Matrix& X() const { return x_; }
    [[nodiscard]] const KernelConfig& config() const { return cfg_; }
    [[nodiscard]] Eigen::Index n() const { return x_.rows(); }
    [[nodiscard]] Eigen::Index d() const { return x_.cols(); }

    [[nodiscard]] const Matrix& K() const { return k_; }
    // Entry (i,j) = d/d(X_i)_l k(X_i, X_j).
    [[nodiscard]] const Matrix& dK(Eigen::Index l) const { return dk_[check_l(l)]; }
    // Entry (i,j) = d^2/(d(X_i)_l d(X_j)_l) k(X_i, X_j).
    [[nodiscard]] const Matrix& ddK(Eigen::Index l) const { return ddk_[check_l(l)]; }

    [[nodiscard]] const Vector& dK_rowsum(Eigen::Index l) const { return dk_row_[check_l(l)]; }
    [[nodiscard]] const Vector& dK_colsum(Eigen::Index l) const { return dk_col_[check_l(l)]; }
    [[nodiscard]] double ddK_sum(Eigen::Index l) const { return ddk_sum_[check_l(l)]; }

private:
    [[nodiscard]] std::size_t check_l(Eigen::Index l) const;
    Matrix x_;
    KernelConfig cfg_;
    Matrix k_;
    std::vector<Matrix> dk_, ddk_;
    std::vector<Vector> dk_row_, dk_col_;
    std::vector<double> ddk_sum_;
};

// Everything theta-independent that the truncated statistic needs: the data
// kernel above plus the boundary Gram K' (factorised once with jitter), the
// data-boundary Gram Phi and its per-coordinate derivatives.
class TksdWorkspace {
public:
    TksdWorkspace(Matrix X, BoundarySample boundary, const KernelConfig& cfg);

    [[nodiscard]] const DataKernel& data_kernel() const { return dk_; }
    [[nodiscard]] const Matrix& X() const { return dk_.X(); }
    [[nodiscard]] const Matrix& boundary_points() const { return boundary_.points; }
    [[nodiscard]] const KernelConfig& config() const { return dk_.config(); }
    [[nodiscard]] Eigen::Index n() const { return dk_.n(); }
    [[nodiscard]] Eigen::Index d() const { return dk_.d(); }
    [[nodiscard]] Eigen::Index m() const { return boundary_.points.rows(); }

    [[nodiscard]] const Matrix& Kp() const { return kp_; }
    [[nodiscard]] const Matrix& Phi() const { return phi_; }
    // Entry (i,j) = d/d(X_i)_l k(X_i, B_j).
    [[nodiscard]] const Matrix& dPhi(Eigen::Index l) const;
    // Column sums of dPhi(l): the boundary-side aggregate of the derivative part.
    [[nodiscard]] const Vector& dPhi_colsum(Eigen::Index l) const;
    [[nodiscard]] const SpdSolver& solver() const { return solver_; }

private:
    DataKernel dk_;
    BoundarySample boundary_;
    Matrix kp_, phi_;
    std::vector<Matrix> dphi_;
    std::vector<Vector> dphi_col_;
    SpdSolver solver_;
};

// ---------------------------------------------------------------------------
// Scalar building blocks (also the oracles' entry points)
// ---------------------------------------------------------------------------

// One coordinate's Stein kernel term for a single pair:
//   u_l = psi_l(x) psi_l(y) k + psi_l(x) dky_l + psi_l(y) dkx_l + dkxy_l.
[[nodiscard]] double u_l_term(double psi_x_l, double psi_y_l, const KernelBundle& bundle,
                              Eigen::Index l);

// m-vector v_l(z) with entries psi_l(z) k(z, b_j) + d/dz_l k(z, b_j).
[[nodiscard]] Vector v_l_at(const Vector& z, double psi_z_l, const Matrix& boundary_points,
                            const KernelConfig& cfg, Eigen::Index l);

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

// V-statistic (1/n^2 over all pairs, diagonal included) of the truncated
// discrepancy: sum_l [u_l(x_i,x_j) - v_l(x_i)' (K'+eps I)^{-1} v_l(x_j)].
[[nodiscard]] double tksd_vstat(const ScoreModel& model, const TksdWorkspace& ws,
                                const Vector& theta);
[[nodiscard]] double tksd_vstat(const ScoreModel& model, const Matrix& X,
                                const BoundarySample& boundary, const KernelConfig& cfg,
                                const Vector& theta);

// Unbiased U-statistic: 1/(n(n-1)) over ordered pairs i != j.
[[nodiscard]] double tksd_ustat(const ScoreModel& model, const TksdWorkspace& ws,
                                const Vector& theta);
[[nodiscard]] double tksd_ustat(const ScoreModel& model, const Matrix& X,
                                const BoundarySample& boundary, const KernelConfig& cfg,
                                const Vector& theta);

// Analytic theta-gradient of the V-statistic.
[[nodiscard]] Vector tksd_grad(const ScoreModel& model, const TksdWorkspace& ws,
                               const Vector& theta);
[[nodiscard]] Vector tksd_grad(const ScoreModel& model, const Matrix& X,
                               const BoundarySample& boundary, const KernelConfig& cfg,
                               const Vector& theta);

// Untruncated Stein discrepancy V-statistic (no boundary correction); the
// limit both truncated statistics reduce to.
[[nodiscard]] double ksd_vstat(const ScoreModel& model, const DataKernel& dk, const Vector& theta);
[[nodiscard]] double ksd_vstat(const ScoreModel& model, const Matrix& X, const KernelConfig& cfg,
                               const Vector& theta);

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

struct OptConfig {
    Vector theta0;              // empty -> zeros(dim_theta)
    int max_iters = 500;
    double grad_tol = 1e-6;     // stop when ||grad|| < grad_tol * (1 + |objective|)
    double armijo_c = 1e-4;
    double step_shrink = 0.5;
    double initial_step = 1.0;
    bool force_descent = false; // skip the exact path even for affine models
};

struct FitResult {
    Vector theta_hat;
    double objective_value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    std::string method;         // "exact-affine" or "descent"
    bool converged = false;
    double jitter_used = 0.0;   // boundary factorisation jitter (TKSD fits)
    Vector boundary_residuals;  // per-coordinate dual residuals (TKSD fits)
};

// Minimise the V-statistic over theta.  Models affine in theta use the exact
// path (the gradient is affine, so p+1 gradient evaluations determine the
// stationary point); otherwise Armijo backtracking descent.  The boundary
// factorisation in the workspace is reused across all evaluations.
[[nodiscard]] FitResult fit_tksd(const ScoreModel& model, const TksdWorkspace& ws,
                                 const OptConfig& opt = {});
[[nodiscard]] FitResult fit_tksd(const ScoreModel& model, const Matrix& X,
                                 const BoundarySample& boundary, const KernelConfig& cfg,
                                 const OptConfig& opt = {});

// ---------------------------------------------------------------------------
// Truncated score matching baseline
// ---------------------------------------------------------------------------

// Distance-to-boundary provider for the weighted baselines: either the exact
// l2-ball distance or the sampled-boundary approximation.
struct ExactL2Distance {
    LpBall ball;
};
struct ApproxDistance {
    Matrix boundary_points;
    int alpha = 2;
    double gamma = 1.0;
};
using DistanceSpec = std::variant<ExactL2Distance, ApproxDistance>;

struct WeightField {
    Vector h;      // n, non-negative
    Matrix hgrad;  // n x d, rows grad h(x_i)
};
[[nodiscard]] WeightField distance_weights(const Matrix& X, const DistanceSpec& spec);

// (1/n) sum_i sum_l [ h_i (psi_l^2 + 2 dpsi_l/dx_l) + 2 dh/dx_l psi_l ], i.e. the
// expansion of E || h^{1/2} (score_p - score_q) ||^2 after integrating by parts
// with h = 0 on the boundary.
[[nodiscard]] double truncsm_objective(const ScoreModel& model, const Matrix& X, const Vector& h,
                                       const Matrix& hgrad, const Vector& theta);
[[nodiscard]] Vector truncsm_grad(const ScoreModel& model, const Matrix& X, const Vector& h,
                                  const Matrix& hgrad, const Vector& theta);
[[nodiscard]] FitResult fit_truncsm(const ScoreModel& model, const Matrix& X,
                                    const DistanceSpec& spec, const OptConfig& opt = {});
[[nodiscard]] FitResult fit_truncsm_with_h(const ScoreModel& model, const Matrix& X,
                                           const Vector& h, const Matrix& hgrad,
                                           const OptConfig& opt = {});

// ---------------------------------------------------------------------------
// Boundary-weighted Stein discrepancy baseline
// ---------------------------------------------------------------------------

// V-statistic of the h-weighted Stein operator: with A_l(z) = psi_l(z) h(z) +
// dh/dz_l, the pair term is A_l(x)A_l(y)k + A_l(x)h(y)dky_l + A_l(y)h(x)dkx_l
// + h(x)h(y)dkxy_l.
[[nodiscard]] double bdksd_vstat(const ScoreModel& model, const DataKernel& dk, const Vector& h,
                                 const Matrix& hgrad, const Vector& theta);
[[nodiscard]] double bdksd_vstat(const ScoreModel& model, const Matrix& X, const Vector& h,
                                 const Matrix& hgrad, const KernelConfig& cfg,
                                 const Vector& theta);
[[nodiscard]] Vector bdksd_grad(const ScoreModel& model, const DataKernel& dk, const Vector& h,
                                const Matrix& hgrad, const Vector& theta);
[[nodiscard]] FitResult fit_bdksd(const ScoreModel& model, const Matrix& X,
                                  const DistanceSpec& spec, const KernelConfig& cfg,
                                  const OptConfig& opt = {});
[[nodiscard]] FitResult fit_bdksd_with_h(const ScoreModel& model, const Matrix& X, const Vector& h,
                                         const Matrix& hgrad, const KernelConfig& cfg,
                                         const OptConfig& opt = {});

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

// Per-coordinate dual-constraint certificate ||t_l + K' nu_l|| with
// t_l = (1/n) sum_i v_l(x_i) and nu_l = -(K'+eps I)^{-1} t_l.  Zero (to
// numerical precision) at eps = 0; grows proportionally with forced jitter.
[[nodiscard]] Vector boundary_residual(const ScoreModel& model, const TksdWorkspace& ws,
                                       const Vector& theta);

// Unnormalised optimal test function evaluated at query points (q x d):
//   g_l(z) = -[ (1/n) sum_i (psi_l(x_i) k(x_i,z) + d/d(x_i)_l k(x_i,z))
//               + nu_l' phi_z ].
// With enforce_constraint = false, nu is forced to zero and this reduces to
// the unconstrained Stein witness function.
[[nodiscard]] Matrix reconstruct_g(const ScoreModel& model, const TksdWorkspace& ws,
                                   const Vector& theta, const Matrix& query,
                                   bool enforce_constraint = true);

}  // namespace tksd
