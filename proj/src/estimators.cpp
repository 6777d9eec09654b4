#include "tksd/estimators.hpp"

#include <cmath>
#include <functional>

namespace tksd {

namespace {

void check_model_data(const ScoreModel& model, const Matrix& X) {
    if (X.rows() < 1) {
        throw std::invalid_argument("estimator: need at least one data point");
    }
    if (!X.allFinite()) {
        throw std::invalid_argument("estimator: data contains non-finite values");
    }
    if (X.cols() != model.dim_x()) {
        throw std::invalid_argument("estimator: data dimension does not match the model");
    }
}

// n x d matrix of per-observation scores; row i is psi(x_i; theta).
Matrix score_matrix(const ScoreModel& model, const Matrix& X, const Vector& theta) {
    Matrix S(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        S.row(i) = model.score(X.row(i).transpose(), theta, i).transpose();
    }
    return S;
}

Matrix divergence_matrix(const ScoreModel& model, const Matrix& X, const Vector& theta) {
    Matrix D(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        D.row(i) = model.score_x_divergence(X.row(i).transpose(), theta, i).transpose();
    }
    return D;
}

// One n x p Jacobian matrix per coordinate l: rows are grad_theta psi_l(x_i).
std::vector<Matrix> theta_jacobian_stack(const ScoreModel& model, const Matrix& X,
                                         const Vector& theta) {
    const Eigen::Index d = model.dim_x();
    const Eigen::Index p = model.dim_theta();
    std::vector<Matrix> stack(static_cast<std::size_t>(d), Matrix(X.rows(), p));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const Matrix jac = model.score_theta_jacobian(X.row(i).transpose(), theta, i);
        for (Eigen::Index l = 0; l < d; ++l) {
            stack[static_cast<std::size_t>(l)].row(i) = jac.row(l);
        }
    }
    return stack;
}

void check_weights(const Matrix& X, const Vector& h, const Matrix& hgrad) {
    if (h.size() != X.rows() || hgrad.rows() != X.rows() || hgrad.cols() != X.cols()) {
        throw std::invalid_argument("weight field shape does not match the data");
    }
    if (!h.allFinite() || !hgrad.allFinite()) {
        throw std::invalid_argument("weight field contains non-finite values");
    }
    if ((h.array() < 0.0).any()) {
        throw std::invalid_argument("weight values must be non-negative");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Workspaces
// ---------------------------------------------------------------------------

std::size_t DataKernel::check_l(Eigen::Index l) const {
    if (l < 0 || l >= d()) {
        throw std::invalid_argument("coordinate index out of range");
    }
    return static_cast<std::size_t>(l);
}

DataKernel::DataKernel(Matrix X, const KernelConfig& cfg) : x_(std::move(X)), cfg_(cfg) {
    if (x_.rows() < 1 || x_.cols() < 1) {
        throw std::invalid_argument("DataKernel: data must be non-empty");
    }
    if (!x_.allFinite()) {
        throw std::invalid_argument("DataKernel: data contains non-finite values");
    }
    k_ = gram(x_, x_, cfg_);
    const Eigen::Index n = x_.rows();
    const Eigen::Index d = x_.cols();
    const double s2 = cfg_.bandwidth * cfg_.bandwidth;
    dk_.assign(static_cast<std::size_t>(d), Matrix(n, n));
    ddk_.assign(static_cast<std::size_t>(d), Matrix(n, n));
    for (Eigen::Index l = 0; l < d; ++l) {
        auto& dk = dk_[static_cast<std::size_t>(l)];
        auto& ddk = ddk_[static_cast<std::size_t>(l)];
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                const double dl = x_(i, l) - x_(j, l);
                dk(i, j) = -(dl / s2) * k_(i, j);
                ddk(i, j) = k_(i, j) * (1.0 / s2 - dl * dl / (s2 * s2));
            }
        }
        dk_row_.push_back(dk.rowwise().sum());
        dk_col_.push_back(dk.colwise().sum().transpose());
        ddk_sum_.push_back(ddk.sum());
    }
}

TksdWorkspace::TksdWorkspace(Matrix X, BoundarySample boundary, const KernelConfig& cfg)
    : dk_(std::move(X), cfg),
      boundary_(std::move(boundary)),
      kp_(gram(boundary_.points, boundary_.points, cfg)),
      phi_(gram(dk_.X(), boundary_.points, cfg)),
      solver_(kp_, cfg) {
    const Eigen::Index d = dk_.d();
    dphi_.reserve(static_cast<std::size_t>(d));
    dphi_col_.reserve(static_cast<std::size_t>(d));
    for (Eigen::Index l = 0; l < d; ++l) {
        dphi_.push_back(grad_gram(dk_.X(), boundary_.points, l, cfg));
        dphi_col_.push_back(dphi_.back().colwise().sum().transpose());
    }
}

const Matrix& TksdWorkspace::dPhi(Eigen::Index l) const {
    if (l < 0 || l >= d()) {
        throw std::invalid_argument("coordinate index out of range");
    }
    return dphi_[static_cast<std::size_t>(l)];
}

const Vector& TksdWorkspace::dPhi_colsum(Eigen::Index l) const {
    if (l < 0 || l >= d()) {
        throw std::invalid_argument("coordinate index out of range");
    }
    return dphi_col_[static_cast<std::size_t>(l)];
}

// ---------------------------------------------------------------------------
// Scalar building blocks
// ---------------------------------------------------------------------------

double u_l_term(double psi_x_l, double psi_y_l, const KernelBundle& bundle, Eigen::Index l) {
    if (l < 0 || l >= bundle.dkx.size()) {
        throw std::invalid_argument("u_l_term: coordinate index out of range");
    }
    return psi_x_l * psi_y_l * bundle.k + psi_x_l * bundle.dky[l] + psi_y_l * bundle.dkx[l] +
           bundle.dkxy[l];
}

Vector v_l_at(const Vector& z, double psi_z_l, const Matrix& boundary_points,
              const KernelConfig& cfg, Eigen::Index l) {
    if (boundary_points.rows() < 1 || boundary_points.cols() != z.size()) {
        throw std::invalid_argument("v_l_at: boundary shape mismatch");
    }
    if (l < 0 || l >= z.size()) {
        throw std::invalid_argument("v_l_at: coordinate index out of range");
    }
    Vector v(boundary_points.rows());
    for (Eigen::Index j = 0; j < boundary_points.rows(); ++j) {
        const KernelBundle b = kernel_bundle(z, boundary_points.row(j).transpose(), cfg);
        v[j] = psi_z_l * b.k + b.dkx[l];
    }
    return v;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

namespace {

// Sum over all ordered pairs (diagonal included) of u_l for one coordinate:
//   s' K s  +  s' (dKy 1)  +  s' (dKx' 1)  +  sum(ddK)
// with dKy = -dKx, using the precomputed row/column sums.
double u_full_sum(const DataKernel& dk, const Vector& s, Eigen::Index l) {
    return s.dot(dk.K() * s) - s.dot(dk.dK_rowsum(l)) + s.dot(dk.dK_colsum(l)) + dk.ddK_sum(l);
}

// Boundary-side mean vector t_l = (1/n) sum_i v_l(x_i).
Vector t_bar(const TksdWorkspace& ws, const Vector& s, Eigen::Index l) {
    return (ws.Phi().transpose() * s + ws.dPhi_colsum(l)) / static_cast<double>(ws.n());
}

}  // namespace

double tksd_vstat(const ScoreModel& model, const TksdWorkspace& ws, const Vector& theta) {
    check_model_data(model, ws.X());
    const auto n = static_cast<double>(ws.n());
    const Matrix S = score_matrix(model, ws.X(), theta);
    double total = 0.0;
    for (Eigen::Index l = 0; l < ws.d(); ++l) {
        const Vector s = S.col(l);
        const Vector tl = t_bar(ws, s, l);
        total += u_full_sum(ws.data_kernel(), s, l) / (n * n) - tl.dot(ws.solver().solve(tl));
    }
    return total;
}

double tksd_vstat(const ScoreModel& model, const Matrix& X, const BoundarySample& boundary,
                  const KernelConfig& cfg, const Vector& theta) {
    return tksd_vstat(model, TksdWorkspace(X, boundary, cfg), theta);
}

double tksd_ustat(const ScoreModel& model, const TksdWorkspace& ws, const Vector& theta) {
    check_model_data(model, ws.X());
    const Eigen::Index n = ws.n();
    if (n < 2) {
        throw std::invalid_argument("tksd_ustat: need at least two data points");
    }
    const Matrix S = score_matrix(model, ws.X(), theta);
    const DataKernel& dk = ws.data_kernel();
    double offdiag = 0.0;
    for (Eigen::Index l = 0; l < ws.d(); ++l) {
        const Vector s = S.col(l);
        const double ufull = u_full_sum(dk, s, l);
        // Diagonal pairs: dkx and dky vanish at x = y for a stationary kernel.
        const double udiag = (s.array().square() * dk.K().diagonal().array()).sum() +
                             dk.ddK(l).diagonal().sum();

        Matrix V = ws.Phi();
        V.array().colwise() *= s.array();
        V += ws.dPhi(l);
        const Matrix A = ws.solver().solve(Matrix(V.transpose()));  // m x n
        const Vector tsum = V.colwise().sum().transpose();
        const double vfull = tsum.dot(A * Vector::Ones(n));
        const double vdiag = V.transpose().cwiseProduct(A).sum();

        offdiag += (ufull - udiag) - (vfull - vdiag);
    }
    return offdiag / (static_cast<double>(n) * static_cast<double>(n - 1));
}

double tksd_ustat(const ScoreModel& model, const Matrix& X, const BoundarySample& boundary,
                  const KernelConfig& cfg, const Vector& theta) {
    return tksd_ustat(model, TksdWorkspace(X, boundary, cfg), theta);
}

Vector tksd_grad(const ScoreModel& model, const TksdWorkspace& ws, const Vector& theta) {
    check_model_data(model, ws.X());
    const auto n = static_cast<double>(ws.n());
    const Matrix S = score_matrix(model, ws.X(), theta);
    const std::vector<Matrix> J = theta_jacobian_stack(model, ws.X(), theta);
    const DataKernel& dk = ws.data_kernel();
    Vector grad = Vector::Zero(model.dim_theta());
    for (Eigen::Index l = 0; l < ws.d(); ++l) {
        const Vector s = S.col(l);
        // d/dtheta of the data part: per-row weights on grad_theta psi_l(x_i).
        const Vector data_vec =
            (2.0 * (dk.K() * s) - dk.dK_rowsum(l) + dk.dK_colsum(l)) / (n * n);
        const Vector w = ws.solver().solve(t_bar(ws, s, l));
        const Vector trunc_vec = (2.0 / n) * (ws.Phi() * w);
        grad += J[static_cast<std::size_t>(l)].transpose() * (data_vec - trunc_vec);
    }
    return grad;
}

Vector tksd_grad(const ScoreModel& model, const Matrix& X, const BoundarySample& boundary,
                 const KernelConfig& cfg, const Vector& theta) {
    return tksd_grad(model, TksdWorkspace(X, boundary, cfg), theta);
}

double ksd_vstat(const ScoreModel& model, const DataKernel& dk, const Vector& theta) {
    check_model_data(model, dk.X());
    const auto n = static_cast<double>(dk.n());
    const Matrix S = score_matrix(model, dk.X(), theta);
    double total = 0.0;
    for (Eigen::Index l = 0; l < dk.d(); ++l) {
        total += u_full_sum(dk, S.col(l), l);
    }
    return total / (n * n);
}

double ksd_vstat(const ScoreModel& model, const Matrix& X, const KernelConfig& cfg,
                 const Vector& theta) {
    return ksd_vstat(model, DataKernel(X, cfg), theta);
}

// ---------------------------------------------------------------------------
// Optimiser
// ---------------------------------------------------------------------------

namespace {

struct ObjectiveFns {
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> grad;
};

FitResult run_descent(const ObjectiveFns& f, const Vector& theta0, const OptConfig& opt) {
    Vector theta = theta0;
    double obj = f.value(theta);
    if (!std::isfinite(obj)) {
        throw std::runtime_error("descent: objective is not finite at the initial point");
    }
    FitResult res;
    res.method = "descent";
    int it = 0;
    double grad_norm = 0.0;
    bool converged = false;
    for (; it < opt.max_iters; ++it) {
        const Vector g = f.grad(theta);
        if (!g.allFinite()) {
            throw std::runtime_error("descent: gradient is not finite");
        }
        grad_norm = g.norm();
        if (grad_norm < opt.grad_tol * (1.0 + std::abs(obj))) {
            converged = true;
            break;
        }
        // Armijo backtracking along the steepest-descent direction.
        const double decrease = opt.armijo_c * grad_norm * grad_norm;
        double step = opt.initial_step;
        bool moved = false;
        for (int bt = 0; bt < 60; ++bt) {
            const Vector cand = theta - step * g;
            const double cobj = f.value(cand);
            if (std::isfinite(cobj) && cobj <= obj - step * decrease) {
                theta = cand;
                obj = cobj;
                moved = true;
                break;
            }
            step *= opt.step_shrink;
        }
        if (!moved) {
            break;  // no acceptable step: report the stall instead of looping
        }
    }
    if (!converged) {
        grad_norm = f.grad(theta).norm();
        converged = grad_norm < opt.grad_tol * (1.0 + std::abs(obj));
    }
    res.theta_hat = theta;
    res.objective_value = obj;
    res.grad_norm = grad_norm;
    res.iterations = it;
    res.converged = converged;
    return res;
}

FitResult minimize(const ObjectiveFns& f, bool affine, Eigen::Index p, const OptConfig& opt) {
    Vector theta0 = opt.theta0.size() > 0 ? opt.theta0 : Vector::Zero(p);
    if (theta0.size() != p) {
        throw std::invalid_argument("initial theta has wrong dimension");
    }
    if (affine && !opt.force_descent) {
        // The gradient is affine in theta: p+1 evaluations determine it as
        // grad(theta) = H theta + g0, and the minimiser solves H theta = -g0.
        const Vector g0 = f.grad(Vector::Zero(p));
        Matrix H(p, p);
        for (Eigen::Index i = 0; i < p; ++i) {
            H.col(i) = f.grad(Vector::Unit(p, i)) - g0;
        }
        H = 0.5 * (H + H.transpose()).eval();
        const Eigen::LDLT<Matrix> ldlt(H);
        if (ldlt.info() == Eigen::Success) {
            const Vector cand = ldlt.solve(-g0);
            if (cand.allFinite()) {
                const Vector gsol = f.grad(cand);
                if (gsol.norm() <= 1e-7 * (1.0 + g0.norm())) {
                    FitResult res;
                    res.theta_hat = cand;
                    res.objective_value = f.value(cand);
                    res.grad_norm = gsol.norm();
                    res.iterations = 1;
                    res.method = "exact-affine";
                    res.converged = true;
                    return res;
                }
            }
        }
        // Singular or inconsistent normal system: fall back to descent.
    }
    return run_descent(f, theta0, opt);
}

}  // namespace

FitResult fit_tksd(const ScoreModel& model, const TksdWorkspace& ws, const OptConfig& opt) {
    const ObjectiveFns f{
        [&](const Vector& th) { return tksd_vstat(model, ws, th); },
        [&](const Vector& th) { return tksd_grad(model, ws, th); },
    };
    FitResult res = minimize(f, model.affine_in_theta(), model.dim_theta(), opt);
    res.jitter_used = ws.solver().jitter_used();
    res.boundary_residuals = boundary_residual(model, ws, res.theta_hat);
    return res;
}

FitResult fit_tksd(const ScoreModel& model, const Matrix& X, const BoundarySample& boundary,
                   const KernelConfig& cfg, const OptConfig& opt) {
    const TksdWorkspace ws(X, boundary, cfg);
    return fit_tksd(model, ws, opt);
}

// ---------------------------------------------------------------------------
// Truncated score matching
// ---------------------------------------------------------------------------

WeightField distance_weights(const Matrix& X, const DistanceSpec& spec) {
    WeightField w;
    w.h.resize(X.rows());
    w.hgrad.resize(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const DistanceResult r = std::visit(
            [&](const auto& s) -> DistanceResult {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, ExactL2Distance>) {
                    return exact_distance_l2ball(X.row(i).transpose(), s.ball);
                } else {
                    return approx_distance(X.row(i).transpose(), s.boundary_points, s.alpha,
                                           s.gamma);
                }
            },
            spec);
        w.h[i] = r.value;
        w.hgrad.row(i) = r.gradient.transpose();
    }
    return w;
}

double truncsm_objective(const ScoreModel& model, const Matrix& X, const Vector& h,
                         const Matrix& hgrad, const Vector& theta) {
    check_model_data(model, X);
    check_weights(X, h, hgrad);
    const Matrix S = score_matrix(model, X, theta);
    const Matrix D = divergence_matrix(model, X, theta);
    const Vector per_row = (S.array().square() + 2.0 * D.array()).rowwise().sum();
    return (h.dot(per_row) + 2.0 * (hgrad.array() * S.array()).sum()) /
           static_cast<double>(X.rows());
}

Vector truncsm_grad(const ScoreModel& model, const Matrix& X, const Vector& h,
                    const Matrix& hgrad, const Vector& theta) {
    check_model_data(model, X);
    check_weights(X, h, hgrad);
    const Matrix S = score_matrix(model, X, theta);
    const std::vector<Matrix> J = theta_jacobian_stack(model, X, theta);
    Vector grad = Vector::Zero(model.dim_theta());
    for (Eigen::Index l = 0; l < X.cols(); ++l) {
        const Vector weight = 2.0 * (h.cwiseProduct(S.col(l)) + hgrad.col(l));
        grad += J[static_cast<std::size_t>(l)].transpose() * weight;
    }
    if (!model.affine_in_theta()) {
        // The divergence term depends on theta for non-affine scores.
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            const Matrix dj =
                model.score_x_divergence_theta_jacobian(X.row(i).transpose(), theta, i);
            grad += 2.0 * h[i] * dj.colwise().sum().transpose();
        }
    }
    return grad / static_cast<double>(X.rows());
}

FitResult fit_truncsm_with_h(const ScoreModel& model, const Matrix& X, const Vector& h,
                             const Matrix& hgrad, const OptConfig& opt) {
    const ObjectiveFns f{
        [&](const Vector& th) { return truncsm_objective(model, X, h, hgrad, th); },
        [&](const Vector& th) { return truncsm_grad(model, X, h, hgrad, th); },
    };
    return minimize(f, model.affine_in_theta(), model.dim_theta(), opt);
}

FitResult fit_truncsm(const ScoreModel& model, const Matrix& X, const DistanceSpec& spec,
                      const OptConfig& opt) {
    const WeightField w = distance_weights(X, spec);
    return fit_truncsm_with_h(model, X, w.h, w.hgrad, opt);
}

// ---------------------------------------------------------------------------
// Boundary-weighted Stein discrepancy
// ---------------------------------------------------------------------------

double bdksd_vstat(const ScoreModel& model, const DataKernel& dk, const Vector& h,
                   const Matrix& hgrad, const Vector& theta) {
    check_model_data(model, dk.X());
    check_weights(dk.X(), h, hgrad);
    const auto n = static_cast<double>(dk.n());
    const Matrix S = score_matrix(model, dk.X(), theta);
    double total = 0.0;
    for (Eigen::Index l = 0; l < dk.d(); ++l) {
        const Vector a = S.col(l).cwiseProduct(h) + hgrad.col(l);
        const Vector dxh = dk.dK(l) * h;
        const Vector dxth = dk.dK(l).transpose() * h;
        total += a.dot(dk.K() * a) - a.dot(dxh) + a.dot(dxth) + h.dot(dk.ddK(l) * h);
    }
    return total / (n * n);
}

double bdksd_vstat(const ScoreModel& model, const Matrix& X, const Vector& h, const Matrix& hgrad,
                   const KernelConfig& cfg, const Vector& theta) {
    return bdksd_vstat(model, DataKernel(X, cfg), h, hgrad, theta);
}

Vector bdksd_grad(const ScoreModel& model, const DataKernel& dk, const Vector& h,
                  const Matrix& hgrad, const Vector& theta) {
    check_model_data(model, dk.X());
    check_weights(dk.X(), h, hgrad);
    const auto n = static_cast<double>(dk.n());
    const Matrix S = score_matrix(model, dk.X(), theta);
    const std::vector<Matrix> J = theta_jacobian_stack(model, dk.X(), theta);
    Vector grad = Vector::Zero(model.dim_theta());
    for (Eigen::Index l = 0; l < dk.d(); ++l) {
        const Vector a = S.col(l).cwiseProduct(h) + hgrad.col(l);
        const Vector dxh = dk.dK(l) * h;
        const Vector dxth = dk.dK(l).transpose() * h;
        const Vector inner = 2.0 * (dk.K() * a) - dxh + dxth;
        grad += J[static_cast<std::size_t>(l)].transpose() * h.cwiseProduct(inner);
    }
    return grad / (n * n);
}

FitResult fit_bdksd_with_h(const ScoreModel& model, const Matrix& X, const Vector& h,
                           const Matrix& hgrad, const KernelConfig& cfg, const OptConfig& opt) {
    const DataKernel dk(X, cfg);
    const ObjectiveFns f{
        [&](const Vector& th) { return bdksd_vstat(model, dk, h, hgrad, th); },
        [&](const Vector& th) { return bdksd_grad(model, dk, h, hgrad, th); },
    };
    return minimize(f, model.affine_in_theta(), model.dim_theta(), opt);
}

FitResult fit_bdksd(const ScoreModel& model, const Matrix& X, const DistanceSpec& spec,
                    const KernelConfig& cfg, const OptConfig& opt) {
    const WeightField w = distance_weights(X, spec);
    return fit_bdksd_with_h(model, X, w.h, w.hgrad, cfg, opt);
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

Vector boundary_residual(const ScoreModel& model, const TksdWorkspace& ws, const Vector& theta) {
    check_model_data(model, ws.X());
    const Matrix S = score_matrix(model, ws.X(), theta);
    Vector res(ws.d());
    for (Eigen::Index l = 0; l < ws.d(); ++l) {
        const Vector tl = t_bar(ws, S.col(l), l);
        const Vector nu = -ws.solver().solve(tl);
        // Dual constraint against the unjittered boundary Gram: any forced
        // jitter shows up here as eps * (K'+eps I)^{-1} t_l.
        res[l] = (tl + ws.Kp() * nu).norm();
    }
    return res;
}

Matrix reconstruct_g(const ScoreModel& model, const TksdWorkspace& ws, const Vector& theta,
                     const Matrix& query, bool enforce_constraint) {
    check_model_data(model, ws.X());
    if (query.rows() < 1 || query.cols() != ws.d()) {
        throw std::invalid_argument("reconstruct_g: query shape mismatch");
    }
    const auto n = static_cast<double>(ws.n());
    const Matrix S = score_matrix(model, ws.X(), theta);
    const Matrix Kqx = gram(query, ws.X(), ws.config());
    const Matrix Kqb = gram(query, ws.boundary_points(), ws.config());
    Matrix G(query.rows(), ws.d());
    for (Eigen::Index l = 0; l < ws.d(); ++l) {
        const Vector s = S.col(l);
        // (1/n) sum_i d/d(x_i)_l k(x_i, z_q), one entry per query point.
        const Vector deriv_sum =
            grad_gram(ws.X(), query, l, ws.config()).colwise().sum().transpose();
        Vector g = (Kqx * s + deriv_sum) / n;
        if (enforce_constraint) {
            const Vector nu = -ws.solver().solve(t_bar(ws, s, l));
            g += Kqb * nu;
        }
        G.col(l) = -g;
    }
    return G;
}

}  // namespace tksd
