#include "tksd/models.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace tksd {

void ScoreModel::check_args(const Vector& x, const Vector& theta,
                            std::optional<Eigen::Index> obs_index) const {
    if (x.size() != dim_x()) {
        throw std::invalid_argument("score model: x has size " + std::to_string(x.size()) +
                                    ", expected " + std::to_string(dim_x()));
    }
    if (theta.size() != dim_theta()) {
        throw std::invalid_argument("score model: theta has size " + std::to_string(theta.size()) +
                                    ", expected " + std::to_string(dim_theta()));
    }
    if (is_conditional() && !obs_index) {
        throw std::invalid_argument("score model: conditional model requires obs_index");
    }
}

Matrix ScoreModel::score_x_divergence_theta_jacobian(
    const Vector& x, const Vector& theta, std::optional<Eigen::Index> obs_index) const {
    check_args(x, theta, obs_index);
    if (affine_in_theta()) {
        // d psi_l / d x_l is theta-free when psi is affine in theta with a
        // theta-independent slope in x.
        return Matrix::Zero(dim_x(), dim_theta());
    }
    Matrix jac(dim_x(), dim_theta());
    Vector tp = theta, tm = theta;
    for (Eigen::Index i = 0; i < dim_theta(); ++i) {
        const double h = 1e-5 * (1.0 + std::abs(theta[i]));
        tp[i] = theta[i] + h;
        tm[i] = theta[i] - h;
        jac.col(i) = (score_x_divergence(x, tp, obs_index) -
                      score_x_divergence(x, tm, obs_index)) /
                     (2.0 * h);
        tp[i] = theta[i];
        tm[i] = theta[i];
    }
    return jac;
}

GaussianMeanModel::GaussianMeanModel(Matrix sigma) {
    if (sigma.rows() < 1 || sigma.rows() != sigma.cols()) {
        throw std::invalid_argument("GaussianMeanModel: covariance must be square");
    }
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() >
        1e-12 * std::max(sigma.cwiseAbs().maxCoeff(), 1.0)) {
        throw std::invalid_argument("GaussianMeanModel: covariance must be symmetric");
    }
    const Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
        throw NotPositiveDefiniteError("GaussianMeanModel: covariance is not positive definite");
    }
    sigma_inv_ = llt.solve(Matrix::Identity(sigma.rows(), sigma.rows()));
}

Vector GaussianMeanModel::score(const Vector& x, const Vector& theta,
                                std::optional<Eigen::Index> obs_index) const {
    check_args(x, theta, obs_index);
    return sigma_inv_ * (theta - x);
}

Matrix GaussianMeanModel::score_theta_jacobian(const Vector& x, const Vector& theta,
                                               std::optional<Eigen::Index> obs_index) const {
    check_args(x, theta, obs_index);
    return sigma_inv_;
}

Vector GaussianMeanModel::score_x_divergence(const Vector& x, const Vector& theta,
                                             std::optional<Eigen::Index> obs_index) const {
    check_args(x, theta, obs_index);
    return -sigma_inv_.diagonal();
}

GaussianMixtureMeansModel::GaussianMixtureMeansModel(int num_components, int dim)
    : k_(num_components), d_(dim) {
    if (num_components < 1) {
        throw std::invalid_argument("GaussianMixtureMeansModel: need at least one component");
    }
    if (dim < 1) {
        throw std::invalid_argument("GaussianMixtureMeansModel: dimension must be positive");
    }
}

Vector GaussianMixtureMeansModel::responsibilities(const Vector& x, const Vector& theta) const {
    // Softmax over a_k = -||x - mu_k||^2 / 2, shifted by the max for stability.
    Vector a(k_);
    for (Eigen::Index k = 0; k < k_; ++k) {
        a[k] = -0.5 * (x - theta.segment(k * d_, d_)).squaredNorm();
    }
    const double amax = a.maxCoeff();
    Vector w = (a.array() - amax).exp();
    return w / w.sum();
}

Vector GaussianMixtureMeansModel::score(const Vector& x, const Vector& theta,
                                        std::optional<Eigen::Index> obs_index) const {
    check_args(x, theta, obs_index);
    const Vector w = responsibilities(x, theta);
    Vector psi = Vector::Zero(d_);
    for (Eigen::Index k = 0; k < k_; ++k) {
        psi += w[k] * (theta.segment(k * d_, d_) - x);
    }
    return psi;
}

Matrix GaussianMixtureMeansModel::score_theta_jacobian(
    const Vector& x, const Vector& theta, std::optional<Eigen::Index> obs_index) const {
    check_args(x, theta, obs_index);
    Matrix jac(d_, dim_theta());
    Vector tp = theta, tm = theta;
    for (Eigen::Index i = 0; i < dim_theta(); ++i) {
        const double h = 1e-5 * (1.0 + std::abs(theta[i]));
        tp[i] = theta[i] + h;
        tm[i] = theta[i] - h;
        jac.col(i) = (score(x, tp) - score(x, tm)) / (2.0 * h);
        tp[i] = theta[i];
        tm[i] = theta[i];
    }
    return jac;
}

Vector GaussianMixtureMeansModel::score_x_divergence(
    const Vector& x, const Vector& theta, std::optional<Eigen::Index> obs_index) const {
    check_args(x, theta, obs_index);
    const Vector w = responsibilities(x, theta);
    // d psi_l / d x_l = sum_k w_k (-1 + (mu_kl - x_l)^2) - (sum_k w_k (mu_kl - x_l))^2
    Vector div(d_);
    for (Eigen::Index l = 0; l < d_; ++l) {
        double second = 0.0;
        double first = 0.0;
        for (Eigen::Index k = 0; k < k_; ++k) {
            const double diff = theta[k * d_ + l] - x[l];
            second += w[k] * (-1.0 + diff * diff);
            first += w[k] * diff;
        }
        div[l] = second - first * first;
    }
    return div;
}

TruncatedRegressionModel::TruncatedRegressionModel(Vector covariates) : c_(std::move(covariates)) {
    if (c_.size() < 1) {
        throw std::invalid_argument("TruncatedRegressionModel: need at least one covariate");
    }
    if (!c_.allFinite()) {
        throw std::invalid_argument("TruncatedRegressionModel: covariates must be finite");
    }
}

Eigen::Index TruncatedRegressionModel::check_obs(std::optional<Eigen::Index> obs_index) const {
    if (!obs_index) {
        throw std::invalid_argument("TruncatedRegressionModel: obs_index is required");
    }
    if (*obs_index < 0 || *obs_index >= c_.size()) {
        throw std::invalid_argument("TruncatedRegressionModel: obs_index out of range");
    }
    return *obs_index;
}

Vector TruncatedRegressionModel::score(const Vector& x, const Vector& theta,
                                       std::optional<Eigen::Index> obs_index) const {
    check_args(x, theta, obs_index);
    const Eigen::Index i = check_obs(obs_index);
    Vector psi(1);
    // Unit noise variance: psi(y) = E[y | c_i] - y.
    psi[0] = theta[0] + theta[1] * c_[i] - x[0];
    return psi;
}

Matrix TruncatedRegressionModel::score_theta_jacobian(
    const Vector& x, const Vector& theta, std::optional<Eigen::Index> obs_index) const {
    check_args(x, theta, obs_index);
    const Eigen::Index i = check_obs(obs_index);
    Matrix jac(1, 2);
    jac << 1.0, c_[i];
    return jac;
}

Vector TruncatedRegressionModel::score_x_divergence(
    const Vector& x, const Vector& theta, std::optional<Eigen::Index> obs_index) const {
    check_args(x, theta, obs_index);
    check_obs(obs_index);
    return Vector::Constant(1, -1.0);
}

Vector ols_fit(const Vector& covariates, const Vector& responses) {
    const Eigen::Index n = covariates.size();
    if (n < 2 || responses.size() != n) {
        throw std::invalid_argument("ols_fit: need matching covariates/responses with n >= 2");
    }
    const double cbar = covariates.mean();
    const double ybar = responses.mean();
    const Vector cc = covariates.array() - cbar;
    const double scc = cc.squaredNorm();
    if (scc == 0.0) {
        throw DegenerateDataError("ols_fit: covariate is constant");
    }
    // Normal equations in centred form.
    const double beta1 = cc.dot((responses.array() - ybar).matrix()) / scc;
    Vector beta(2);
    beta << ybar - beta1 * cbar, beta1;
    return beta;
}

}  // namespace tksd
