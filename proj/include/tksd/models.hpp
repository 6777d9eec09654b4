#pragma once

#include <optional>
#include <vector>

#include "tksd/common.hpp"

namespace tksd {

// Interface for an unnormalised density model through its score
// psi(x; theta) = grad_x log p_theta(x).  Estimators only ever touch the model
// through this interface, so normalising constants never appear.
//
// Conditional models (per-observation covariates) set is_conditional() and
// read the covariate through obs_index; unconditional models ignore it.
class ScoreModel {
public:
    virtual ~ScoreModel() = default;

    [[nodiscard]] virtual Eigen::Index dim_x() const = 0;
    [[nodiscard]] virtual Eigen::Index dim_theta() const = 0;
    [[nodiscard]] virtual bool affine_in_theta() const = 0;
    [[nodiscard]] virtual bool is_conditional() const { return false; }

    // psi(x; theta), a dim_x-vector.
    [[nodiscard]] virtual Vector score(const Vector& x, const Vector& theta,
                                       std::optional<Eigen::Index> obs_index = {}) const = 0;

    // d psi / d theta, a dim_x x dim_theta matrix.
    [[nodiscard]] virtual Matrix score_theta_jacobian(
        const Vector& x, const Vector& theta, std::optional<Eigen::Index> obs_index = {}) const = 0;

    // Same-coordinate divergence terms: entry l is d psi_l / d x_l.
    [[nodiscard]] virtual Vector score_x_divergence(
        const Vector& x, const Vector& theta, std::optional<Eigen::Index> obs_index = {}) const = 0;

    // d/d theta of score_x_divergence, a dim_x x dim_theta matrix.  Zero for
    // models affine in theta; the default falls back to central finite
    // differences with step 1e-5 * (1 + |theta_i|).
    [[nodiscard]] virtual Matrix score_x_divergence_theta_jacobian(
        const Vector& x, const Vector& theta, std::optional<Eigen::Index> obs_index = {}) const;

protected:
    void check_args(const Vector& x, const Vector& theta,
                    std::optional<Eigen::Index> obs_index) const;
};

// Multivariate Gaussian N(theta, Sigma) with known SPD covariance; theta is
// the mean.  score = Sigma^{-1} (theta - x).
class GaussianMeanModel final : public ScoreModel {
public:
    explicit GaussianMeanModel(Matrix sigma);

    [[nodiscard]] Eigen::Index dim_x() const override { return sigma_inv_.rows(); }
    [[nodiscard]] Eigen::Index dim_theta() const override { return sigma_inv_.rows(); }
    [[nodiscard]] bool affine_in_theta() const override { return true; }
    [[nodiscard]] Vector score(const Vector& x, const Vector& theta,
                               std::optional<Eigen::Index> obs_index = {}) const override;
    [[nodiscard]] Matrix score_theta_jacobian(
        const Vector& x, const Vector& theta,
        std::optional<Eigen::Index> obs_index = {}) const override;
    [[nodiscard]] Vector score_x_divergence(
        const Vector& x, const Vector& theta,
        std::optional<Eigen::Index> obs_index = {}) const override;

    [[nodiscard]] const Matrix& sigma_inverse() const { return sigma_inv_; }

private:
    Matrix sigma_inv_;
};

// Equal-weight Gaussian mixture with identity covariances; theta stacks the K
// component means [mu_1; ...; mu_K], so dim_theta = K * d.  The score is a
// softmax-weighted average of per-component scores and is not affine in theta.
class GaussianMixtureMeansModel final : public ScoreModel {
public:
    GaussianMixtureMeansModel(int num_components, int dim);

    [[nodiscard]] Eigen::Index dim_x() const override { return d_; }
    [[nodiscard]] Eigen::Index dim_theta() const override { return k_ * d_; }
    [[nodiscard]] bool affine_in_theta() const override { return false; }
    [[nodiscard]] Vector score(const Vector& x, const Vector& theta,
                               std::optional<Eigen::Index> obs_index = {}) const override;
    // Central finite differences, step 1e-5 * (1 + |theta_i|).
    [[nodiscard]] Matrix score_theta_jacobian(
        const Vector& x, const Vector& theta,
        std::optional<Eigen::Index> obs_index = {}) const override;
    [[nodiscard]] Vector score_x_divergence(
        const Vector& x, const Vector& theta,
        std::optional<Eigen::Index> obs_index = {}) const override;

    // Softmax responsibilities w_k(x) over -||x - mu_k||^2 / 2.
    [[nodiscard]] Vector responsibilities(const Vector& x, const Vector& theta) const;

private:
    Eigen::Index k_;
    Eigen::Index d_;
};

// Linear regression y = beta0 + beta1 c + eps, eps ~ N(0, 1), with responses
// truncated from below.  Operates in response space: dim_x = 1 and the model is
// conditional on the covariate c_i of each observation.
class TruncatedRegressionModel final : public ScoreModel {
public:
    explicit TruncatedRegressionModel(Vector covariates);

    [[nodiscard]] Eigen::Index dim_x() const override { return 1; }
    [[nodiscard]] Eigen::Index dim_theta() const override { return 2; }
    [[nodiscard]] bool affine_in_theta() const override { return true; }
    [[nodiscard]] bool is_conditional() const override { return true; }
    [[nodiscard]] Vector score(const Vector& x, const Vector& theta,
                               std::optional<Eigen::Index> obs_index = {}) const override;
    [[nodiscard]] Matrix score_theta_jacobian(
        const Vector& x, const Vector& theta,
        std::optional<Eigen::Index> obs_index = {}) const override;
    [[nodiscard]] Vector score_x_divergence(
        const Vector& x, const Vector& theta,
        std::optional<Eigen::Index> obs_index = {}) const override;

    [[nodiscard]] const Vector& covariates() const { return c_; }

private:
    Eigen::Index check_obs(std::optional<Eigen::Index> obs_index) const;
    Vector c_;
};

// Ordinary least squares for y = beta0 + beta1 c: closed-form normal-equation
// solution.  Throws DegenerateDataError when the covariate is constant.
[[nodiscard]] Vector ols_fit(const Vector& covariates, const Vector& responses);

}  // namespace tksd
