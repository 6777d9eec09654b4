#include "tksd/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace tksd {

namespace {

void check_bandwidth(const KernelConfig& cfg) {
    if (!(cfg.bandwidth > 0.0)) {
        throw std::invalid_argument("kernel bandwidth must be positive, got " +
                                    std::to_string(cfg.bandwidth));
    }
}

void check_jitter(const KernelConfig& cfg) {
    if (cfg.jitter && !(*cfg.jitter >= 0.0)) {
        throw std::invalid_argument("kernel jitter must be non-negative");
    }
    if (cfg.jitter_growth_limit < 1) {
        throw std::invalid_argument("jitter_growth_limit must be positive");
    }
}

}  // namespace

double median_heuristic(const Matrix& X) {
    const Eigen::Index n = X.rows();
    if (n < 2) {
        throw std::invalid_argument("median_heuristic needs at least 2 samples, got " +
                                    std::to_string(n));
    }
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            dist.push_back((X.row(i) - X.row(j)).norm());
        }
    }
    const std::size_t c = dist.size();
    const std::size_t mid = c / 2;
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
    double median = dist[mid];
    if (c % 2 == 0) {
        // Midpoint of the two middle order statistics.
        const double lower =
            *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
        median = 0.5 * (lower + median);
    }
    if (median == 0.0) {
        throw DegenerateDataError("median pairwise distance is zero (duplicate data)");
    }
    return median;
}

KernelBundle kernel_bundle(const Vector& x, const Vector& y, const KernelConfig& cfg) {
    check_bandwidth(cfg);
    if (x.size() != y.size()) {
        throw std::invalid_argument("kernel_bundle: dimension mismatch");
    }
    const double s2 = cfg.bandwidth * cfg.bandwidth;
    const Vector diff = x - y;
    const double k = std::exp(-diff.squaredNorm() / (2.0 * s2));

    KernelBundle b;
    b.k = k;
    b.dkx = -(diff / s2) * k;
    b.dky = -b.dkx;
    b.dkxy = (1.0 / s2 - diff.array().square() / (s2 * s2)).matrix() * k;
    return b;
}

Matrix gram(const Matrix& X, const Matrix& Y, const KernelConfig& cfg) {
    check_bandwidth(cfg);
    if (X.cols() != Y.cols()) {
        throw std::invalid_argument("gram: dimension mismatch between sample sets");
    }
    const double inv2s2 = 1.0 / (2.0 * cfg.bandwidth * cfg.bandwidth);
    Matrix K(X.rows(), Y.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < Y.rows(); ++j) {
            K(i, j) = std::exp(-(X.row(i) - Y.row(j)).squaredNorm() * inv2s2);
        }
    }
    return K;
}

Matrix grad_gram(const Matrix& X, const Matrix& Y, Eigen::Index l, const KernelConfig& cfg) {
    check_bandwidth(cfg);
    if (X.cols() != Y.cols()) {
        throw std::invalid_argument("grad_gram: dimension mismatch between sample sets");
    }
    if (l < 0 || l >= X.cols()) {
        throw std::invalid_argument("grad_gram: coordinate index out of range");
    }
    const double s2 = cfg.bandwidth * cfg.bandwidth;
    const double inv2s2 = 1.0 / (2.0 * s2);
    Matrix D(X.rows(), Y.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < Y.rows(); ++j) {
            const double k = std::exp(-(X.row(i) - Y.row(j)).squaredNorm() * inv2s2);
            D(i, j) = -((X(i, l) - Y(j, l)) / s2) * k;
        }
    }
    return D;
}

Matrix cross_grad_gram(const Matrix& X, const Matrix& Y, Eigen::Index l, const KernelConfig& cfg) {
    check_bandwidth(cfg);
    if (X.cols() != Y.cols()) {
        throw std::invalid_argument("cross_grad_gram: dimension mismatch between sample sets");
    }
    if (l < 0 || l >= X.cols()) {
        throw std::invalid_argument("cross_grad_gram: coordinate index out of range");
    }
    const double s2 = cfg.bandwidth * cfg.bandwidth;
    const double inv2s2 = 1.0 / (2.0 * s2);
    Matrix D(X.rows(), Y.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < Y.rows(); ++j) {
            const double k = std::exp(-(X.row(i) - Y.row(j)).squaredNorm() * inv2s2);
            const double dl = X(i, l) - Y(j, l);
            D(i, j) = k * (1.0 / s2 - dl * dl / (s2 * s2));
        }
    }
    return D;
}

SpdSolver::SpdSolver(const Matrix& K, const KernelConfig& cfg) {
    check_jitter(cfg);
    const Eigen::Index m = K.rows();
    if (m == 0 || K.cols() != m) {
        throw std::invalid_argument("SpdSolver: matrix must be square and non-empty");
    }
    const double scale = K.cwiseAbs().maxCoeff();
    if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0)) {
        throw std::invalid_argument("SpdSolver: matrix is not symmetric");
    }

    const double default_base = 1e-8 * K.trace() / static_cast<double>(m);
    const double initial = cfg.jitter ? *cfg.jitter : default_base;

    double eps = initial;
    for (int attempt = 0; attempt <= cfg.jitter_growth_limit; ++attempt) {
        Matrix Kj = K;
        Kj.diagonal().array() += eps;
        llt_.compute(Kj);
        if (llt_.info() == Eigen::Success) {
            jitter_used_ = eps;
            return;
        }
        // Escalate x10; a forced eps = 0 restarts from the default base.
        eps = eps > 0.0 ? eps * 10.0 : default_base;
    }
    throw NotPositiveDefiniteError("Cholesky failed after " +
                                   std::to_string(cfg.jitter_growth_limit) +
                                   " jitter escalations (last eps = " + std::to_string(eps) + ")");
}

Matrix SpdSolver::solve(const Matrix& B) const {
    if (B.rows() != dim()) {
        throw std::invalid_argument("SpdSolver::solve: right-hand side has wrong row count");
    }
    return llt_.solve(B);
}

Vector SpdSolver::solve(const Vector& b) const {
    if (b.size() != dim()) {
        throw std::invalid_argument("SpdSolver::solve: right-hand side has wrong size");
    }
    return llt_.solve(b);
}

SpdSolveResult regularized_spd_solve(const Matrix& K, const Matrix& B, const KernelConfig& cfg) {
    const SpdSolver solver(K, cfg);
    return {solver.solve(B), solver.jitter_used()};
}

}  // namespace tksd
