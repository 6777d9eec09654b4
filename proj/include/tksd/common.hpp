#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace tksd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Data that is structurally valid but unusable (e.g. all pairwise distances
// zero when picking a bandwidth).
struct DegenerateDataError : std::runtime_error {
    explicit DegenerateDataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Cholesky factorisation failed even after jitter escalation.
struct NotPositiveDefiniteError : std::runtime_error {
    explicit NotPositiveDefiniteError(const std::string& msg) : std::runtime_error(msg) {}
};

// Rejection sampling cannot reach the requested sample size (acceptance rate
// collapsed), or a domain admits no samples at all.
struct InfeasibleDomainError : std::runtime_error {
    explicit InfeasibleDomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (CSV / JSON); carries the 1-based line where parsing failed.
struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, long line_number)
        : std::runtime_error(msg + " (line " + std::to_string(line_number) + ")"),
          line(line_number) {}
    explicit ParseError(const std::string& msg) : std::runtime_error(msg), line(-1) {}
    long line;
};

}  // namespace tksd
