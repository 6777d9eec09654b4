#pragma once

#include <functional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "tksd/common.hpp"

namespace tksd {

// Closed lp ball {x : ||x - center||_p <= radius} for p in {1, 2}.
struct LpBall {
    int p = 2;
    double radius = 1.0;
    Vector center;
};

// Simple (non-self-intersecting) 2D polygon, implicitly closed.  Validated at
// construction with an O(K^2) pairwise edge-intersection scan.
class Polygon2D {
public:
    explicit Polygon2D(Matrix vertices);

    [[nodiscard]] const Matrix& vertices() const { return v_; }
    [[nodiscard]] Eigen::Index num_vertices() const { return v_.rows(); }
    // Even-odd ray casting; points exactly on an edge count as inside.
    [[nodiscard]] bool contains(double x, double y) const;
    [[nodiscard]] double perimeter() const { return cum_.back(); }
    // Minimum Euclidean distance from (x, y) to the polygon boundary.
    [[nodiscard]] double boundary_distance(double x, double y) const;
    // Largest absolute vertex coordinate; used as the scale for tolerances.
    [[nodiscard]] double scale() const { return scale_; }
    // cumulative_edge_lengths()[i] = total length of edges 0..i.
    [[nodiscard]] const std::vector<double>& cumulative_edge_lengths() const { return cum_; }

private:
    Matrix v_;
    std::vector<double> cum_;
    double scale_ = 0.0;
};

// Truncation domain: an lp ball in any dimension or a polygon in 2D.
class Domain {
public:
    static Domain lp_ball(int p, double radius, Vector center);
    static Domain polygon(Polygon2D poly);

    [[nodiscard]] Eigen::Index dim() const;
    [[nodiscard]] bool contains(const Vector& x) const;
    [[nodiscard]] const LpBall* as_ball() const { return std::get_if<LpBall>(&v_); }
    [[nodiscard]] const Polygon2D* as_polygon() const { return std::get_if<Polygon2D>(&v_); }

private:
    explicit Domain(std::variant<LpBall, Polygon2D> v) : v_(std::move(v)) {}
    std::variant<LpBall, Polygon2D> v_;
};

// Finite sample of boundary points, one per row.  When a domain is supplied the
// constructor checks every point lies on its boundary within 1e-9 * (1 + scale),
// where scale is the ball radius or the polygon's largest vertex coordinate.
struct BoundarySample {
    Matrix points;

    BoundarySample(Matrix pts);  // NOLINT(google-explicit-constructor): matrices convert freely
    BoundarySample(Matrix pts, const Domain& domain);

    [[nodiscard]] Eigen::Index m() const { return points.rows(); }
    [[nodiscard]] Eigen::Index dim() const { return points.cols(); }
};

// Directional bias for lp-ball boundary sampling: pre-normalisation draws are
// z ~ N(s * u, I).  s = 0 gives the norm-uniform baseline; u is used as given.
struct DirectionalBias {
    double s = 0.0;
    Vector u;
};

// Value and gradient of a (possibly approximate) distance-to-boundary function.
struct DistanceResult {
    double value = 0.0;
    Vector gradient;
};

struct RejectionResult {
    Matrix samples;
    double acceptance_rate = 0.0;
};

// m boundary points of an lp ball: x' = c + r * z / ||z||_p with z ~ N(s*u, I).
[[nodiscard]] Matrix sample_boundary_lp(const LpBall& ball, Eigen::Index m,
                                        const DirectionalBias& bias, std::mt19937_64& rng);

// m arc-length-uniform points on the polygon boundary.
[[nodiscard]] Matrix sample_boundary_polygon(const Polygon2D& poly, Eigen::Index m,
                                             std::mt19937_64& rng);

// Approximate distance min_j ||x - x'_j||_alpha ^ gamma over sampled boundary
// points (rows of `boundary`), with the gradient taken at the attaining point.
// Ties break to the lowest row index; at nondifferentiable points the gradient
// is the zero subgradient.
[[nodiscard]] DistanceResult approx_distance(const Vector& x, const Matrix& boundary, int alpha,
                                             double gamma);

// Exact distance r - ||x - c|| to the boundary of an l2 ball, for x inside it.
[[nodiscard]] DistanceResult exact_distance_l2ball(const Vector& x, const LpBall& ball);

// Draw proposals until n of them land inside the domain.  Throws
// InfeasibleDomainError when the acceptance rate is below 1e-4 after 1e6
// proposals.
[[nodiscard]] RejectionResult truncated_rejection_sample(
    const std::function<Vector(std::mt19937_64&)>& propose, const Domain& domain, Eigen::Index n,
    std::mt19937_64& rng);

// Boundary-coverage radius bound: (L / xi(d) * (1 - 0.05^(1/m)))^(1/d) with
// xi(d) = pi^(d/2) / Gamma(d/2 + 1) the unit-ball volume.
[[nodiscard]] double epsilon_lower_bound(long m, int d, double L);

// CSV I/O.  Polygon files are two numeric columns "x,y", one vertex per line,
// with an optional single header line; the closing edge is implicit.
[[nodiscard]] Polygon2D load_polygon_csv(const std::string& path);
[[nodiscard]] Matrix load_boundary_csv(const std::string& path);
// Writes 17 significant digits so a save/load round trip is bit-exact.
void save_boundary_csv(const std::string& path, const Matrix& points);

}  // namespace tksd
