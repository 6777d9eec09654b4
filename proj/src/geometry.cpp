#include "tksd/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace tksd {

namespace {

double lp_norm(const Vector& x, int p) {
    return p == 1 ? x.lpNorm<1>() : x.norm();
}

void validate_ball(const LpBall& ball) {
    if (ball.p != 1 && ball.p != 2) {
        throw std::invalid_argument("lp ball: p must be 1 or 2, got " + std::to_string(ball.p));
    }
    if (!(ball.radius > 0.0) || !std::isfinite(ball.radius)) {
        throw std::invalid_argument("lp ball: radius must be positive and finite");
    }
    if (ball.center.size() < 1 || !ball.center.allFinite()) {
        throw std::invalid_argument("lp ball: center must be non-empty and finite");
    }
}

// Cross product (b - a) x (p - a); sign gives the orientation of p wrt segment ab.
double cross(double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

// p is known collinear with segment ab; is it within the segment's bounding box?
bool within_box(double ax, double ay, double bx, double by, double px, double py) {
    return std::min(ax, bx) <= px && px <= std::max(ax, bx) && std::min(ay, by) <= py &&
           py <= std::max(ay, by);
}

// Proper or improper intersection of segments (p1,p2) and (p3,p4).
bool segments_intersect(double x1, double y1, double x2, double y2, double x3, double y3,
                        double x4, double y4) {
    const double d1 = cross(x3, y3, x4, y4, x1, y1);
    const double d2 = cross(x3, y3, x4, y4, x2, y2);
    const double d3 = cross(x1, y1, x2, y2, x3, y3);
    const double d4 = cross(x1, y1, x2, y2, x4, y4);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
        ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
        return true;
    }
    if (d1 == 0 && within_box(x3, y3, x4, y4, x1, y1)) return true;
    if (d2 == 0 && within_box(x3, y3, x4, y4, x2, y2)) return true;
    if (d3 == 0 && within_box(x1, y1, x2, y2, x3, y3)) return true;
    if (d4 == 0 && within_box(x1, y1, x2, y2, x4, y4)) return true;
    return false;
}

double point_segment_distance(double ax, double ay, double bx, double by, double px, double py) {
    const double vx = bx - ax;
    const double vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = 0.0;
    if (len2 > 0.0) {
        t = ((px - ax) * vx + (py - ay) * vy) / len2;
        t = std::clamp(t, 0.0, 1.0);
    }
    return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
}

}  // namespace

Polygon2D::Polygon2D(Matrix vertices) : v_(std::move(vertices)) {
    const Eigen::Index k = v_.rows();
    if (v_.cols() != 2) {
        throw std::invalid_argument("polygon vertices must have exactly 2 columns");
    }
    if (k < 3) {
        throw std::invalid_argument("polygon needs at least 3 vertices, got " + std::to_string(k));
    }
    if (!v_.allFinite()) {
        throw std::invalid_argument("polygon vertices must be finite");
    }
    for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::Index j = (i + 1) % k;
        if (v_(i, 0) == v_(j, 0) && v_(i, 1) == v_(j, 1)) {
            throw std::invalid_argument(
                "polygon has two identical consecutive vertices at index " + std::to_string(i) +
                " (a trailing duplicate of the first vertex also triggers this; the closing edge "
                "is implicit)");
        }
    }
    // Simplicity: no contact between non-adjacent edges.
    for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::Index i2 = (i + 1) % k;
        for (Eigen::Index j = i + 1; j < k; ++j) {
            const Eigen::Index j2 = (j + 1) % k;
            if (j == i2 || j2 == i) continue;  // adjacent edges share a vertex
            if (segments_intersect(v_(i, 0), v_(i, 1), v_(i2, 0), v_(i2, 1), v_(j, 0), v_(j, 1),
                                   v_(j2, 0), v_(j2, 1))) {
                throw std::invalid_argument("polygon is not simple: edges " + std::to_string(i) +
                                            " and " + std::to_string(j) + " intersect");
            }
        }
    }
    cum_.resize(static_cast<std::size_t>(k));
    double total = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::Index j = (i + 1) % k;
        total += std::hypot(v_(j, 0) - v_(i, 0), v_(j, 1) - v_(i, 1));
        cum_[static_cast<std::size_t>(i)] = total;
    }
    scale_ = v_.cwiseAbs().maxCoeff();
}

bool Polygon2D::contains(double x, double y) const {
    const Eigen::Index k = v_.rows();
    // Points exactly on an edge count as inside.
    for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::Index j = (i + 1) % k;
        if (cross(v_(i, 0), v_(i, 1), v_(j, 0), v_(j, 1), x, y) == 0.0 &&
            within_box(v_(i, 0), v_(i, 1), v_(j, 0), v_(j, 1), x, y)) {
            return true;
        }
    }
    // Even-odd rule with the half-open edge convention so rays through vertices
    // are counted once.
    bool inside = false;
    for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::Index j = (i + 1) % k;
        const double yi = v_(i, 1), yj = v_(j, 1);
        if ((yi > y) != (yj > y)) {
            const double xint = v_(i, 0) + (y - yi) / (yj - yi) * (v_(j, 0) - v_(i, 0));
            if (x < xint) inside = !inside;
        }
    }
    return inside;
}

double Polygon2D::boundary_distance(double x, double y) const {
    const Eigen::Index k = v_.rows();
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::Index j = (i + 1) % k;
        best = std::min(best,
                        point_segment_distance(v_(i, 0), v_(i, 1), v_(j, 0), v_(j, 1), x, y));
    }
    return best;
}

Domain Domain::lp_ball(int p, double radius, Vector center) {
    LpBall ball{p, radius, std::move(center)};
    validate_ball(ball);
    return Domain(std::variant<LpBall, Polygon2D>(std::move(ball)));
}

Domain Domain::polygon(Polygon2D poly) {
    return Domain(std::variant<LpBall, Polygon2D>(std::move(poly)));
}

Eigen::Index Domain::dim() const {
    if (const auto* ball = as_ball()) return ball->center.size();
    return 2;
}

bool Domain::contains(const Vector& x) const {
    if (x.size() != dim()) {
        throw std::invalid_argument("Domain::contains: point has wrong dimension");
    }
    if (const auto* ball = as_ball()) {
        return lp_norm(x - ball->center, ball->p) <= ball->radius;
    }
    return as_polygon()->contains(x[0], x[1]);
}

namespace {

void validate_boundary_points(const Matrix& pts) {
    if (pts.rows() < 1 || pts.cols() < 1) {
        throw std::invalid_argument("boundary sample must have at least one point");
    }
    if (!pts.allFinite()) {
        throw std::invalid_argument("boundary sample contains non-finite values");
    }
}

}  // namespace

BoundarySample::BoundarySample(Matrix pts) : points(std::move(pts)) {
    validate_boundary_points(points);
}

BoundarySample::BoundarySample(Matrix pts, const Domain& domain) : points(std::move(pts)) {
    validate_boundary_points(points);
    if (points.cols() != domain.dim()) {
        throw std::invalid_argument("boundary sample dimension does not match domain");
    }
    double scale = 0.0;
    if (const auto* ball = domain.as_ball()) {
        scale = ball->radius;
    } else {
        scale = domain.as_polygon()->scale();
    }
    const double tol = 1e-9 * (1.0 + scale);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        double off = 0.0;
        if (const auto* ball = domain.as_ball()) {
            off = std::abs(lp_norm(points.row(i).transpose() - ball->center, ball->p) -
                           ball->radius);
        } else {
            off = domain.as_polygon()->boundary_distance(points(i, 0), points(i, 1));
        }
        if (off > tol) {
            throw std::invalid_argument("boundary sample point " + std::to_string(i) +
                                        " is off the domain boundary by " + std::to_string(off));
        }
    }
}

Matrix sample_boundary_lp(const LpBall& ball, Eigen::Index m, const DirectionalBias& bias,
                          std::mt19937_64& rng) {
    validate_ball(ball);
    if (m < 1) {
        throw std::invalid_argument("sample_boundary_lp: m must be positive");
    }
    const Eigen::Index d = ball.center.size();
    if (bias.s != 0.0 && bias.u.size() != d) {
        throw std::invalid_argument("sample_boundary_lp: bias direction has wrong dimension");
    }
    std::normal_distribution<double> gauss;
    Matrix out(m, d);
    for (Eigen::Index i = 0; i < m; ++i) {
        Vector z(d);
        double norm = 0.0;
        do {
            for (Eigen::Index l = 0; l < d; ++l) z[l] = gauss(rng);
            if (bias.s != 0.0) z += bias.s * bias.u;
            norm = lp_norm(z, ball.p);
        } while (norm == 0.0);
        out.row(i) = (ball.center + (ball.radius / norm) * z).transpose();
    }
    return out;
}

Matrix sample_boundary_polygon(const Polygon2D& poly, Eigen::Index m, std::mt19937_64& rng) {
    if (m < 1) {
        throw std::invalid_argument("sample_boundary_polygon: m must be positive");
    }
    const auto& cum = poly.cumulative_edge_lengths();
    const Matrix& v = poly.vertices();
    const Eigen::Index k = v.rows();
    std::uniform_real_distribution<double> unif(0.0, poly.perimeter());
    Matrix out(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double t = unif(rng);
        const auto it = std::lower_bound(cum.begin(), cum.end(), t);
        const auto e = static_cast<Eigen::Index>(std::min(
            static_cast<std::size_t>(it - cum.begin()), static_cast<std::size_t>(k - 1)));
        const double prev = e == 0 ? 0.0 : cum[static_cast<std::size_t>(e - 1)];
        const double len = cum[static_cast<std::size_t>(e)] - prev;
        const double frac = len > 0.0 ? (t - prev) / len : 0.0;
        const Eigen::Index j = (e + 1) % k;
        out(i, 0) = v(e, 0) + frac * (v(j, 0) - v(e, 0));
        out(i, 1) = v(e, 1) + frac * (v(j, 1) - v(e, 1));
    }
    return out;
}

DistanceResult approx_distance(const Vector& x, const Matrix& boundary, int alpha, double gamma) {
    if (alpha != 1 && alpha != 2) {
        throw std::invalid_argument("approx_distance: alpha must be 1 or 2");
    }
    if (!(gamma > 0.0)) {
        throw std::invalid_argument("approx_distance: gamma must be positive");
    }
    if (boundary.rows() < 1 || boundary.cols() != x.size()) {
        throw std::invalid_argument("approx_distance: boundary shape mismatch");
    }
    Eigen::Index best = 0;
    double best_norm = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < boundary.rows(); ++j) {
        const double nj = lp_norm(x - boundary.row(j).transpose(), alpha);
        if (nj < best_norm) {  // strict: ties keep the lowest index
            best_norm = nj;
            best = j;
        }
    }
    DistanceResult res;
    res.value = std::pow(best_norm, gamma);
    res.gradient = Vector::Zero(x.size());
    if (best_norm == 0.0) {
        return res;  // zero subgradient at a coincident boundary point
    }
    const Vector diff = x - boundary.row(best).transpose();
    Vector unit(x.size());
    if (alpha == 2) {
        unit = diff / best_norm;
    } else {
        for (Eigen::Index l = 0; l < x.size(); ++l) {
            // sign(0) = 0 is the zero-subgradient choice on the l1 facets.
            unit[l] = diff[l] > 0.0 ? 1.0 : (diff[l] < 0.0 ? -1.0 : 0.0);
        }
    }
    res.gradient = gamma * std::pow(best_norm, gamma - 1.0) * unit;
    return res;
}

DistanceResult exact_distance_l2ball(const Vector& x, const LpBall& ball) {
    validate_ball(ball);
    if (ball.p != 2) {
        throw std::invalid_argument("exact_distance_l2ball: ball must use the l2 norm");
    }
    if (x.size() != ball.center.size()) {
        throw std::invalid_argument("exact_distance_l2ball: dimension mismatch");
    }
    const Vector diff = x - ball.center;
    const double nrm = diff.norm();
    if (nrm > ball.radius) {
        throw std::invalid_argument("exact_distance_l2ball: point lies outside the ball");
    }
    DistanceResult res;
    res.value = ball.radius - nrm;
    res.gradient = nrm == 0.0 ? Vector::Zero(x.size()) : Vector(-diff / nrm);
    return res;
}

RejectionResult truncated_rejection_sample(const std::function<Vector(std::mt19937_64&)>& propose,
                                           const Domain& domain, Eigen::Index n,
                                           std::mt19937_64& rng) {
    if (n < 1) {
        throw std::invalid_argument("truncated_rejection_sample: n must be positive");
    }
    constexpr long kCheckAfter = 1000000;
    constexpr double kMinRate = 1e-4;
    Matrix out(n, domain.dim());
    long proposed = 0;
    Eigen::Index accepted = 0;
    while (accepted < n) {
        const Vector z = propose(rng);
        if (z.size() != domain.dim()) {
            throw std::invalid_argument("truncated_rejection_sample: proposal dimension mismatch");
        }
        ++proposed;
        if (domain.contains(z)) {
            out.row(accepted++) = z.transpose();
        } else if (proposed >= kCheckAfter &&
                   static_cast<double>(accepted) < kMinRate * static_cast<double>(proposed)) {
            throw InfeasibleDomainError(
                "rejection sampling acceptance rate below 1e-4 after 1e6 proposals");
        }
    }
    return {std::move(out), static_cast<double>(accepted) / static_cast<double>(proposed)};
}

double epsilon_lower_bound(long m, int d, double L) {
    if (m < 1) throw std::invalid_argument("epsilon_lower_bound: m must be >= 1");
    if (d < 1) throw std::invalid_argument("epsilon_lower_bound: d must be >= 1");
    if (!(L > 0.0)) throw std::invalid_argument("epsilon_lower_bound: L must be positive");
    // Unit-ball volume xi(d) = pi^(d/2) / Gamma(d/2 + 1).
    const double xi = std::pow(M_PI, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
    // 1 - 0.05^(1/m) via expm1 to keep precision at large m.
    const double frac = -std::expm1(std::log(0.05) / static_cast<double>(m));
    return std::pow(L / xi * frac, 1.0 / d);
}

namespace {

// Parses one CSV line into doubles; returns false when a field is not a full
// numeric token (used to recognise an optional header).
bool parse_csv_doubles(const std::string& line, std::vector<double>& out) {
    out.clear();
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        std::string field = line.substr(
            start, comma == std::string::npos ? std::string::npos : comma - start);
        // Trim surrounding whitespace.
        const auto first = field.find_first_not_of(" \t");
        if (first == std::string::npos) return false;
        const auto last = field.find_last_not_of(" \t");
        field = field.substr(first, last - first + 1);

        char* end = nullptr;
        const double v = std::strtod(field.c_str(), &end);
        if (end != field.c_str() + field.size()) return false;
        out.push_back(v);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return true;
}

Matrix load_numeric_csv(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(std::string("cannot open ") + what + " file: " + path);
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    long line_no = 0;
    bool first_content_line = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) {
            if (in.peek() == std::char_traits<char>::eof()) break;  // trailing blank line
            throw ParseError(std::string(what) + ": blank line inside file", line_no);
        }
        std::vector<double> vals;
        if (!parse_csv_doubles(line, vals)) {
            if (first_content_line) {
                first_content_line = false;  // optional single header line
                continue;
            }
            throw ParseError(std::string(what) + ": non-numeric field", line_no);
        }
        first_content_line = false;
        for (const double v : vals) {
            if (!std::isfinite(v)) {
                throw ParseError(std::string(what) + ": non-finite value", line_no);
            }
        }
        if (!rows.empty() && vals.size() != rows.front().size()) {
            throw ParseError(std::string(what) + ": inconsistent column count", line_no);
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) {
        throw ParseError(std::string(what) + ": file has no data rows");
    }
    Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
            out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    return out;
}

}  // namespace

Polygon2D load_polygon_csv(const std::string& path) {
    const Matrix pts = load_numeric_csv(path, "polygon");
    if (pts.cols() != 2) {
        throw ParseError("polygon: expected exactly two numeric columns, got " +
                         std::to_string(pts.cols()));
    }
    if (pts.rows() < 3) {
        throw ParseError("polygon: fewer than 3 vertices");
    }
    return Polygon2D(pts);
}

Matrix load_boundary_csv(const std::string& path) {
    return load_numeric_csv(path, "boundary");
}

void save_boundary_csv(const std::string& path, const Matrix& points) {
    if (!points.allFinite()) {
        throw std::invalid_argument("save_boundary_csv: points must be finite");
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open file for writing: " + path);
    }
    char buf[64];
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        for (Eigen::Index j = 0; j < points.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", points(i, j));
            out << (j == 0 ? "" : ",") << buf;
        }
        out << '\n';
    }
    if (!out) {
        throw std::runtime_error("failed while writing: " + path);
    }
}

}  // namespace tksd
