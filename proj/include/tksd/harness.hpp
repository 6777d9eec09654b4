#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tksd/estimators.hpp"

namespace tksd {

// Flat experiment configuration.  Defaults depend on the experiment tag (see
// make_default_config); a JSON config file overrides individual keys and the
// CLI can override seeds / base_seed / out / threads on top of that.
struct ExperimentConfig {
    std::string experiment;

    Eigen::Index n = 0;
    Eigen::Index m = 0;
    int d = 2;
    int seeds = 64;
    std::uint64_t base_seed = 0;
    std::vector<std::string> methods;

    // Domain: an lp ball (radius 0 means "use the exponent convention
    // d^l{1,2}_exponent") or a polygon loaded from CSV (empty path means the
    // built-in synthetic fixture).
    int ball_p = 2;
    double ball_radius = 0.0;
    double l1_exponent = 0.98;
    double l2_exponent = 0.53;
    std::string polygon_path;

    // Model parameters.
    std::vector<double> mu_star;        // empty -> experiment default
    double sigma_scale = 1.0;           // data covariance = sigma_scale * I
    std::vector<double> beta_star = {3.0, 4.0};
    double truncation_point = 5.0;      // regression: keep y >= this
    double bias_strength = 2.0;         // boundary-dist scenario shift

    // Grid experiments.
    std::vector<Eigen::Index> n_list, m_list;
    std::vector<int> d_list, mode_list;

    // Approximate-distance parameters for the weighted baselines.
    int alpha = 2;
    double gamma = 1.0;

    // Retention / epsilon-table controls.
    Eigen::Index retention_draws = 1000;
    double l_scale = 1.0;               // epsilon-table: L = l_scale * d^2

    int threads = 1;
    std::string out;
    bool json_output = false;
};

// Defaults for a given experiment tag; throws on an unknown tag.
[[nodiscard]] ExperimentConfig make_default_config(const std::string& experiment);

// Parse a flat key-value JSON object on top of the tag's defaults.  Unknown
// keys and invalid values raise std::invalid_argument; the file variant maps
// JSON syntax errors to ParseError.
[[nodiscard]] ExperimentConfig parse_config_text(const std::string& text);
[[nodiscard]] ExperimentConfig load_config(const std::string& path);

// Validate cross-field invariants (n >= 2, seeds >= 1, nonempty methods,
// truncsm-exact only on l2 balls, ...).  Throws std::invalid_argument.
void validate_config(const ExperimentConfig& cfg);

// One fitted method on one seed's dataset.
struct TrialRecord {
    std::uint64_t seed = 0;
    std::string method;
    Eigen::Index n = 0;
    Eigen::Index m = 0;
    Eigen::Index d = 0;
    double error = 0.0;          // ||theta_hat - theta_star||_2
    double wall_time_ms = 0.0;   // fit call only
    bool converged = false;
    double acceptance_rate = 0.0;  // data generation; not serialised to CSV
    Vector theta_hat;
};

// Canonical output order: (seed, method, d, n, m).
void sort_records(std::vector<TrialRecord>& records);

// CSV with header seed,method,n,m,d,error,wall_time_ms,converged,theta_0...;
// doubles are written with 17 significant digits so emit/parse round-trips
// exactly.  Records with fewer theta components than the widest one get
// trailing empty cells.
[[nodiscard]] std::string records_to_csv(const std::vector<TrialRecord>& records);
[[nodiscard]] std::vector<TrialRecord> records_from_csv(const std::string& text);
[[nodiscard]] std::string records_to_json(const std::vector<TrialRecord>& records);

void write_text_file(const std::string& path, const std::string& text);

// The irregular 40-vertex polygon used as the shipped stand-in boundary; kept
// byte-identical with tests/data/synthetic40.csv.
[[nodiscard]] Polygon2D synthetic40_polygon();

// --- Runners -------------------------------------------------------------
// All runners share the trial protocol: the trial for seed index t draws from
// an independent stream seeded with base_seed + t, generates data before
// anything method-specific, and restarts the stream per grid cell, so methods
// and same-shaped cells see identical datasets.  Output is sorted; reruns with
// the same config are bit-identical regardless of thread count (timings aside).

std::vector<TrialRecord> run_estimate(const ExperimentConfig& cfg);
std::vector<TrialRecord> run_polygon_bench(const ExperimentConfig& cfg);
std::vector<TrialRecord> run_dim_bench(const ExperimentConfig& cfg);

struct ConsistencyResult {
    std::vector<Eigen::Index> n_list, m_list;
    Matrix mean_error;  // n_list.size() x m_list.size()
    std::vector<TrialRecord> records;
};
ConsistencyResult run_consistency(const ExperimentConfig& cfg);

std::vector<TrialRecord> run_mixture(const ExperimentConfig& cfg);

struct RegressionTrial {
    std::uint64_t seed = 0;
    double tksd_mse_unobs = 0.0, ols_mse_unobs = 0.0;
    double tksd_loglik_obs = 0.0, ols_loglik_obs = 0.0;
    double tksd_loglik_unobs = 0.0, ols_loglik_unobs = 0.0;
};
struct RegressionResult {
    std::vector<TrialRecord> records;          // methods tksd and mle
    std::vector<RegressionTrial> metrics;      // one per seed, in seed order
};
RegressionResult run_regression(const ExperimentConfig& cfg);

std::vector<TrialRecord> run_boundary_dist(const ExperimentConfig& cfg);

struct RetentionRow {
    int d = 0;
    double l1_radius = 0.0, l2_radius = 0.0;
    double l1_retention_pct = 0.0, l2_retention_pct = 0.0;
};
std::vector<RetentionRow> run_retention(const ExperimentConfig& cfg);
[[nodiscard]] std::string retention_to_csv(const std::vector<RetentionRow>& rows);

struct EpsilonRow {
    long m = 0;
    int d = 0;
    double surface = 0.0;  // L(V)
    double epsilon = 0.0;
};
std::vector<EpsilonRow> run_epsilon_table(const ExperimentConfig& cfg);
[[nodiscard]] std::string epsilon_table_to_csv(const std::vector<EpsilonRow>& rows);

}  // namespace tksd
