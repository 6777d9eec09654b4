#include "tksd/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <thread>
#include <tuple>

namespace tksd {

namespace {

using nlohmann::json;

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

bool produces_records(const std::string& e) {
    return e != "retention" && e != "epsilon-table";
}

Eigen::Index get_index(const json& v, const std::string& key) {
    if (!v.is_number_integer()) {
        throw std::invalid_argument("config key \"" + key + "\" must be an integer");
    }
    return v.get<Eigen::Index>();
}

double get_double(const json& v, const std::string& key) {
    if (!v.is_number()) {
        throw std::invalid_argument("config key \"" + key + "\" must be a number");
    }
    return v.get<double>();
}

std::string get_string(const json& v, const std::string& key) {
    if (!v.is_string()) {
        throw std::invalid_argument("config key \"" + key + "\" must be a string");
    }
    return v.get<std::string>();
}

template <typename T>
std::vector<T> get_list(const json& v, const std::string& key) {
    if (!v.is_array() || v.empty()) {
        throw std::invalid_argument("config key \"" + key + "\" must be a non-empty array");
    }
    std::vector<T> out;
    for (const auto& item : v) {
        if constexpr (std::is_same_v<T, std::string>) {
            out.push_back(get_string(item, key));
        } else if constexpr (std::is_floating_point_v<T>) {
            out.push_back(static_cast<T>(get_double(item, key)));
        } else {
            out.push_back(static_cast<T>(get_index(item, key)));
        }
    }
    return out;
}

const std::vector<std::string>& allowed_methods(const std::string& experiment) {
    static const std::vector<std::string> ball = {"tksd", "truncsm-exact", "truncsm-approx",
                                                  "bdksd-approx"};
    static const std::vector<std::string> polygon = {"tksd", "truncsm-approx", "bdksd-approx"};
    static const std::vector<std::string> regression = {"tksd", "mle"};
    static const std::vector<std::string> scenarios = {"tksd-toward", "tksd-away",
                                                       "tksd-uniform"};
    if (experiment == "dim-bench" || experiment == "consistency") return ball;
    if (experiment == "regression") return regression;
    if (experiment == "boundary-dist") return scenarios;
    return polygon;
}

Vector to_vector(const std::vector<double>& v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
    return out;
}

// ---------------------------------------------------------------------------
// Parallel trial execution
// ---------------------------------------------------------------------------

// Tasks only write to their own result slot, so the outcome is identical for
// any worker count; the first exception wins and stops remaining tasks.
void run_parallel(std::vector<std::function<void()>>& tasks, int threads) {
    threads = std::max(1, std::min<int>(threads, static_cast<int>(tasks.size())));
    if (threads == 1) {
        for (auto& task : tasks) task();
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex mu;
    std::exception_ptr first;
    auto worker = [&] {
        while (!failed.load(std::memory_order_relaxed)) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) break;
            try {
                tasks[i]();
            } catch (...) {
                const std::lock_guard<std::mutex> lock(mu);
                if (!first) first = std::current_exception();
                failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first) std::rethrow_exception(first);
}

// ---------------------------------------------------------------------------
// Data generation
// ---------------------------------------------------------------------------

struct GenResult {
    Matrix X;
    double acceptance = 0.0;
};

GenResult generate_truncated(Eigen::Index n, const Vector& mean, double spread,
                             const Domain& dom, std::mt19937_64& rng, std::uint64_t seed) {
    std::normal_distribution<double> gauss;
    auto propose = [&](std::mt19937_64& r) {
        Vector z(mean.size());
        for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = mean[k] + spread * gauss(r);
        return z;
    };
    try {
        RejectionResult rr = truncated_rejection_sample(propose, dom, n, rng);
        return {std::move(rr.samples), rr.acceptance_rate};
    } catch (const InfeasibleDomainError& e) {
        throw InfeasibleDomainError(std::string(e.what()) + " (seed " + std::to_string(seed) +
                                    ")");
    }
}

// ---------------------------------------------------------------------------
// One method fit -> one record
// ---------------------------------------------------------------------------

struct TrialSetup {
    const ScoreModel* model = nullptr;
    const Matrix* X = nullptr;
    const Matrix* boundary = nullptr;
    const LpBall* ball = nullptr;  // exact-distance methods only
    KernelConfig kernel;
    Vector theta_star;
    OptConfig opt;
    int alpha = 2;
    double gamma = 1.0;
};

double elapsed_ms(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

TrialRecord fit_method(const std::string& method, const TrialSetup& s, std::uint64_t seed,
                       double acceptance) {
    TrialRecord rec;
    rec.seed = seed;
    rec.method = method;
    rec.n = s.X->rows();
    rec.m = s.boundary->rows();
    rec.d = s.X->cols();
    rec.acceptance_rate = acceptance;

    const auto t0 = std::chrono::steady_clock::now();
    FitResult fit;
    if (method == "tksd" || method.rfind("tksd-", 0) == 0) {
        const TksdWorkspace ws(*s.X, BoundarySample(*s.boundary), s.kernel);
        fit = fit_tksd(*s.model, ws, s.opt);
    } else if (method == "truncsm-approx") {
        fit = fit_truncsm(*s.model, *s.X, ApproxDistance{*s.boundary, s.alpha, s.gamma}, s.opt);
    } else if (method == "truncsm-exact") {
        fit = fit_truncsm(*s.model, *s.X, ExactL2Distance{*s.ball}, s.opt);
    } else if (method == "bdksd-approx") {
        fit = fit_bdksd(*s.model, *s.X, ApproxDistance{*s.boundary, s.alpha, s.gamma}, s.kernel,
                        s.opt);
    } else {
        throw std::invalid_argument("unknown method: " + method);
    }
    rec.wall_time_ms = elapsed_ms(t0);
    rec.theta_hat = fit.theta_hat;
    rec.error = (fit.theta_hat - s.theta_star).norm();
    rec.converged = fit.converged;
    return rec;
}

std::vector<TrialRecord> flatten_sorted(std::vector<std::vector<TrialRecord>>& slots) {
    std::vector<TrialRecord> out;
    for (auto& slot : slots) {
        for (auto& rec : slot) out.push_back(std::move(rec));
    }
    sort_records(out);
    return out;
}

// Polygon-domain Gaussian-mean trials shared by estimate and polygon-bench.
std::vector<TrialRecord> run_polygon_cells(const ExperimentConfig& cfg,
                                           const std::vector<Eigen::Index>& m_values) {
    const Polygon2D poly = cfg.polygon_path.empty() ? synthetic40_polygon()
                                                    : load_polygon_csv(cfg.polygon_path);
    const Domain dom = Domain::polygon(poly);
    Vector mu(2);
    if (cfg.mu_star.empty()) {
        mu << -115.0, 35.0;
    } else {
        mu = to_vector(cfg.mu_star);
    }
    const GaussianMeanModel model(cfg.sigma_scale * Matrix::Identity(2, 2));
    const double spread = std::sqrt(cfg.sigma_scale);

    std::vector<std::vector<TrialRecord>> slots(m_values.size() *
                                                static_cast<std::size_t>(cfg.seeds));
    std::vector<std::function<void()>> tasks;
    for (std::size_t c = 0; c < m_values.size(); ++c) {
        for (int t = 0; t < cfg.seeds; ++t) {
            tasks.emplace_back([&, c, t] {
                const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(t);
                std::mt19937_64 rng(seed);
                const GenResult gen = generate_truncated(cfg.n, mu, spread, dom, rng, seed);
                const Matrix bpts = sample_boundary_polygon(poly, m_values[c], rng);
                TrialSetup setup;
                setup.model = &model;
                setup.X = &gen.X;
                setup.boundary = &bpts;
                setup.kernel.bandwidth = median_heuristic(gen.X);
                setup.theta_star = mu;
                setup.alpha = cfg.alpha;
                setup.gamma = cfg.gamma;
                auto& slot = slots[c * static_cast<std::size_t>(cfg.seeds) +
                                   static_cast<std::size_t>(t)];
                for (const auto& method : cfg.methods) {
                    slot.push_back(fit_method(method, setup, seed, gen.acceptance));
                }
            });
        }
    }
    run_parallel(tasks, cfg.threads);
    return flatten_sorted(slots);
}

double ball_radius_for(const ExperimentConfig& cfg, int d) {
    if (cfg.ball_radius > 0.0) return cfg.ball_radius;
    const double expo = cfg.ball_p == 1 ? cfg.l1_exponent : cfg.l2_exponent;
    return std::pow(static_cast<double>(d), expo);
}

// Canonical mixture modes: the first k of the four box corners at +-1.5.
Vector mixture_truth(int modes) {
    const double c = 1.5;
    const double all[] = {c, c, -c, -c, -c, c, c, -c};
    Vector out(2 * modes);
    for (int i = 0; i < 2 * modes; ++i) out[i] = all[i];
    return out;
}

double normal_loglik(const Vector& y, const Vector& mean) {
    return -0.5 * (y - mean).squaredNorm() -
           0.5 * static_cast<double>(y.size()) * std::log(2.0 * M_PI);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config API
// ---------------------------------------------------------------------------

ExperimentConfig make_default_config(const std::string& experiment) {
    ExperimentConfig cfg;
    cfg.experiment = experiment;
    if (experiment == "estimate") {
        cfg.n = 400;
        cfg.m = 32;
        cfg.methods = {"tksd", "truncsm-approx"};
        cfg.mu_star = {-115.0, 35.0};
        cfg.sigma_scale = 10.0;
    } else if (experiment == "polygon-bench") {
        cfg.n = 400;
        cfg.m_list = {8, 32, 128};
        cfg.methods = {"tksd", "truncsm-approx"};
        cfg.mu_star = {-115.0, 35.0};
        cfg.sigma_scale = 10.0;
    } else if (experiment == "dim-bench") {
        cfg.n = 300;
        cfg.d_list = {2, 4, 8};
        cfg.methods = {"tksd", "truncsm-exact", "truncsm-approx", "bdksd-approx"};
    } else if (experiment == "consistency") {
        cfg.n_list = {64, 128, 256, 512};
        cfg.m_list = {4, 8, 16, 32};
        cfg.methods = {"tksd"};
        cfg.mu_star = {0.5, 0.5};
    } else if (experiment == "mixture") {
        cfg.n_list = {100, 300};
        cfg.mode_list = {2, 4};
        cfg.m = 200;
        cfg.seeds = 8;  // descent fits dominate the runtime; keep the default light
        cfg.methods = {"tksd", "truncsm-approx"};
    } else if (experiment == "regression") {
        cfg.n = 200;
        cfg.m = 1;
        cfg.d = 1;
        cfg.methods = {"tksd", "mle"};
    } else if (experiment == "boundary-dist") {
        cfg.n = 400;
        cfg.m = 30;
        cfg.methods = {"tksd-toward", "tksd-away", "tksd-uniform"};
        cfg.mu_star = {1.0, 1.0};
        cfg.ball_radius = 1.0;
    } else if (experiment == "retention") {
        cfg.d_list = {2, 3, 4, 5, 6, 7, 8, 9, 10};
    } else if (experiment == "epsilon-table") {
        cfg.d_list = {2, 5, 10};
    } else {
        throw std::invalid_argument("unknown experiment: " + experiment);
    }
    return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
    const std::string& e = cfg.experiment;
    if (cfg.seeds < 1) throw std::invalid_argument("seeds must be >= 1");
    if (cfg.threads < 1) throw std::invalid_argument("threads must be >= 1");
    if (cfg.sigma_scale <= 0.0) throw std::invalid_argument("sigma_scale must be positive");
    if (cfg.alpha != 1 && cfg.alpha != 2) throw std::invalid_argument("alpha must be 1 or 2");
    if (cfg.gamma <= 0.0) throw std::invalid_argument("gamma must be positive");
    if (cfg.ball_p != 1 && cfg.ball_p != 2) throw std::invalid_argument("ball_p must be 1 or 2");
    if (cfg.ball_radius < 0.0) throw std::invalid_argument("ball_radius must be non-negative");

    if (produces_records(e)) {
        if (cfg.methods.empty()) throw std::invalid_argument("methods must be non-empty");
        const auto& allowed = allowed_methods(e);
        for (const auto& method : cfg.methods) {
            if (std::find(allowed.begin(), allowed.end(), method) == allowed.end()) {
                throw std::invalid_argument("method \"" + method +
                                            "\" is not available for experiment " + e);
            }
        }
    }
    const bool has_exact = std::find(cfg.methods.begin(), cfg.methods.end(), "truncsm-exact") !=
                           cfg.methods.end();
    if (has_exact && cfg.ball_p != 2) {
        throw std::invalid_argument("truncsm-exact requires an l2-ball domain");
    }

    auto require_n = [&](Eigen::Index n) {
        if (n < 2) throw std::invalid_argument("n must be >= 2");
    };
    auto require_m = [&](Eigen::Index m) {
        if (m < 1) throw std::invalid_argument("m must be >= 1");
    };

    if (e == "estimate" || e == "regression" || e == "boundary-dist") {
        require_n(cfg.n);
        require_m(cfg.m);
    } else if (e == "polygon-bench") {
        require_n(cfg.n);
        if (cfg.m_list.empty()) throw std::invalid_argument("m_list must be non-empty");
        for (const auto m : cfg.m_list) require_m(m);
    } else if (e == "dim-bench") {
        require_n(cfg.n);
        if (cfg.d_list.empty()) throw std::invalid_argument("d_list must be non-empty");
        for (const int d : cfg.d_list) {
            if (d < 1) throw std::invalid_argument("dimensions must be >= 1");
        }
    } else if (e == "consistency") {
        if (cfg.n_list.empty() || cfg.m_list.empty()) {
            throw std::invalid_argument("n_list and m_list must be non-empty");
        }
        for (const auto n : cfg.n_list) require_n(n);
        for (const auto m : cfg.m_list) require_m(m);
        if (std::find(cfg.methods.begin(), cfg.methods.end(), "tksd") == cfg.methods.end()) {
            throw std::invalid_argument("consistency requires the tksd method");
        }
    } else if (e == "mixture") {
        require_m(cfg.m);
        if (cfg.n_list.empty() || cfg.mode_list.empty()) {
            throw std::invalid_argument("n_list and mode_list must be non-empty");
        }
        for (const auto n : cfg.n_list) require_n(n);
        for (const int k : cfg.mode_list) {
            if (k < 1 || k > 4) throw std::invalid_argument("mode counts must be in 1..4");
        }
    } else if (e == "retention" || e == "epsilon-table") {
        if (cfg.d_list.empty()) throw std::invalid_argument("d_list must be non-empty");
        for (const int d : cfg.d_list) {
            if (d < 1) throw std::invalid_argument("dimensions must be >= 1");
        }
        if (cfg.retention_draws < 1) {
            throw std::invalid_argument("retention_draws must be >= 1");
        }
        if (cfg.l_scale <= 0.0) throw std::invalid_argument("l_scale must be positive");
    }

    if (!cfg.mu_star.empty()) {
        const bool fixed_2d = e == "estimate" || e == "polygon-bench" || e == "consistency" ||
                              e == "boundary-dist";
        if (fixed_2d && cfg.mu_star.size() != 2) {
            throw std::invalid_argument("mu_star must have 2 components for this experiment");
        }
        if (!fixed_2d) {
            throw std::invalid_argument("mu_star is not used by experiment " + e);
        }
    }
    if (cfg.beta_star.size() != 2) {
        throw std::invalid_argument("beta_star must have 2 components");
    }
    if (e == "boundary-dist" && !std::isfinite(cfg.bias_strength)) {
        throw std::invalid_argument("bias_strength must be finite");
    }
}

ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& err) {
        long line = 1;
        const std::size_t limit = std::min<std::size_t>(err.byte, text.size());
        for (std::size_t i = 0; i < limit; ++i) {
            if (text[i] == '\n') ++line;
        }
        throw ParseError(std::string("invalid JSON: ") + err.what(), line);
    }
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    if (!j.contains("experiment")) throw std::invalid_argument("config missing \"experiment\"");
    ExperimentConfig cfg = make_default_config(get_string(j.at("experiment"), "experiment"));

    for (const auto& [key, val] : j.items()) {
        if (key == "experiment") {
            continue;
        } else if (key == "n") {
            cfg.n = get_index(val, key);
        } else if (key == "m") {
            cfg.m = get_index(val, key);
        } else if (key == "d") {
            cfg.d = static_cast<int>(get_index(val, key));
        } else if (key == "seeds") {
            cfg.seeds = static_cast<int>(get_index(val, key));
        } else if (key == "base_seed") {
            cfg.base_seed = static_cast<std::uint64_t>(get_index(val, key));
        } else if (key == "methods") {
            cfg.methods = get_list<std::string>(val, key);
        } else if (key == "ball_p") {
            cfg.ball_p = static_cast<int>(get_index(val, key));
        } else if (key == "ball_radius") {
            cfg.ball_radius = get_double(val, key);
        } else if (key == "l1_exponent") {
            cfg.l1_exponent = get_double(val, key);
        } else if (key == "l2_exponent") {
            cfg.l2_exponent = get_double(val, key);
        } else if (key == "polygon_path") {
            cfg.polygon_path = get_string(val, key);
        } else if (key == "mu_star") {
            cfg.mu_star = get_list<double>(val, key);
        } else if (key == "sigma_scale") {
            cfg.sigma_scale = get_double(val, key);
        } else if (key == "beta_star") {
            cfg.beta_star = get_list<double>(val, key);
        } else if (key == "truncation_point") {
            cfg.truncation_point = get_double(val, key);
        } else if (key == "bias_strength") {
            cfg.bias_strength = get_double(val, key);
        } else if (key == "n_list") {
            cfg.n_list = get_list<Eigen::Index>(val, key);
        } else if (key == "m_list") {
            cfg.m_list = get_list<Eigen::Index>(val, key);
        } else if (key == "d_list") {
            cfg.d_list = get_list<int>(val, key);
        } else if (key == "mode_list") {
            cfg.mode_list = get_list<int>(val, key);
        } else if (key == "alpha") {
            cfg.alpha = static_cast<int>(get_index(val, key));
        } else if (key == "gamma") {
            cfg.gamma = get_double(val, key);
        } else if (key == "retention_draws") {
            cfg.retention_draws = get_index(val, key);
        } else if (key == "l_scale") {
            cfg.l_scale = get_double(val, key);
        } else if (key == "threads") {
            cfg.threads = static_cast<int>(get_index(val, key));
        } else if (key == "out") {
            cfg.out = get_string(val, key);
        } else if (key == "json") {
            if (!val.is_boolean()) {
                throw std::invalid_argument("config key \"json\" must be a boolean");
            }
            cfg.json_output = val.get<bool>();
        } else {
            throw std::invalid_argument("unknown config key: " + key);
        }
    }
    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

// ---------------------------------------------------------------------------
// Records and serialisation
// ---------------------------------------------------------------------------

void sort_records(std::vector<TrialRecord>& records) {
    std::sort(records.begin(), records.end(), [](const TrialRecord& a, const TrialRecord& b) {
        return std::tie(a.seed, a.method, a.d, a.n, a.m) <
               std::tie(b.seed, b.method, b.d, b.n, b.m);
    });
}

std::string records_to_csv(const std::vector<TrialRecord>& records) {
    Eigen::Index p = 0;
    for (const auto& r : records) p = std::max(p, r.theta_hat.size());
    std::string out = "seed,method,n,m,d,error,wall_time_ms,converged";
    for (Eigen::Index j = 0; j < p; ++j) out += ",theta_" + std::to_string(j);
    out += "\n";
    for (const auto& r : records) {
        out += std::to_string(r.seed) + ',' + r.method + ',' + std::to_string(r.n) + ',' +
               std::to_string(r.m) + ',' + std::to_string(r.d) + ',' + fmt_double(r.error) +
               ',' + fmt_double(r.wall_time_ms) + ',' + (r.converged ? "1" : "0");
        for (Eigen::Index j = 0; j < p; ++j) {
            out += ',';
            if (j < r.theta_hat.size()) out += fmt_double(r.theta_hat[j]);
        }
        out += '\n';
    }
    return out;
}

std::vector<TrialRecord> records_from_csv(const std::string& text) {
    std::vector<std::string> lines = split(text, '\n');
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw ParseError("empty records file", 1);

    const std::vector<std::string> header = split(lines[0], ',');
    const std::vector<std::string> fixed = {"seed", "method",       "n",        "m",
                                            "d",    "error",        "wall_time_ms",
                                            "converged"};
    if (header.size() < fixed.size()) throw ParseError("malformed records header", 1);
    for (std::size_t i = 0; i < fixed.size(); ++i) {
        if (header[i] != fixed[i]) throw ParseError("malformed records header", 1);
    }
    const std::size_t p = header.size() - fixed.size();
    for (std::size_t j = 0; j < p; ++j) {
        if (header[fixed.size() + j] != "theta_" + std::to_string(j)) {
            throw ParseError("malformed theta columns in header", 1);
        }
    }

    auto parse_double = [](const std::string& tok, long line) {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size() || tok.empty()) {
            throw ParseError("invalid numeric field \"" + tok + "\"", line);
        }
        return v;
    };

    std::vector<TrialRecord> out;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const long line_no = static_cast<long>(li) + 1;
        if (lines[li].empty()) throw ParseError("blank line in records file", line_no);
        const std::vector<std::string> tok = split(lines[li], ',');
        if (tok.size() != header.size()) {
            throw ParseError("wrong number of fields", line_no);
        }
        TrialRecord r;
        r.seed = static_cast<std::uint64_t>(std::stoull(tok[0]));
        r.method = tok[1];
        r.n = static_cast<Eigen::Index>(std::stoll(tok[2]));
        r.m = static_cast<Eigen::Index>(std::stoll(tok[3]));
        r.d = static_cast<Eigen::Index>(std::stoll(tok[4]));
        r.error = parse_double(tok[5], line_no);
        r.wall_time_ms = parse_double(tok[6], line_no);
        if (tok[7] == "1") {
            r.converged = true;
        } else if (tok[7] == "0") {
            r.converged = false;
        } else {
            throw ParseError("converged flag must be 0 or 1", line_no);
        }
        std::size_t count = 0;
        while (count < p && !tok[fixed.size() + count].empty()) ++count;
        for (std::size_t j = count; j < p; ++j) {
            if (!tok[fixed.size() + j].empty()) {
                throw ParseError("theta fields must be a contiguous prefix", line_no);
            }
        }
        r.theta_hat.resize(static_cast<Eigen::Index>(count));
        for (std::size_t j = 0; j < count; ++j) {
            r.theta_hat[static_cast<Eigen::Index>(j)] = parse_double(tok[fixed.size() + j],
                                                                     line_no);
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::string records_to_json(const std::vector<TrialRecord>& records) {
    json arr = json::array();
    for (const auto& r : records) {
        json obj;
        obj["seed"] = r.seed;
        obj["method"] = r.method;
        obj["n"] = r.n;
        obj["m"] = r.m;
        obj["d"] = r.d;
        obj["error"] = r.error;
        obj["wall_time_ms"] = r.wall_time_ms;
        obj["converged"] = r.converged;
        obj["theta_hat"] = std::vector<double>(r.theta_hat.data(),
                                               r.theta_hat.data() + r.theta_hat.size());
        arr.push_back(std::move(obj));
    }
    return arr.dump(2) + "\n";
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << text;
    if (!out) throw std::runtime_error("failed writing output file: " + path);
}

Polygon2D synthetic40_polygon() {
    // Hand-drawn irregular outline in longitude/latitude-like units, ~58 wide
    // and ~24 tall, with long straight stretches, jagged coastal runs, a deep
    // southern peninsula, and a concave corner wrapping the default data mean
    // (-115, 35) at roughly 0.8 standard deviations of the default spread.
    constexpr double kVerts[40][2] = {
        {-117.3, 32.7},  {-118.3, 34.0}, {-122.4, 37.8}, {-124.4, 40.4}, {-124.1, 43.5},
        {-124.7, 48.4},  {-122.8, 49.0}, {-109.0, 49.0}, {-95.2, 49.0},  {-88.4, 48.3},
        {-84.1, 46.5},   {-82.4, 45.0},  {-82.5, 42.9},  {-78.9, 42.9},  {-74.7, 45.0},
        {-71.5, 45.0},   {-69.2, 47.45}, {-66.9, 44.8},  {-70.7, 43.1},  {-70.0, 41.8},
        {-74.0, 40.6},   {-75.5, 38.0},  {-75.5, 35.2},  {-79.9, 32.8},  {-81.5, 30.7},
        {-80.5, 28.5},   {-80.1, 25.8},  {-81.8, 25.2},  {-82.7, 27.9},  {-84.0, 30.1},
        {-87.5, 30.3},   {-89.1, 29.0},  {-93.8, 29.7},  {-97.1, 25.9},  {-99.5, 27.5},
        {-101.4, 29.8},  {-103.1, 29.0}, {-106.5, 31.8}, {-111.1, 31.3}, {-114.8, 32.5},
    };
    Matrix v(40, 2);
    for (Eigen::Index i = 0; i < 40; ++i) {
        v(i, 0) = kVerts[i][0];
        v(i, 1) = kVerts[i][1];
    }
    return Polygon2D(v);
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

std::vector<TrialRecord> run_estimate(const ExperimentConfig& cfg) {
    validate_config(cfg);
    return run_polygon_cells(cfg, {cfg.m});
}

std::vector<TrialRecord> run_polygon_bench(const ExperimentConfig& cfg) {
    validate_config(cfg);
    return run_polygon_cells(cfg, cfg.m_list);
}

std::vector<TrialRecord> run_dim_bench(const ExperimentConfig& cfg) {
    validate_config(cfg);
    std::vector<std::vector<TrialRecord>> slots(cfg.d_list.size() *
                                                static_cast<std::size_t>(cfg.seeds));
    std::vector<std::function<void()>> tasks;
    for (std::size_t c = 0; c < cfg.d_list.size(); ++c) {
        for (int t = 0; t < cfg.seeds; ++t) {
            tasks.emplace_back([&, c, t] {
                const int d = cfg.d_list[c];
                const Eigen::Index m = cfg.m > 0 ? cfg.m : 2 * static_cast<Eigen::Index>(d) * d;
                LpBall ball;
                ball.p = cfg.ball_p;
                ball.radius = ball_radius_for(cfg, d);
                ball.center = Vector::Zero(d);
                const Domain dom = Domain::lp_ball(ball.p, ball.radius, ball.center);
                const GaussianMeanModel model(Matrix::Identity(d, d));
                const Vector mu = Vector::Constant(d, 0.5);

                const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(t);
                std::mt19937_64 rng(seed);
                const GenResult gen = generate_truncated(cfg.n, mu, 1.0, dom, rng, seed);
                const Matrix bpts = sample_boundary_lp(ball, m, DirectionalBias{}, rng);

                TrialSetup setup;
                setup.model = &model;
                setup.X = &gen.X;
                setup.boundary = &bpts;
                setup.ball = &ball;
                setup.kernel.bandwidth = median_heuristic(gen.X);
                setup.theta_star = mu;
                setup.alpha = cfg.alpha;
                setup.gamma = cfg.gamma;
                auto& slot = slots[c * static_cast<std::size_t>(cfg.seeds) +
                                   static_cast<std::size_t>(t)];
                for (const auto& method : cfg.methods) {
                    slot.push_back(fit_method(method, setup, seed, gen.acceptance));
                }
            });
        }
    }
    run_parallel(tasks, cfg.threads);
    return flatten_sorted(slots);
}

ConsistencyResult run_consistency(const ExperimentConfig& cfg) {
    validate_config(cfg);
    LpBall ball;
    ball.p = 2;
    ball.radius = ball_radius_for(cfg, 2);
    ball.center = Vector::Zero(2);
    const Domain dom = Domain::lp_ball(ball.p, ball.radius, ball.center);
    const GaussianMeanModel model(Matrix::Identity(2, 2));
    const Vector mu = cfg.mu_star.empty() ? Vector::Constant(2, 0.5) : to_vector(cfg.mu_star);

    const std::size_t cells = cfg.n_list.size() * cfg.m_list.size();
    std::vector<std::vector<TrialRecord>> slots(cells * static_cast<std::size_t>(cfg.seeds));
    std::vector<std::function<void()>> tasks;
    for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
        for (std::size_t mi = 0; mi < cfg.m_list.size(); ++mi) {
            for (int t = 0; t < cfg.seeds; ++t) {
                tasks.emplace_back([&, ni, mi, t] {
                    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(t);
                    std::mt19937_64 rng(seed);
                    const GenResult gen =
                        generate_truncated(cfg.n_list[ni], mu, 1.0, dom, rng, seed);
                    const Matrix bpts =
                        sample_boundary_lp(ball, cfg.m_list[mi], DirectionalBias{}, rng);
                    TrialSetup setup;
                    setup.model = &model;
                    setup.X = &gen.X;
                    setup.boundary = &bpts;
                    setup.ball = &ball;
                    setup.kernel.bandwidth = median_heuristic(gen.X);
                    setup.theta_star = mu;
                    setup.alpha = cfg.alpha;
                    setup.gamma = cfg.gamma;
                    auto& slot = slots[(ni * cfg.m_list.size() + mi) *
                                           static_cast<std::size_t>(cfg.seeds) +
                                       static_cast<std::size_t>(t)];
                    for (const auto& method : cfg.methods) {
                        slot.push_back(fit_method(method, setup, seed, gen.acceptance));
                    }
                });
            }
        }
    }
    run_parallel(tasks, cfg.threads);

    ConsistencyResult result;
    result.n_list = cfg.n_list;
    result.m_list = cfg.m_list;
    result.mean_error = Matrix::Zero(static_cast<Eigen::Index>(cfg.n_list.size()),
                                     static_cast<Eigen::Index>(cfg.m_list.size()));
    for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
        for (std::size_t mi = 0; mi < cfg.m_list.size(); ++mi) {
            double total = 0.0;
            for (int t = 0; t < cfg.seeds; ++t) {
                const auto& slot = slots[(ni * cfg.m_list.size() + mi) *
                                             static_cast<std::size_t>(cfg.seeds) +
                                         static_cast<std::size_t>(t)];
                for (const auto& rec : slot) {
                    if (rec.method == "tksd") total += rec.error;
                }
            }
            result.mean_error(static_cast<Eigen::Index>(ni), static_cast<Eigen::Index>(mi)) =
                total / cfg.seeds;
        }
    }
    result.records = flatten_sorted(slots);
    return result;
}

std::vector<TrialRecord> run_mixture(const ExperimentConfig& cfg) {
    validate_config(cfg);
    // Grid: n sweep at the first mode count, plus mode sweep at the largest n.
    std::vector<std::pair<Eigen::Index, int>> cells;
    for (const auto n : cfg.n_list) cells.emplace_back(n, cfg.mode_list.front());
    for (const int k : cfg.mode_list) {
        const std::pair<Eigen::Index, int> cell(cfg.n_list.back(), k);
        if (std::find(cells.begin(), cells.end(), cell) == cells.end()) cells.push_back(cell);
    }

    Matrix box(4, 2);
    box << -3.0, -3.0, 3.0, -3.0, 3.0, 3.0, -3.0, 3.0;
    const Polygon2D poly{box};
    const Domain dom = Domain::polygon(poly);

    std::vector<std::vector<TrialRecord>> slots(cells.size() *
                                                static_cast<std::size_t>(cfg.seeds));
    std::vector<std::function<void()>> tasks;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (int t = 0; t < cfg.seeds; ++t) {
            tasks.emplace_back([&, c, t] {
                const Eigen::Index n = cells[c].first;
                const int modes = cells[c].second;
                const Vector truth = mixture_truth(modes);
                const GaussianMixtureMeansModel model(modes, 2);

                const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(t);
                std::mt19937_64 rng(seed);
                std::normal_distribution<double> gauss;
                std::uniform_int_distribution<int> pick(0, modes - 1);
                auto propose = [&](std::mt19937_64& r) {
                    const int k = pick(r);
                    Vector z(2);
                    z << truth[2 * k] + gauss(r), truth[2 * k + 1] + gauss(r);
                    return z;
                };
                GenResult gen;
                try {
                    RejectionResult rr = truncated_rejection_sample(propose, dom, n, rng);
                    gen = {std::move(rr.samples), rr.acceptance_rate};
                } catch (const InfeasibleDomainError& err) {
                    throw InfeasibleDomainError(std::string(err.what()) + " (seed " +
                                                std::to_string(seed) + ")");
                }
                const Matrix bpts = sample_boundary_polygon(poly, cfg.m, rng);
                // Well-specified start: truth perturbed by N(0, 0.5 I) per mean.
                Vector theta0 = truth;
                for (Eigen::Index i = 0; i < theta0.size(); ++i) {
                    theta0[i] += std::sqrt(0.5) * gauss(rng);
                }

                TrialSetup setup;
                setup.model = &model;
                setup.X = &gen.X;
                setup.boundary = &bpts;
                setup.kernel.bandwidth = median_heuristic(gen.X);
                setup.theta_star = truth;
                setup.opt.theta0 = theta0;
                setup.alpha = cfg.alpha;
                setup.gamma = cfg.gamma;
                auto& slot = slots[c * static_cast<std::size_t>(cfg.seeds) +
                                   static_cast<std::size_t>(t)];
                for (const auto& method : cfg.methods) {
                    slot.push_back(fit_method(method, setup, seed, gen.acceptance));
                }
            });
        }
    }
    run_parallel(tasks, cfg.threads);
    return flatten_sorted(slots);
}

RegressionResult run_regression(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const double b0 = cfg.beta_star[0];
    const double b1 = cfg.beta_star[1];
    Vector beta_star(2);
    beta_star << b0, b1;

    struct Slot {
        std::vector<TrialRecord> records;
        RegressionTrial metrics;
    };
    std::vector<Slot> slots(static_cast<std::size_t>(cfg.seeds));
    std::vector<std::function<void()>> tasks;
    for (int t = 0; t < cfg.seeds; ++t) {
        tasks.emplace_back([&, t] {
            const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(t);
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            std::normal_distribution<double> gauss;

            std::vector<double> oc, oy, uc, uy;
            long proposals = 0;
            while (static_cast<Eigen::Index>(oy.size()) < cfg.n) {
                const double c = unif(rng);
                const double y = b0 + b1 * c + gauss(rng);
                ++proposals;
                if (y >= cfg.truncation_point) {
                    oc.push_back(c);
                    oy.push_back(y);
                } else {
                    uc.push_back(c);
                    uy.push_back(y);
                }
                if (proposals >= 1000000 &&
                    static_cast<double>(oy.size()) < 1e-4 * static_cast<double>(proposals)) {
                    throw InfeasibleDomainError(
                        "regression truncation accepts too few points (seed " +
                        std::to_string(seed) + ")");
                }
            }
            const double acceptance =
                static_cast<double>(oy.size()) / static_cast<double>(proposals);
            const Vector obs_c = to_vector(oc);
            const Vector obs_y = to_vector(oy);
            const Vector unobs_c = to_vector(uc);
            const Vector unobs_y = to_vector(uy);

            auto record_for = [&](const std::string& method, const Vector& beta, double ms,
                                  bool converged) {
                TrialRecord rec;
                rec.seed = seed;
                rec.method = method;
                rec.n = cfg.n;
                rec.m = cfg.m;
                rec.d = 1;
                rec.error = (beta - beta_star).norm();
                rec.wall_time_ms = ms;
                rec.converged = converged;
                rec.acceptance_rate = acceptance;
                rec.theta_hat = beta;
                return rec;
            };

            // Truncation-aware fit in response space; boundary is the cut point.
            const TruncatedRegressionModel model(obs_c);
            Matrix B(1, 1);
            B << cfg.truncation_point;
            KernelConfig kc;
            kc.bandwidth = median_heuristic(obs_y);
            auto t0 = std::chrono::steady_clock::now();
            const FitResult fit =
                fit_tksd(model, Matrix(obs_y), BoundarySample(B), kc, OptConfig{});
            const double tksd_ms = elapsed_ms(t0);

            t0 = std::chrono::steady_clock::now();
            const Vector ols = ols_fit(obs_c, obs_y);
            const double ols_ms = elapsed_ms(t0);

            auto& slot = slots[static_cast<std::size_t>(t)];
            for (const auto& method : cfg.methods) {
                if (method == "tksd") {
                    slot.records.push_back(
                        record_for("tksd", fit.theta_hat, tksd_ms, fit.converged));
                } else if (method == "mle") {
                    slot.records.push_back(record_for("mle", ols, ols_ms, true));
                } else {
                    throw std::invalid_argument("regression supports methods tksd and mle only");
                }
            }

            auto predict = [](const Vector& beta, const Vector& c) {
                return (beta[0] + (beta[1] * c.array())).matrix().eval();
            };
            RegressionTrial m;
            m.seed = seed;
            m.tksd_mse_unobs = (predict(fit.theta_hat, unobs_c) - unobs_y).squaredNorm();
            m.ols_mse_unobs = (predict(ols, unobs_c) - unobs_y).squaredNorm();
            m.tksd_loglik_obs = normal_loglik(obs_y, predict(fit.theta_hat, obs_c));
            m.ols_loglik_obs = normal_loglik(obs_y, predict(ols, obs_c));
            m.tksd_loglik_unobs = normal_loglik(unobs_y, predict(fit.theta_hat, unobs_c));
            m.ols_loglik_unobs = normal_loglik(unobs_y, predict(ols, unobs_c));
            slot.metrics = m;
        });
    }
    run_parallel(tasks, cfg.threads);

    RegressionResult result;
    for (auto& slot : slots) {
        for (auto& rec : slot.records) result.records.push_back(std::move(rec));
        result.metrics.push_back(slot.metrics);
    }
    sort_records(result.records);
    return result;
}

std::vector<TrialRecord> run_boundary_dist(const ExperimentConfig& cfg) {
    validate_config(cfg);
    LpBall ball;
    ball.p = 2;
    ball.radius = cfg.ball_radius > 0.0 ? cfg.ball_radius : 1.0;
    ball.center = Vector::Zero(2);
    const Domain dom = Domain::lp_ball(ball.p, ball.radius, ball.center);
    const GaussianMeanModel model(Matrix::Identity(2, 2));
    const Vector mu = cfg.mu_star.empty() ? Vector::Constant(2, 1.0) : to_vector(cfg.mu_star);
    const Vector u = mu.normalized();

    std::vector<std::vector<TrialRecord>> slots(cfg.methods.size() *
                                                static_cast<std::size_t>(cfg.seeds));
    std::vector<std::function<void()>> tasks;
    for (std::size_t c = 0; c < cfg.methods.size(); ++c) {
        for (int t = 0; t < cfg.seeds; ++t) {
            tasks.emplace_back([&, c, t] {
                const std::string& scenario = cfg.methods[c];
                DirectionalBias bias;
                bias.u = u;
                if (scenario == "tksd-toward") {
                    bias.s = cfg.bias_strength;
                } else if (scenario == "tksd-away") {
                    bias.s = -cfg.bias_strength;
                } else if (scenario == "tksd-uniform") {
                    bias.s = 0.0;
                } else {
                    throw std::invalid_argument("unknown boundary-dist scenario: " + scenario);
                }

                const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(t);
                std::mt19937_64 rng(seed);
                const GenResult gen = generate_truncated(cfg.n, mu, 1.0, dom, rng, seed);
                const Matrix bpts = sample_boundary_lp(ball, cfg.m, bias, rng);

                TrialSetup setup;
                setup.model = &model;
                setup.X = &gen.X;
                setup.boundary = &bpts;
                setup.kernel.bandwidth = median_heuristic(gen.X);
                setup.theta_star = mu;
                setup.alpha = cfg.alpha;
                setup.gamma = cfg.gamma;
                TrialRecord rec = fit_method("tksd", setup, seed, gen.acceptance);
                rec.method = scenario;
                slots[c * static_cast<std::size_t>(cfg.seeds) + static_cast<std::size_t>(t)]
                    .push_back(std::move(rec));
            });
        }
    }
    run_parallel(tasks, cfg.threads);
    return flatten_sorted(slots);
}

std::vector<RetentionRow> run_retention(const ExperimentConfig& cfg) {
    validate_config(cfg);
    std::vector<RetentionRow> rows;
    for (const int d : cfg.d_list) {
        RetentionRow row;
        row.d = d;
        row.l1_radius = std::pow(static_cast<double>(d), cfg.l1_exponent);
        row.l2_radius = std::pow(static_cast<double>(d), cfg.l2_exponent);
        double l1_total = 0.0, l2_total = 0.0;
        for (int t = 0; t < cfg.seeds; ++t) {
            std::mt19937_64 rng(cfg.base_seed + static_cast<std::uint64_t>(t));
            std::normal_distribution<double> gauss;
            Eigen::Index in1 = 0, in2 = 0;
            for (Eigen::Index i = 0; i < cfg.retention_draws; ++i) {
                double n1 = 0.0, n2 = 0.0;
                for (int k = 0; k < d; ++k) {
                    const double z = 0.5 + gauss(rng);
                    n1 += std::abs(z);
                    n2 += z * z;
                }
                if (n1 <= row.l1_radius) ++in1;
                if (std::sqrt(n2) <= row.l2_radius) ++in2;
            }
            l1_total += static_cast<double>(in1) / static_cast<double>(cfg.retention_draws);
            l2_total += static_cast<double>(in2) / static_cast<double>(cfg.retention_draws);
        }
        row.l1_retention_pct = 100.0 * l1_total / cfg.seeds;
        row.l2_retention_pct = 100.0 * l2_total / cfg.seeds;
        rows.push_back(row);
    }
    return rows;
}

std::string retention_to_csv(const std::vector<RetentionRow>& rows) {
    std::string out = "d,l1_radius,l2_radius,l1_retention_pct,l2_retention_pct\n";
    for (const auto& r : rows) {
        out += std::to_string(r.d) + ',' + fmt_double(r.l1_radius) + ',' +
               fmt_double(r.l2_radius) + ',' + fmt_double(r.l1_retention_pct) + ',' +
               fmt_double(r.l2_retention_pct) + '\n';
    }
    return out;
}

std::vector<EpsilonRow> run_epsilon_table(const ExperimentConfig& cfg) {
    validate_config(cfg);
    // Log-spaced m from 1 to 10^4, deduplicated after rounding.
    std::vector<long> ms;
    for (int k = 0; k <= 32; ++k) {
        const long m = std::lround(std::pow(10.0, static_cast<double>(k) / 8.0));
        if (ms.empty() || ms.back() != m) ms.push_back(m);
    }
    std::vector<EpsilonRow> rows;
    for (const int d : cfg.d_list) {
        const double surface = cfg.l_scale * static_cast<double>(d) * static_cast<double>(d);
        for (const long m : ms) {
            EpsilonRow row;
            row.m = m;
            row.d = d;
            row.surface = surface;
            row.epsilon = epsilon_lower_bound(m, d, surface);
            rows.push_back(row);
        }
    }
    return rows;
}

std::string epsilon_table_to_csv(const std::vector<EpsilonRow>& rows) {
    std::string out = "m,d,L,epsilon\n";
    for (const auto& r : rows) {
        out += std::to_string(r.m) + ',' + std::to_string(r.d) + ',' + fmt_double(r.surface) +
               ',' + fmt_double(r.epsilon) + '\n';
    }
    return out;
}

}  // namespace tksd
