#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "tksd/harness.hpp"

namespace {

struct CliArgs {
    std::string config_path;
    long long seeds = 0;
    long long base_seed = 0;
    long long threads = 0;
    std::string out;
    bool json = false;
};

const std::vector<std::pair<std::string, std::string>>& experiments() {
    static const std::vector<std::pair<std::string, std::string>> list = {
        {"estimate", "Fit a truncated Gaussian mean on the polygon domain"},
        {"polygon-bench", "Sweep boundary sample sizes on the polygon domain"},
        {"dim-bench", "Compare estimators across dimensions on lp-ball domains"},
        {"consistency", "Error decay over data and boundary sample sizes"},
        {"mixture", "Fit Gaussian mixture means on a box domain"},
        {"regression", "Truncated-response regression against least squares"},
        {"boundary-dist", "Effect of directionally biased boundary samples"},
        {"retention", "Sample retention of the two ball-radius conventions"},
        {"epsilon-table", "Boundary-coverage lower bound per sample size"},
    };
    return list;
}

void emit(const tksd::ExperimentConfig& cfg, const std::string& text) {
    if (cfg.out.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        tksd::write_text_file(cfg.out, text);
    }
}

void emit_records(const tksd::ExperimentConfig& cfg,
                  const std::vector<tksd::TrialRecord>& records) {
    emit(cfg, cfg.json_output ? tksd::records_to_json(records) : tksd::records_to_csv(records));
}

void print_consistency_matrix(const tksd::ConsistencyResult& res) {
    std::fprintf(stderr, "mean error, rows n, cols m\n%8s", "");
    for (const auto m : res.m_list) std::fprintf(stderr, " m=%-8lld", static_cast<long long>(m));
    std::fprintf(stderr, "\n");
    for (std::size_t i = 0; i < res.n_list.size(); ++i) {
        std::fprintf(stderr, "n=%-6lld", static_cast<long long>(res.n_list[i]));
        for (Eigen::Index j = 0; j < res.mean_error.cols(); ++j) {
            std::fprintf(stderr, " %-10.4g", res.mean_error(static_cast<Eigen::Index>(i), j));
        }
        std::fprintf(stderr, "\n");
    }
}

void print_regression_summary(const tksd::RegressionResult& res) {
    double tksd_mse = 0, ols_mse = 0, tksd_ll = 0, ols_ll = 0;
    for (const auto& m : res.metrics) {
        tksd_mse += m.tksd_mse_unobs;
        ols_mse += m.ols_mse_unobs;
        tksd_ll += m.tksd_loglik_unobs;
        ols_ll += m.ols_loglik_unobs;
    }
    const double s = static_cast<double>(res.metrics.size());
    std::fprintf(stderr,
                 "unobserved region, means over %zu seeds\n"
                 "  mse      tksd %.6g  mle %.6g\n"
                 "  log-lik  tksd %.6g  mle %.6g\n",
                 res.metrics.size(), tksd_mse / s, ols_mse / s, tksd_ll / s, ols_ll / s);
}

template <typename Rows, typename ToJson>
void emit_rows(const tksd::ExperimentConfig& cfg, const Rows& rows, const std::string& csv,
               ToJson to_json) {
    if (!cfg.json_output) {
        emit(cfg, csv);
        return;
    }
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& row : rows) arr.push_back(to_json(row));
    emit(cfg, arr.dump(2) + "\n");
}

int run(const std::string& experiment, const CliArgs& args, const CLI::App& sub) {
    tksd::ExperimentConfig cfg = tksd::load_config(args.config_path);
    if (cfg.experiment != experiment) {
        throw std::invalid_argument("config is for experiment \"" + cfg.experiment +
                                    "\" but the " + experiment + " command was invoked");
    }
    if (sub.count("--seeds") != 0u) cfg.seeds = static_cast<int>(args.seeds);
    if (sub.count("--base-seed") != 0u) {
        cfg.base_seed = static_cast<std::uint64_t>(args.base_seed);
    }
    if (sub.count("--threads") != 0u) cfg.threads = static_cast<int>(args.threads);
    if (sub.count("--out") != 0u) cfg.out = args.out;
    if (args.json) cfg.json_output = true;
    tksd::validate_config(cfg);

    if (experiment == "estimate") {
        emit_records(cfg, tksd::run_estimate(cfg));
    } else if (experiment == "polygon-bench") {
        emit_records(cfg, tksd::run_polygon_bench(cfg));
    } else if (experiment == "dim-bench") {
        emit_records(cfg, tksd::run_dim_bench(cfg));
    } else if (experiment == "consistency") {
        const tksd::ConsistencyResult res = tksd::run_consistency(cfg);
        print_consistency_matrix(res);
        emit_records(cfg, res.records);
    } else if (experiment == "mixture") {
        emit_records(cfg, tksd::run_mixture(cfg));
    } else if (experiment == "regression") {
        const tksd::RegressionResult res = tksd::run_regression(cfg);
        print_regression_summary(res);
        emit_records(cfg, res.records);
    } else if (experiment == "boundary-dist") {
        emit_records(cfg, tksd::run_boundary_dist(cfg));
    } else if (experiment == "retention") {
        const auto rows = tksd::run_retention(cfg);
        emit_rows(cfg, rows, tksd::retention_to_csv(rows), [](const tksd::RetentionRow& r) {
            return nlohmann::json{{"d", r.d},
                                  {"l1_radius", r.l1_radius},
                                  {"l2_radius", r.l2_radius},
                                  {"l1_retention_pct", r.l1_retention_pct},
                                  {"l2_retention_pct", r.l2_retention_pct}};
        });
    } else {
        const auto rows = tksd::run_epsilon_table(cfg);
        emit_rows(cfg, rows, tksd::epsilon_table_to_csv(rows), [](const tksd::EpsilonRow& r) {
            return nlohmann::json{
                {"m", r.m}, {"d", r.d}, {"L", r.surface}, {"epsilon", r.epsilon}};
        });
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Benchmark suite for score estimation on truncated domains"};
    app.require_subcommand(1);
    CliArgs args;
    for (const auto& [name, desc] : experiments()) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", args.config_path, "JSON config file")->required();
        sub->add_option("--seeds", args.seeds, "Override the number of seeds");
        sub->add_option("--base-seed", args.base_seed, "Override the first seed");
        sub->add_option("--threads", args.threads, "Worker threads (default from config)");
        sub->add_option("--out", args.out, "Write results to this file instead of stdout");
        sub->add_flag("--json", args.json, "Emit a JSON array instead of CSV");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    const CLI::App* sub = app.get_subcommands().front();
    try {
        return run(sub->get_name(), args, *sub);
    } catch (const tksd::ParseError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::runtime_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
