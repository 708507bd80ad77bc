// nfa-lab: config-driven experiments for deep linear feature-learning
// diagnostics. Subcommands: run, sweep, counterexample, report.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nfa/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

std::optional<std::uint64_t> seed_override_from_env() {
    const char* s = std::getenv("NFA_LAB_SEED");
    if (!s || !*s) return std::nullopt;
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw nfa::ConfigError("NFA_LAB_SEED is not an unsigned integer");
    }
}

nfa::ExperimentConfig load_config(const std::string& path, bool paper) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(nfa::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw nfa::ConfigError(std::string("config parse error: ") + e.what());
    }
    nfa::ExperimentConfig cfg =
        nfa::config_from_json(j, paper ? nfa::paper_scale() : nfa::desk_scale());
    if (auto seed = seed_override_from_env()) cfg.data.seed = *seed;
    return cfg;
}

int cmd_run(const std::string& config_path, bool paper) {
    const nfa::ExperimentConfig cfg = load_config(config_path, paper);
    const nfa::RunSummary summary = nfa::run(cfg);
    std::cout << nfa::summary_to_json(summary).dump(2) << "\n";
    return summary.status == "nan" ? kExitDivergence : kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& axes_path,
              std::size_t jobs, bool paper) {
    nfa::ExperimentConfig base = load_config(config_path, paper);
    nlohmann::json axes_json;
    try {
        axes_json = nlohmann::json::parse(nfa::read_file(axes_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw nfa::ConfigError(std::string("axes parse error: ") + e.what());
    }
    const std::vector<nfa::SweepAxis> axes = nfa::axes_from_json(axes_json);
    const std::vector<nfa::SweepRow> rows = nfa::sweep(base, axes, jobs);
    const std::string csv = nfa::sweep_to_csv(rows);
    nfa::atomic_write(std::filesystem::path(base.output_dir) / "sweep.csv", csv);
    std::cout << csv;
    return kExitOk;
}

int cmd_counterexample(const std::string& which, std::optional<std::size_t> n,
                       std::size_t samples, std::uint64_t seed,
                       const std::string& out_dir) {
    if (auto env = seed_override_from_env()) seed = *env;
    if (which == "relu_sum") {
        const auto summary = nfa::relu_sum_report(out_dir, samples, seed);
        std::cout << summary.dump(2) << "\n";
        return kExitOk;
    }
    if (which == "oscillation") {
        std::vector<std::size_t> ns = n ? std::vector<std::size_t>{*n}
                                        : std::vector<std::size_t>{1, 2, 5, 10};
        const auto summary = nfa::oscillation_report(out_dir, ns, samples, seed);
        std::cout << summary.dump(2) << "\n";
        return kExitOk;
    }
    throw nfa::ConfigError("unknown counterexample '" + which +
                           "' (expected relu_sum or oscillation)");
}

// Renders a sweep.csv as the appendix-style pivot: one row per
// (sigma, L, lambda), one column per optimizer, cells rounded to 2 decimals.
int cmd_report(const std::string& dir) {
    const std::string csv = nfa::read_file(std::filesystem::path(dir) / "sweep.csv");
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);  // header

    struct Cell {
        std::string sigma, layers, lambda, optimizer, status, cos;
    };
    std::vector<Cell> cells;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) f.push_back(cell);
        if (f.size() < 11) continue;
        cells.push_back({f[1], f[2], f[3], f[4], f[6], f[8]});
    }

    std::vector<std::string> optimizers;
    for (const Cell& c : cells)
        if (std::find(optimizers.begin(), optimizers.end(), c.optimizer) ==
            optimizers.end())
            optimizers.push_back(c.optimizer);

    std::map<std::tuple<std::string, std::string, std::string>,
             std::map<std::string, std::string>>
        table;
    for (const Cell& c : cells) {
        std::string shown = "nan";
        if (c.status == "ok") {
            try {
                char buf[16];
                std::snprintf(buf, sizeof(buf), "%.2f", std::stod(c.cos));
                shown = buf;
            } catch (const std::exception&) {
            }
        }
        table[{c.sigma, c.layers, c.lambda}][c.optimizer] = shown;
    }

    std::cout << "sigma  layers  lambda      ";
    for (const std::string& o : optimizers) std::printf("%8s", o.c_str());
    std::cout << "\n";
    for (const auto& [key, row] : table) {
        std::printf("%-6s %-7s %-11s", std::get<0>(key).c_str(),
                    std::get<1>(key).c_str(), std::get<2>(key).c_str());
        for (const std::string& o : optimizers) {
            auto it = row.find(o);
            std::printf("%8s", it == row.end() ? "-" : it->second.c_str());
        }
        std::cout << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep linear network feature-learning lab"};
    app.require_subcommand(1);

    bool paper = false;
    app.add_flag("--paper-scale", paper,
                 "Use the published sizes (width 64, N 2048, 60000 epochs)");

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "Execute one experiment config");
    run_cmd->add_option("config", config_path, "JSON config file")->required();

    std::string sweep_config, axes_path;
    std::size_t jobs = 1;
    auto* sweep_cmd = app.add_subcommand("sweep", "Cartesian sweep over axes");
    sweep_cmd->add_option("config", sweep_config, "Base JSON config")->required();
    sweep_cmd->add_option("--axes", axes_path, "JSON map of axis name -> values")
        ->required();
    sweep_cmd->add_option("--jobs", jobs, "Parallel runs");

    std::string which, ce_out = "out/counterexample";
    std::optional<std::size_t> ce_n;
    std::size_t ce_samples = 1000000;
    std::uint64_t ce_seed = 20240;
    auto* ce_cmd = app.add_subcommand("counterexample", "Closed-form comparisons");
    ce_cmd->add_option("name", which, "relu_sum | oscillation")->required();
    ce_cmd->add_option("--n", ce_n, "Oscillation index (default sweeps 1,2,5,10)");
    ce_cmd->add_option("--samples", ce_samples, "Monte-Carlo sample count");
    ce_cmd->add_option("--seed", ce_seed, "Monte-Carlo seed");
    ce_cmd->add_option("--out", ce_out, "Output directory");

    std::string report_dir;
    auto* report_cmd = app.add_subcommand("report", "Render a sweep directory");
    report_cmd->add_option("dir", report_dir, "Directory holding sweep.csv")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) return cmd_run(config_path, paper);
        if (*sweep_cmd) return cmd_sweep(sweep_config, axes_path, jobs, paper);
        if (*ce_cmd) return cmd_counterexample(which, ce_n, ce_samples, ce_seed, ce_out);
        if (*report_cmd) return cmd_report(report_dir);
    } catch (const nfa::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const nfa::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
