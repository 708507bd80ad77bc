#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nfa/diagnostics.hpp"
#include "nfa/init.hpp"
#include "nfa/io.hpp"
#include "nfa/optim.hpp"
#include "nfa/targets.hpp"

namespace nfa {

/// Scale presets: desk-size defaults keep every experiment inside a developer
/// machine budget; the paper preset restores the published sizes.
struct ScalePreset {
    std::size_t width = 32;
    std::size_t n = 512;
    std::size_t main_epochs = 5000;
};

inline ScalePreset desk_scale() { return ScalePreset{32, 512, 5000}; }
inline ScalePreset paper_scale() { return ScalePreset{64, 2048, 60000}; }

struct ArchitectureConfig {
    std::size_t depth = 2;
    std::size_t width = 32;
    HeadKind head = HeadKind::relu_head;
    bool balanced = false;
};

struct TargetConfig {
    std::size_t rank = 5;
    std::size_t d = 20;
    Link link = Link::relu;
    double sigma = 0.0;
    std::size_t out_dim = 0;  // vector targets only; 0 = use d
};

struct DataConfig {
    std::size_t n = 512;
    std::uint64_t seed = 1;
};

struct AlphaGridConfig {
    double min = 0.1;
    double max = 3.0;
    double step = 0.05;
};

struct ExperimentConfig {
    ArchitectureConfig architecture;
    TargetConfig target;
    DataConfig data;
    OptimizerConfig optimizer;
    Schedule schedule;
    AlphaGridConfig alpha_grid;
    std::string output_dir = "out";

    void validate() const {
        if (architecture.depth < 1) throw ConfigError("architecture.depth must be >= 1");
        if (architecture.width < 1) throw ConfigError("architecture.width must be >= 1");
        if (target.rank < 1 || target.rank > target.d)
            throw ConfigError("target.rank must lie in [1, d]");
        if (data.n < 1) throw ConfigError("data.n must be >= 1");
        optimizer.validate();
        schedule.validate();
        if (!(alpha_grid.step > 0.0) || !(alpha_grid.max >= alpha_grid.min))
            throw ConfigError("alpha_grid must satisfy step > 0 and max >= min");
        if (architecture.balanced) {
            if (architecture.head == HeadKind::feedforward)
                throw ConfigError("balanced init is defined for the linear stack only");
            if (architecture.width < target.d)
                throw ConfigError("balanced init requires width >= d");
            if (architecture.head == HeadKind::none && effective_out_dim() < target.d)
                throw ConfigError("balanced init requires out_dim >= d");
        }
    }

    std::size_t effective_out_dim() const {
        return target.out_dim == 0 ? target.d : target.out_dim;
    }
};

// --- strict JSON parsing -----------------------------------------------------

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::vector<std::string>& known,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const std::string& k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError("unknown config key '" + it.key() + "' in " + where);
    }
}

template <typename T>
void maybe_get(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline Link link_from_name(const std::string& s) {
    if (s == "relu") return Link::relu;
    if (s == "gauss") return Link::gauss;
    if (s == "identity") return Link::identity;
    throw ConfigError("unknown link function '" + s + "'");
}

inline OptimizerKind optimizer_kind_from_name(const std::string& s) {
    if (s == "gd") return OptimizerKind::gd;
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer kind '" + s + "'");
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j,
                                         const ScalePreset& preset = desk_scale()) {
    detail::reject_unknown_keys(j,
                                {"architecture", "target", "data", "optimizer",
                                 "schedule", "alpha_grid", "output_dir"},
                                "config");
    ExperimentConfig cfg;
    cfg.architecture.width = preset.width;
    cfg.data.n = preset.n;
    cfg.schedule.main_epochs = preset.main_epochs;
    cfg.schedule.extra_epochs = 100;

    if (j.contains("architecture")) {
        const auto& a = j.at("architecture");
        detail::reject_unknown_keys(a, {"depth", "width", "head", "balanced"},
                                    "architecture");
        detail::maybe_get(a, "depth", cfg.architecture.depth);
        detail::maybe_get(a, "width", cfg.architecture.width);
        if (a.contains("head"))
            cfg.architecture.head = head_kind_from_name(a.at("head").get<std::string>());
        detail::maybe_get(a, "balanced", cfg.architecture.balanced);
    }
    if (j.contains("target")) {
        const auto& t = j.at("target");
        detail::reject_unknown_keys(t, {"rank", "d", "link", "sigma", "out_dim"},
                                    "target");
        detail::maybe_get(t, "rank", cfg.target.rank);
        detail::maybe_get(t, "d", cfg.target.d);
        if (t.contains("link"))
            cfg.target.link = detail::link_from_name(t.at("link").get<std::string>());
        detail::maybe_get(t, "sigma", cfg.target.sigma);
        detail::maybe_get(t, "out_dim", cfg.target.out_dim);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::reject_unknown_keys(d, {"n", "seed"}, "data");
        detail::maybe_get(d, "n", cfg.data.n);
        detail::maybe_get(d, "seed", cfg.data.seed);
    }
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        detail::reject_unknown_keys(o,
                                    {"kind", "learning_rate", "weight_decay", "momentum",
                                     "batch_size", "adam_beta1", "adam_beta2", "adam_eps"},
                                    "optimizer");
        if (o.contains("kind"))
            cfg.optimizer.kind =
                detail::optimizer_kind_from_name(o.at("kind").get<std::string>());
        detail::maybe_get(o, "learning_rate", cfg.optimizer.learning_rate);
        detail::maybe_get(o, "weight_decay", cfg.optimizer.weight_decay);
        detail::maybe_get(o, "momentum", cfg.optimizer.momentum);
        detail::maybe_get(o, "batch_size", cfg.optimizer.batch_size);
        detail::maybe_get(o, "adam_beta1", cfg.optimizer.adam_beta1);
        detail::maybe_get(o, "adam_beta2", cfg.optimizer.adam_beta2);
        detail::maybe_get(o, "adam_eps", cfg.optimizer.adam_eps);
    }
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        detail::reject_unknown_keys(
            s, {"main_epochs", "drop_factor", "extra_epochs", "record_every"}, "schedule");
        detail::maybe_get(s, "main_epochs", cfg.schedule.main_epochs);
        detail::maybe_get(s, "drop_factor", cfg.schedule.drop_factor);
        detail::maybe_get(s, "extra_epochs", cfg.schedule.extra_epochs);
        detail::maybe_get(s, "record_every", cfg.schedule.record_every);
    }
    if (j.contains("alpha_grid")) {
        const auto& g = j.at("alpha_grid");
        detail::reject_unknown_keys(g, {"min", "max", "step"}, "alpha_grid");
        detail::maybe_get(g, "min", cfg.alpha_grid.min);
        detail::maybe_get(g, "max", cfg.alpha_grid.max);
        detail::maybe_get(g, "step", cfg.alpha_grid.step);
    }
    detail::maybe_get(j, "output_dir", cfg.output_dir);
    cfg.validate();
    return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["architecture"] = {{"depth", cfg.architecture.depth},
                         {"width", cfg.architecture.width},
                         {"head", head_kind_name(cfg.architecture.head)},
                         {"balanced", cfg.architecture.balanced}};
    j["target"] = {{"rank", cfg.target.rank},
                   {"d", cfg.target.d},
                   {"link", link_name(cfg.target.link)},
                   {"sigma", cfg.target.sigma},
                   {"out_dim", cfg.target.out_dim}};
    j["data"] = {{"n", cfg.data.n}, {"seed", cfg.data.seed}};
    const char* kind = cfg.optimizer.kind == OptimizerKind::gd     ? "gd"
                       : cfg.optimizer.kind == OptimizerKind::sgd ? "sgd"
                                                                  : "adam";
    j["optimizer"] = {{"kind", kind},
                      {"learning_rate", cfg.optimizer.learning_rate},
                      {"weight_decay", cfg.optimizer.weight_decay},
                      {"momentum", cfg.optimizer.momentum},
                      {"batch_size", cfg.optimizer.batch_size},
                      {"adam_beta1", cfg.optimizer.adam_beta1},
                      {"adam_beta2", cfg.optimizer.adam_beta2},
                      {"adam_eps", cfg.optimizer.adam_eps}};
    j["schedule"] = {{"main_epochs", cfg.schedule.main_epochs},
                     {"drop_factor", cfg.schedule.drop_factor},
                     {"extra_epochs", cfg.schedule.extra_epochs},
                     {"record_every", cfg.schedule.record_every}};
    j["alpha_grid"] = {{"min", cfg.alpha_grid.min},
                       {"max", cfg.alpha_grid.max},
                       {"step", cfg.alpha_grid.step}};
    j["output_dir"] = cfg.output_dir;
    return j;
}

// --- model assembly ----------------------------------------------------------

/// Builds the network described by the config with the default uniform
/// initialization (weights and biases alike), optionally balancing the stack.
inline Network build_network(const ExperimentConfig& cfg, Rng& rng) {
    const std::size_t d = cfg.target.d;
    const std::size_t width = cfg.architecture.width;
    const std::size_t depth = cfg.architecture.depth;
    const std::size_t out =
        cfg.architecture.head == HeadKind::none ? cfg.effective_out_dim() : width;

    std::vector<LayerShape> shapes;
    for (std::size_t l = 0; l < depth; ++l) {
        const std::size_t rows = (l + 1 == depth) ? out : width;
        const std::size_t cols = (l == 0) ? d : width;
        shapes.emplace_back(rows, cols);
    }

    Network net;
    net.head = cfg.architecture.head;
    net.stack = default_uniform_init(shapes, rng);

    auto uniform_vec = [&rng](std::size_t len, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Vec v(len);
        for (double& x : v) x = rng.uniform(-bound, bound);
        return v;
    };

    switch (net.head) {
        case HeadKind::none:
            net.stack.bias1 = uniform_vec(out, shapes.back().second);
            break;
        case HeadKind::relu_head:
            net.stack.bias1 = uniform_vec(out, shapes.back().second);
            net.head_a = uniform_vec(out, out);
            net.head_b2 = rng.uniform(-1.0 / std::sqrt(static_cast<double>(out)),
                                      1.0 / std::sqrt(static_cast<double>(out)));
            break;
        case HeadKind::feedforward:
            for (const auto& [rows, cols] : shapes)
                net.layer_biases.push_back(uniform_vec(rows, cols));
            net.head_a = uniform_vec(out, out);
            net.head_b2 = rng.uniform(-1.0 / std::sqrt(static_cast<double>(out)),
                                      1.0 / std::sqrt(static_cast<double>(out)));
            break;
    }
    if (cfg.architecture.balanced) net.stack = force_balanced(net.stack, rng);
    net.validate();
    return net;
}

// --- run ---------------------------------------------------------------------

struct RunSummary {
    std::string status = "ok";  // "ok" | "nan"
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    double final_cos_inv_l = std::numeric_limits<double>::quiet_NaN();
    double argmax_alpha_tilde = std::numeric_limits<double>::quiet_NaN();
    double defect_decay_rate = std::numeric_limits<double>::quiet_NaN();
    Vec sv_profile;
};

inline nlohmann::json summary_to_json(const RunSummary& s) {
    nlohmann::json j;
    j["status"] = s.status;
    auto put = [&j](const char* key, double v) {
        if (std::isfinite(v)) j[key] = v;
        else j[key] = nullptr;
    };
    put("final_loss", s.final_loss);
    put("final_cos_inv_L", s.final_cos_inv_l);
    put("argmax_alpha_tilde", s.argmax_alpha_tilde);
    put("defect_decay_rate", s.defect_decay_rate);
    j["sv_profile"] = s.sv_profile;
    return j;
}

struct RunOutput {
    RunSummary summary;
    AlignmentTrace trace;
    Network net;
    Dataset data;
};

/// Executes one experiment: sample target and data, initialize, train with
/// the alignment recorder attached, summarize. Fully deterministic per seed.
inline RunOutput run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    Rng root(cfg.data.seed);
    Rng target_rng = root.fork(1);
    Rng data_rng = root.fork(2);
    Rng init_rng = root.fork(3);
    Rng train_rng = root.fork(4);

    const bool scalar = cfg.architecture.head != HeadKind::none;
    const MultiIndexTarget target =
        make_multiindex_target(cfg.target.rank, cfg.target.d, cfg.target.link, scalar,
                               scalar ? cfg.target.rank : cfg.effective_out_dim(),
                               target_rng);
    RunOutput out;
    out.data = sample_multiindex(target, cfg.data.n, cfg.target.sigma, data_rng);
    out.data.seed = cfg.data.seed;

    Network net = build_network(cfg, init_rng);

    std::vector<Monitor> monitors;
    monitors.push_back(make_alignment_recorder(
        out.trace,
        make_alpha_tilde_grid(cfg.alpha_grid.min, cfg.alpha_grid.max, cfg.alpha_grid.step)));

    TrainResult result =
        train(std::move(net), out.data, cfg.optimizer, cfg.schedule, train_rng, monitors);
    out.net = std::move(result.net);

    RunSummary& s = out.summary;
    if (result.diverged || out.trace.nan_status) {
        s.status = "nan";
        return out;
    }
    s.final_loss = out.trace.loss.back();
    s.final_cos_inv_l = out.trace.cos_inv_l.back();
    if (!out.trace.alpha_cosines.empty()) {
        const Vec& last = out.trace.alpha_cosines.back();
        std::size_t arg = 0;
        for (std::size_t i = 1; i < last.size(); ++i)
            if (last[i] > last[arg]) arg = i;
        s.argmax_alpha_tilde = out.trace.alpha_tilde_grid[arg];
    }
    if (cfg.optimizer.weight_decay > 0.0 && out.trace.records() >= 4) {
        std::vector<double> max_defect;
        max_defect.reserve(out.trace.records());
        for (const Vec& d : out.trace.defects) {
            double m = 0.0;
            for (double v : d) m = std::max(m, v);
            max_defect.push_back(m);
        }
        if (!max_defect.empty() && max_defect.front() > 1e-8)
            s.defect_decay_rate = fit_log_slope(out.trace.times, max_defect);
    }
    try {
        s.sv_profile = singular_value_profile(out.net.stack.weights.front());
    } catch (const ZeroMatrixError&) {
        s.sv_profile.clear();  // fully collapsed first layer
    }
    return out;
}

/// run_experiment plus artifacts on disk: trace.csv, alpha_sweep.csv,
/// checkpoint.json, summary.json, data.csv with its JSON sidecar, and the
/// resolved config echo.
inline RunSummary run(const ExperimentConfig& cfg) {
    RunOutput out = run_experiment(cfg);
    const std::filesystem::path dir(cfg.output_dir);
    std::filesystem::create_directories(dir);
    atomic_write(dir / "config.json", config_to_json(cfg).dump(2) + "\n");
    atomic_write(dir / "trace.csv", trace_to_csv(out.trace, cfg.architecture.depth));
    atomic_write(dir / "alpha_sweep.csv", alpha_sweep_to_csv(out.trace));
    atomic_write(dir / "data.csv", dataset_to_csv(out.data));
    {
        nlohmann::json meta;
        meta["seed"] = out.data.seed;
        meta["noise_sigma"] = out.data.noise_sigma;
        meta["n"] = out.data.size();
        meta["d"] = out.data.input_dim();
        meta["target"] = {{"rank", cfg.target.rank},
                          {"link", link_name(cfg.target.link)},
                          {"scalar", cfg.architecture.head != HeadKind::none},
                          {"out_dim", cfg.effective_out_dim()}};
        atomic_write(dir / "data_meta.json", meta.dump(2) + "\n");
    }
    if (out.summary.status == "ok") save_checkpoint(out.net, dir / "checkpoint.json");
    atomic_write(dir / "summary.json", summary_to_json(out.summary).dump(2) + "\n");
    return out.summary;
}

// --- sweeps ------------------------------------------------------------------

struct SweepAxis {
    std::string name;
    std::vector<nlohmann::json> values;
};

struct SweepRow {
    std::map<std::string, std::string> coordinates;  // axis name -> printed value
    RunSummary summary;
    ExperimentConfig config;
};

namespace detail {

inline void apply_axis(ExperimentConfig& cfg, const std::string& axis,
                       const nlohmann::json& value) {
    if (axis == "L" || axis == "depth") {
        cfg.architecture.depth = value.get<std::size_t>();
    } else if (axis == "lambda" || axis == "weight_decay") {
        cfg.optimizer.weight_decay = value.get<double>();
    } else if (axis == "optimizer") {
        const std::string name = value.get<std::string>();
        if (name == "gd" || name == "gdm") cfg.optimizer.kind = OptimizerKind::gd;
        else if (name == "sgd" || name == "sgdm") cfg.optimizer.kind = OptimizerKind::sgd;
        else if (name == "adam") cfg.optimizer.kind = OptimizerKind::adam;
        else throw ConfigError("unknown optimizer '" + name + "' in sweep axis");
        cfg.optimizer.momentum = (name == "gdm" || name == "sgdm") ? 0.9 : 0.0;
    } else if (axis == "rank") {
        cfg.target.rank = value.get<std::size_t>();
    } else if (axis == "sigma") {
        cfg.target.sigma = value.get<double>();
    } else if (axis == "eta" || axis == "learning_rate") {
        cfg.optimizer.learning_rate = value.get<double>();
    } else {
        throw ConfigError("unknown sweep axis '" + axis + "'");
    }
}

inline std::string axis_value_label(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

}  // namespace detail

inline std::vector<SweepAxis> axes_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.empty())
        throw ConfigError("sweep axes must be a nonempty JSON object");
    std::vector<SweepAxis> axes;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.value().is_array() || it.value().empty())
            throw ConfigError("sweep axis '" + it.key() + "' must be a nonempty array");
        SweepAxis axis;
        axis.name = it.key();
        for (const auto& v : it.value()) axis.values.push_back(v);
        axes.push_back(std::move(axis));
    }
    return axes;
}

/// Cartesian product over the axes, one run per cell, optionally on a small
/// thread pool. Per-run seeds derive from the base seed and the coordinate
/// indices; rows stay in product order so repeated sweeps are byte-identical.
inline std::vector<SweepRow> sweep(const ExperimentConfig& base,
                                   const std::vector<SweepAxis>& axes,
                                   std::size_t jobs = 1) {
    if (axes.empty()) throw ConfigError("sweep: no axes");
    std::size_t total = 1;
    for (const SweepAxis& a : axes) total *= a.values.size();

    std::vector<SweepRow> rows(total);
    std::vector<ExperimentConfig> configs(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
        ExperimentConfig cfg = base;
        std::uint64_t seed = base.data.seed;
        std::size_t rem = idx;
        for (std::size_t a = axes.size(); a-- > 0;) {
            const std::size_t coord = rem % axes[a].values.size();
            rem /= axes[a].values.size();
            detail::apply_axis(cfg, axes[a].name, axes[a].values[coord]);
            seed = mix_seed(seed, static_cast<std::uint64_t>(coord + 1) * 7919u +
                                      static_cast<std::uint64_t>(a));
            rows[idx].coordinates[axes[a].name] =
                detail::axis_value_label(axes[a].values[coord]);
        }
        cfg.data.seed = seed;
        cfg.output_dir =
            (std::filesystem::path(base.output_dir) / ("run_" + std::to_string(idx)))
                .string();
        configs[idx] = cfg;
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= total) return;
            try {
                rows[idx].summary = run(configs[idx]);
            } catch (const std::exception&) {
                rows[idx].summary = RunSummary{};
                rows[idx].summary.status = "nan";
            }
            rows[idx].config = configs[idx];
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < jobs; ++i) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    return rows;
}

inline std::string optimizer_label(const ExperimentConfig& cfg) {
    switch (cfg.optimizer.kind) {
        case OptimizerKind::gd: return cfg.optimizer.momentum > 0.0 ? "gdm" : "gd";
        case OptimizerKind::sgd: return cfg.optimizer.momentum > 0.0 ? "sgdm" : "sgd";
        case OptimizerKind::adam: return "adam";
    }
    return "?";
}

/// Flat sweep table mirroring the appendix row fields.
inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::string out =
        "run,sigma,linear_layers,lambda,optimizer,rank,status,final_loss,"
        "final_cos_inv_L,argmax_alpha_tilde,defect_decay_rate\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const ExperimentConfig& cfg = rows[i].config;
        const RunSummary& s = rows[i].summary;
        out += std::to_string(i);
        out += ',' + format_double(cfg.target.sigma);
        out += ',' + std::to_string(cfg.architecture.depth);
        out += ',' + format_double(cfg.optimizer.weight_decay);
        out += ',' + optimizer_label(cfg);
        out += ',' + std::to_string(cfg.target.rank);
        out += ',' + s.status;
        auto cell = [](double v) { return std::isfinite(v) ? format_double(v) : std::string("nan"); };
        out += ',' + cell(s.final_loss);
        out += ',' + cell(s.final_cos_inv_l);
        out += ',' + cell(s.argmax_alpha_tilde);
        out += ',' + cell(s.defect_decay_rate);
        out += '\n';
    }
    return out;
}

// --- counterexample reports ----------------------------------------------------

/// Closed-form versus Monte-Carlo comparison for the ReLU-sum example, plus
/// the alpha sweeps showing where proportionality fails and where it holds.
inline nlohmann::json relu_sum_report(const std::filesystem::path& dir,
                                      std::size_t samples, std::uint64_t seed) {
    const ReluSumCounterexample ce = relu_sum_counterexample();
    Rng rng(seed);
    Matrix xs(samples, 2);
    for (std::size_t i = 0; i < samples; ++i) {
        xs(i, 0) = rng.uniform(-1.0, 1.0);
        xs(i, 1) = rng.uniform(-1.0, 1.0);
    }
    const Matrix empirical = agop_empirical(ce.target.gradient, xs);
    double max_err = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
        max_err = std::max(max_err,
                           std::fabs(empirical.flat()[i] - ce.exact_agop.flat()[i]));

    const Vec grid = make_alpha_tilde_grid();
    const Matrix narrow_feature = neural_feature_matrix(ce.narrow_net.stack);
    const Matrix wide_feature = neural_feature_matrix(ce.wide_net.stack);
    const SymEig eig = sym_eig(ce.exact_agop);
    std::string alpha_csv = "alpha,narrow_cosine,wide_cosine\n";
    double max_narrow = -1.0;
    double wide_at_one = 0.0;
    for (double alpha : grid) {
        const Matrix powered = power_from_eig(eig, alpha);
        const double narrow = cosine_similarity(narrow_feature, powered);
        const double wide = cosine_similarity(wide_feature, powered);
        max_narrow = std::max(max_narrow, narrow);
        if (std::fabs(alpha - 1.0) < 1e-9) wide_at_one = wide;
        alpha_csv += format_double(alpha) + ',' + format_double(narrow) + ',' +
                     format_double(wide) + '\n';
    }

    std::string agop_csv = "row,col,empirical,exact\n";
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c)
            agop_csv += std::to_string(r) + ',' + std::to_string(c) + ',' +
                        format_double(empirical(r, c)) + ',' +
                        format_double(ce.exact_agop(r, c)) + '\n';

    std::filesystem::create_directories(dir);
    atomic_write(dir / "relu_sum_agop.csv", agop_csv);
    atomic_write(dir / "relu_sum_alpha_sweep.csv", alpha_csv);
    nlohmann::json summary;
    summary["samples"] = samples;
    summary["max_entry_error"] = max_err;
    summary["max_narrow_cosine"] = max_narrow;
    summary["wide_cosine_at_alpha_1"] = wide_at_one;
    atomic_write(dir / "summary.json", summary.dump(2) + "\n");
    return summary;
}

/// Cosine-versus-n and L1-gap-versus-n curves for the oscillation family.
inline nlohmann::json oscillation_report(const std::filesystem::path& dir,
                                         const std::vector<std::size_t>& ns,
                                         std::size_t samples, std::uint64_t seed) {
    std::string csv =
        "n,cosine,closed_form_cosine,cosine_mc_sigma,l1_gap,closed_form_l1_gap,"
        "max_offdiag,offdiag_mc_sigma\n";
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t n : ns) {
        const OscillationCounterexample ce = oscillation_counterexample(n);
        Rng rng(mix_seed(seed, n));
        const OscillationAnalysis a = analyze_oscillation(ce, samples, rng);
        csv += std::to_string(n) + ',' + format_double(a.cosine) + ',' +
               format_double(ce.closed_form_cosine) + ',' +
               format_double(a.cosine_mc_sigma) + ',' + format_double(a.l1_gap) + ',' +
               format_double(ce.closed_form_l1_gap) + ',' +
               format_double(a.max_offdiag) + ',' + format_double(a.offdiag_mc_sigma) +
               '\n';
        nlohmann::json row;
        row["n"] = n;
        row["cosine"] = a.cosine;
        row["closed_form_cosine"] = ce.closed_form_cosine;
        row["l1_gap"] = a.l1_gap;
        row["closed_form_l1_gap"] = ce.closed_form_l1_gap;
        rows.push_back(row);
    }
    std::filesystem::create_directories(dir);
    atomic_write(dir / "oscillation.csv", csv);
    nlohmann::json summary;
    summary["samples"] = samples;
    summary["rows"] = rows;
    atomic_write(dir / "summary.json", summary.dump(2) + "\n");
    return summary;
}

}  // namespace nfa
