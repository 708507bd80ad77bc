#include <gtest/gtest.h>

#include <filesystem>

#include "nfa/harness.hpp"

using namespace nfa;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "nfa_harness" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

ExperimentConfig smoke_config(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.architecture.depth = 2;
    cfg.architecture.width = 8;
    cfg.architecture.head = HeadKind::relu_head;
    cfg.architecture.balanced = false;
    cfg.target.rank = 2;
    cfg.target.d = 6;
    cfg.target.link = Link::relu;
    cfg.target.sigma = 0.0;
    cfg.data.n = 64;
    cfg.data.seed = 7;
    cfg.optimizer.kind = OptimizerKind::sgd;
    cfg.optimizer.learning_rate = 1e-3;
    cfg.optimizer.weight_decay = 1e-3;
    cfg.optimizer.batch_size = 16;
    cfg.schedule.main_epochs = 80;
    cfg.schedule.extra_epochs = 10;
    cfg.schedule.record_every = 20;
    cfg.output_dir = out_dir;
    return cfg;
}

}  // namespace

TEST(RunExperiment, BalancedLinearGdReachesTheoremCosine) {
    ExperimentConfig cfg;
    cfg.architecture.depth = 2;
    cfg.architecture.width = 12;
    cfg.architecture.head = HeadKind::none;
    cfg.architecture.balanced = true;
    cfg.target.rank = 6;
    cfg.target.d = 6;
    cfg.target.link = Link::identity;
    cfg.target.out_dim = 6;
    cfg.data.n = 64;
    cfg.data.seed = 11;
    cfg.optimizer.kind = OptimizerKind::gd;
    cfg.optimizer.learning_rate = 1e-4;
    cfg.optimizer.weight_decay = 0.0;
    cfg.schedule.main_epochs = 500;
    cfg.schedule.extra_epochs = 0;
    cfg.schedule.record_every = 100;
    cfg.output_dir = fresh_dir("balanced_run").string();

    const RunSummary summary = run(cfg);
    EXPECT_EQ(summary.status, "ok");
    EXPECT_GE(summary.final_cos_inv_l, 0.999);
    EXPECT_NEAR(summary.argmax_alpha_tilde, 1.0, 1e-9);
}

TEST(RunExperiment, ArtifactsOnDisk) {
    const auto dir = fresh_dir("artifacts");
    const ExperimentConfig cfg = smoke_config(dir.string());
    const RunSummary summary = run(cfg);
    EXPECT_EQ(summary.status, "ok");
    for (const char* name : {"config.json", "trace.csv", "alpha_sweep.csv",
                             "data.csv", "data_meta.json", "checkpoint.json",
                             "summary.json"})
        EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;

    // Trace has header + one row per record; checkpoint reloads.
    const std::string trace = read_file(dir / "trace.csv");
    EXPECT_EQ(trace.substr(0, 5), "epoch");
    const Network net = load_checkpoint(dir / "checkpoint.json");
    EXPECT_EQ(net.stack.depth(), 2u);
    const Dataset data = dataset_from_csv(read_file(dir / "data.csv"));
    EXPECT_EQ(data.size(), 64u);
}

TEST(RunExperiment, ByteIdenticalRerun) {
    const auto dir_a = fresh_dir("deterministic_a");
    const auto dir_b = fresh_dir("deterministic_b");
    ExperimentConfig cfg = smoke_config(dir_a.string());
    run(cfg);
    cfg.output_dir = dir_b.string();
    run(cfg);
    for (const char* name : {"trace.csv", "alpha_sweep.csv", "data.csv",
                             "summary.json", "checkpoint.json"})
        EXPECT_EQ(read_file(dir_a / name), read_file(dir_b / name)) << name;
}

TEST(Sweep, ProductCountAndNanIsolation) {
    const auto dir = fresh_dir("sweep");
    ExperimentConfig base = smoke_config(dir.string());
    base.schedule.main_epochs = 30;
    base.schedule.extra_epochs = 0;

    std::vector<SweepAxis> axes;
    axes.push_back({"L", {nlohmann::json(2), nlohmann::json(3)}});
    axes.push_back({"lambda", {nlohmann::json(1e-3), nlohmann::json(1e-2)}});
    const std::vector<SweepRow> rows = sweep(base, axes, 2);
    ASSERT_EQ(rows.size(), 4u);
    for (const SweepRow& row : rows) EXPECT_EQ(row.summary.status, "ok");

    const std::string csv = sweep_to_csv(rows);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    EXPECT_NE(csv.find("sigma,linear_layers,lambda,optimizer"), std::string::npos);
}

TEST(Sweep, DeterministicAcrossJobCounts) {
    const auto dir_a = fresh_dir("sweep_jobs1");
    const auto dir_b = fresh_dir("sweep_jobs2");
    ExperimentConfig base = smoke_config(dir_a.string());
    base.schedule.main_epochs = 25;
    base.schedule.extra_epochs = 0;
    std::vector<SweepAxis> axes;
    axes.push_back({"optimizer", {nlohmann::json("sgd"), nlohmann::json("sgdm"),
                                  nlohmann::json("adam")}});
    const std::string csv_a = sweep_to_csv(sweep(base, axes, 1));
    base.output_dir = dir_b.string();
    const std::string csv_b = sweep_to_csv(sweep(base, axes, 3));
    EXPECT_EQ(csv_a, csv_b);
}

TEST(Sweep, UnknownAxisRejected) {
    ExperimentConfig base = smoke_config(fresh_dir("sweep_bad").string());
    std::vector<SweepAxis> axes;
    axes.push_back({"depht", {nlohmann::json(2)}});
    EXPECT_THROW(sweep(base, axes, 1), ConfigError);
    EXPECT_THROW(axes_from_json(nlohmann::json::object()), ConfigError);
}

TEST(CounterexampleReport, ReluSumFilesAndValues) {
    const auto dir = fresh_dir("ce_relu");
    const auto summary = relu_sum_report(dir, 200000, 99);
    EXPECT_TRUE(std::filesystem::exists(dir / "relu_sum_agop.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "relu_sum_alpha_sweep.csv"));
    EXPECT_LE(summary.at("max_entry_error").get<double>(), 0.02);
    EXPECT_LE(summary.at("max_narrow_cosine").get<double>(), 0.999);
    EXPECT_NEAR(summary.at("wide_cosine_at_alpha_1").get<double>(), 1.0, 1e-10);
}

TEST(CounterexampleReport, OscillationMonotoneCurves) {
    const auto dir = fresh_dir("ce_osc");
    const auto summary = oscillation_report(dir, {1, 2, 5, 10}, 200000, 99);
    const auto& rows = summary.at("rows");
    ASSERT_EQ(rows.size(), 4u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_LT(rows[i].at("cosine").get<double>(),
                  rows[i - 1].at("cosine").get<double>());
        EXPECT_LT(rows[i].at("l1_gap").get<double>(),
                  rows[i - 1].at("l1_gap").get<double>());
    }
    EXPECT_TRUE(std::filesystem::exists(dir / "oscillation.csv"));
}
