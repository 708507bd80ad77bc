#include <gtest/gtest.h>

#include <cmath>

#include "nfa/diagnostics.hpp"
#include "nfa/init.hpp"
#include "nfa/optim.hpp"
#include "nfa/targets.hpp"

using namespace nfa;

namespace {

LinearStack balanced_stack(std::size_t depth, std::size_t width, std::size_t d,
                           std::size_t out, Rng& rng) {
    std::vector<LayerShape> shapes;
    for (std::size_t l = 0; l < depth; ++l)
        shapes.emplace_back(l + 1 == depth ? out : width, l == 0 ? d : width);
    return force_balanced(default_uniform_init(shapes, rng), rng);
}

Matrix random_psd(std::size_t n, Rng& rng) {
    Matrix b(n, n);
    for (double& v : b.flat()) v = rng.uniform(-1.0, 1.0);
    return matmul_tn(b, b);
}

Dataset linear_dataset(std::size_t n, std::size_t d, std::size_t out,
                       std::size_t rank, Rng& rng) {
    const MultiIndexTarget target =
        make_multiindex_target(rank, d, Link::identity, false, out, rng);
    return sample_multiindex(target, n, 0.0, rng);
}

}  // namespace

TEST(AlphaGrid, ContainsUnitScaledExponent) {
    const Vec grid = make_alpha_tilde_grid();
    EXPECT_EQ(grid.size(), 59u);
    bool has_one = false;
    for (double v : grid)
        if (std::fabs(v - 1.0) < 1e-9) has_one = true;
    EXPECT_TRUE(has_one);
}

TEST(AlphaSweep, BalancedStackPeaksAtOneOverL) {
    Rng rng(3);
    const LinearStack stack = balanced_stack(4, 12, 6, 8, rng);
    const Vec grid = make_alpha_tilde_grid();
    Vec alphas;
    for (double at : grid) alphas.push_back(at / 4.0);
    const Vec cosines = alpha_sweep(stack, alphas);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < cosines.size(); ++i)
        if (cosines[i] > cosines[arg]) arg = i;
    EXPECT_NEAR(grid[arg], 1.0, 1e-9);
    EXPECT_GE(cosines[arg], 0.9999);
}

TEST(AlphaSweep, SingleLayerExactAtAlphaOne) {
    Rng rng(5);
    LinearStack stack;
    Matrix w(4, 3);
    for (double& v : w.flat()) v = rng.uniform(-1.0, 1.0);
    stack.weights = {w};
    const Vec cosines = alpha_sweep(stack, {1.0});
    EXPECT_NEAR(cosines[0], 1.0, 1e-12);
}

TEST(AlphaSweep, UnbalancedFreshInitBelowOne) {
    Rng rng(7);
    std::vector<LayerShape> shapes{{12, 6}, {12, 12}, {12, 12}, {12, 12}, {8, 12}};
    const LinearStack stack = default_uniform_init(shapes, rng);
    const Vec cosines = alpha_sweep(stack, {1.0 / 5.0});
    EXPECT_LT(cosines[0], 0.99);
    EXPECT_GT(cosines[0], 0.3);
}

TEST(AlphaSweep, ZeroStackRejected) {
    LinearStack stack;
    stack.weights = {Matrix::zero(3, 3)};
    EXPECT_THROW(alpha_sweep(stack, {0.5}), ZeroMatrixError);
}

TEST(CheckNfaExact, BalancedUntrainedSatisfiedAtTightTolerance) {
    Rng rng(11);
    const LinearStack stack = balanced_stack(3, 10, 5, 7, rng);
    const NfaVerdict v = check_nfa_exact(stack, 1e-8);
    EXPECT_TRUE(v.satisfied);
    EXPECT_GE(v.cosine, 1.0 - 1e-12);
}

TEST(CheckNfaExact, HoldsAfterTraining) {
    Rng rng(13);
    Network net;
    net.head = HeadKind::none;
    net.stack = balanced_stack(3, 8, 5, 6, rng);
    const Dataset data = linear_dataset(48, 5, 6, 5, rng);
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::gd;
    cfg.learning_rate = 1e-4;
    Schedule sched;
    sched.main_epochs = 2000;
    sched.extra_epochs = 0;
    sched.record_every = 500;
    Rng train_rng(14);
    const TrainResult result = train(net, data, cfg, sched, train_rng);
    const NfaVerdict v = check_nfa_exact(result.net.stack, 1e-3);
    EXPECT_TRUE(v.satisfied);
}

TEST(CheckNfaExact, BrokenPremiseDetected) {
    Rng rng(17);
    LinearStack stack = balanced_stack(3, 8, 5, 6, rng);
    stack.weights[0] *= 2.0;  // deliberately unbalance
    const NfaVerdict v = check_nfa_exact(stack, 1e-3);
    EXPECT_FALSE(v.satisfied);
}

TEST(FitLogSlope, RecoversExactExponential) {
    std::vector<double> ts, ys;
    for (int i = 0; i < 100; ++i) {
        const double t = 0.05 * i;
        ts.push_back(t);
        ys.push_back(3.0 * std::exp(-0.7 * t));
    }
    EXPECT_NEAR(fit_log_slope(ts, ys), -0.7, 1e-9);
}

TEST(CheckNfaAsymptotic, ErrorsAndDegenerateFlag) {
    AlignmentTrace trace;
    for (int i = 0; i < 30; ++i) {
        trace.epochs.push_back(i);
        trace.times.push_back(0.01 * i);
        trace.loss.push_back(0.1);
        trace.cos_inv_l.push_back(1.0);
        trace.gap_thm2.push_back(1e-10);
        trace.gap_corollary.push_back(1e-10);
        trace.defects.push_back({0.0});
    }
    EXPECT_THROW(check_nfa_asymptotic(trace, 0.0, 3), InsufficientDecayError);
    AlignmentTrace tiny;
    tiny.epochs.assign(5, 0.0);
    tiny.gap_thm2.assign(5, 1.0);
    EXPECT_THROW(check_nfa_asymptotic(tiny, 1e-2, 3), InsufficientTraceError);
    const AsymptoticFit fit = check_nfa_asymptotic(trace, 1e-2, 3);
    EXPECT_TRUE(fit.degenerate);
}

TEST(CheckNfaAsymptotic, UnbalancedDecayRateWithinTenPercent) {
    // Square layers and a full-rank target keep every weight direction
    // data-pinned, so the only lambda-timescale dynamics left is the defect
    // decay the lemma describes. The fit window then sits past the descent
    // transient.
    Rng rng(19);
    std::vector<LayerShape> shapes(3, {4, 4});
    Network net;
    net.head = HeadKind::none;
    net.stack = default_uniform_init(shapes, rng);
    const Dataset data = linear_dataset(32, 4, 4, 4, rng);

    const double lambda = 1e-2;
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::gd;
    cfg.learning_rate = 1e-4;
    cfg.weight_decay = lambda;
    Schedule sched;
    sched.main_epochs = 1500000;
    sched.extra_epochs = 0;
    sched.record_every = 7500;
    AlignmentTrace trace;
    std::vector<Monitor> monitors{make_alignment_recorder(trace)};
    Rng train_rng(20);
    train(net, data, cfg, sched, train_rng, monitors);

    const AsymptoticFit fit = check_nfa_asymptotic(trace, lambda, 3);
    EXPECT_FALSE(fit.degenerate);
    EXPECT_TRUE(fit.satisfied);
    EXPECT_NEAR(fit.thm2_slope, -2.0 * lambda, 0.1 * 2.0 * lambda);

    std::vector<double> max_defect;
    for (const Vec& d : trace.defects) {
        double m = 0.0;
        for (double v : d) m = std::max(m, v);
        max_defect.push_back(m);
    }
    EXPECT_NEAR(fit_log_slope(trace.times, max_defect), -2.0 * lambda,
                0.02 * 2.0 * lambda);
}

TEST(WihlerBound, KnownValuesAndPropertySweep) {
    const Matrix x = Matrix::identity(2) * 4.0;
    const Matrix y = Matrix::identity(2);
    EXPECT_EQ(wihler_gap_bound(x, x, 2), 0.0);
    const double bound = wihler_gap_bound(x, y, 2);
    EXPECT_NEAR(bound, std::pow(2.0, 0.25) * std::pow(18.0, 0.25), 1e-12);
    EXPECT_NEAR(rooted_power_gap(x, y, 2), std::sqrt(2.0), 1e-12);
    EXPECT_LE(rooted_power_gap(x, y, 2), bound);

    Rng rng(23);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.below(19));
        const std::size_t depth = 2 + static_cast<std::size_t>(rng.below(4));
        const Matrix a = random_psd(n, rng);
        const Matrix b = random_psd(n, rng);
        EXPECT_LE(rooted_power_gap(a, b, depth),
                  wihler_gap_bound(a, b, depth) + 1e-9);
    }
}

TEST(WihlerBound, RejectsIndefinite) {
    EXPECT_THROW(wihler_gap_bound(Matrix{{1, 0}, {0, -1}}, Matrix::identity(2), 2),
                 NotPsdError);
}

TEST(CfBound, UnitCaseAndMonotonicity) {
    // Zero loss, single unit-norm layer, lambda = 1 -> C_F = 1.
    Network net;
    net.stack.weights = {Matrix{{1.0}}};
    Dataset data;
    data.inputs = Matrix(4, 1);
    data.targets = Matrix(4, 1);
    Rng rng(29);
    for (std::size_t i = 0; i < 4; ++i) {
        data.inputs(i, 0) = rng.uniform(-1.0, 1.0);
        data.targets(i, 0) = data.inputs(i, 0);
    }
    EXPECT_NEAR(cf_bound(net, data, 1.0), 1.0, 1e-14);
    // Larger lambda cannot increase the loss contribution.
    Network off;
    off.stack.weights = {Matrix{{0.5}}};
    EXPECT_LE(cf_bound(off, data, 2.0), cf_bound(off, data, 1.0));
    EXPECT_THROW(cf_bound(net, data, 0.0), ConfigError);
}

TEST(CfBound, DominatesLayerNormsAlongDecayedFlow) {
    Rng rng(31);
    std::vector<LayerShape> shapes{{10, 5}, {10, 10}, {8, 10}};
    Network net;
    net.head = HeadKind::none;
    net.stack = default_uniform_init(shapes, rng);
    const Dataset data = linear_dataset(32, 5, 8, 3, rng);
    const double lambda = 1e-2;
    const double bound = cf_bound(net, data, lambda);

    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::gd;
    cfg.learning_rate = 1e-4;
    cfg.weight_decay = lambda;
    Schedule sched;
    sched.main_epochs = 5000;
    sched.extra_epochs = 0;
    sched.record_every = 100;
    double max_norm = 0.0;
    std::vector<Monitor> monitors{[&max_norm](const RecordContext& ctx) {
        for (const Matrix& w : ctx.net->stack.weights)
            max_norm = std::max(max_norm, frobenius_norm(w));
    }};
    Rng train_rng(32);
    train(net, data, cfg, sched, train_rng, monitors);
    EXPECT_LE(max_norm, bound);
}

TEST(TelescopeDefects, BalancedCollapsesTrainedBounded) {
    Rng rng(37);
    const LinearStack balanced = balanced_stack(4, 10, 5, 7, rng);
    for (double gap : telescope_defects(balanced)) EXPECT_LE(gap, 1e-9);

    // Triangle-inequality direction: sum of gaps dominates the total gap.
    std::vector<LayerShape> shapes{{10, 5}, {10, 10}, {10, 10}, {7, 10}};
    const LinearStack fresh = default_uniform_init(shapes, rng);
    const Vec gaps = telescope_defects(fresh);
    double sum = 0.0;
    for (double g : gaps) sum += g;
    const Matrix total =
        agop_linear(fresh) -
        matrix_int_power(neural_feature_matrix(fresh), fresh.depth());
    EXPECT_GE(sum, frobenius_norm(total) - 1e-12);
}

TEST(TelescopeDefects, TwoLayerClosedForm) {
    Rng rng(41);
    std::vector<LayerShape> shapes{{6, 4}, {5, 6}};
    const LinearStack stack = default_uniform_init(shapes, rng);
    const Vec gaps = telescope_defects(stack);
    ASSERT_EQ(gaps.size(), 1u);
    const Matrix& w1 = stack.weights[0];
    const Matrix& w2 = stack.weights[1];
    const Matrix inner = matmul_tn(w2, w2) - matmul_nt(w1, w1);
    const Matrix expected = matmul(matmul_tn(w1, inner), w1);
    EXPECT_NEAR(gaps[0], frobenius_norm(expected), 1e-10);
}

TEST(TelescopeDefects, TrainedDecayRunObeysTermwiseBound) {
    Rng rng(43);
    std::vector<LayerShape> shapes{{10, 5}, {10, 10}, {8, 10}};
    Network net;
    net.head = HeadKind::none;
    net.stack = default_uniform_init(shapes, rng);
    const Dataset data = linear_dataset(48, 5, 8, 3, rng);
    const double lambda = 1e-2;
    const double c_max = balance_report(net.stack).c_max;
    const double cf = std::max(cf_bound(net, data, lambda), 1.0);

    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::gd;
    cfg.learning_rate = 1e-4;
    cfg.weight_decay = lambda;
    Schedule sched;
    sched.main_epochs = 20000;
    sched.extra_epochs = 0;
    sched.record_every = 500;

    struct Snapshot {
        double time;
        Vec gaps;
    };
    std::vector<Snapshot> snapshots;
    std::vector<Monitor> monitors{[&snapshots](const RecordContext& ctx) {
        snapshots.push_back({ctx.time, telescope_defects(ctx.net->stack)});
    }};
    Rng train_rng(44);
    train(net, data, cfg, sched, train_rng, monitors);

    const std::size_t depth = 3;
    const std::size_t burn_in = snapshots.size() / 5;
    for (std::size_t s = burn_in; s < snapshots.size(); ++s) {
        for (std::size_t l = 1; l < depth; ++l) {
            const double bound = std::pow(2.0, static_cast<double>(depth - l)) *
                                 std::exp(-2.0 * lambda * snapshots[s].time) * c_max *
                                 std::pow(cf, 2.0 * static_cast<double>(depth - l));
            EXPECT_LE(snapshots[s].gaps[l - 1], bound)
                << "pair " << l << " at t = " << snapshots[s].time;
        }
    }
}

TEST(BalancedIdentity, PowerSandwichCollapses) {
    // W_l^T (W_{l+1}^T W_{l+1})^k W_l = (W_l^T W_l)^{k+1} on balanced stacks.
    Rng rng(47);
    const LinearStack stack = balanced_stack(4, 10, 5, 7, rng);
    for (std::size_t l = 0; l + 1 < stack.depth(); ++l) {
        const Matrix& w = stack.weights[l];
        const Matrix& wn = stack.weights[l + 1];
        const Matrix gram_next = matmul_tn(wn, wn);
        const Matrix gram = matmul_tn(w, w);
        for (std::size_t k = 1; k <= 4; ++k) {
            const Matrix lhs =
                matmul(matmul_tn(w, matrix_int_power(gram_next, k)), w);
            const Matrix rhs = matrix_int_power(gram, k + 1);
            EXPECT_LE(frobenius_norm(lhs - rhs),
                      1e-8 * (1.0 + frobenius_norm(rhs)))
                << "pair " << l << " power " << k;
        }
    }
}

TEST(CosineInvariance, GlobalSigmaRescaleKeepsArgmax) {
    Rng rng(53);
    LinearStack stack = balanced_stack(3, 9, 5, 6, rng);
    const Vec grid = make_alpha_tilde_grid();
    Vec alphas;
    for (double at : grid) alphas.push_back(at / 3.0);
    const Vec before = alpha_sweep(stack, alphas);
    for (Matrix& w : stack.weights) w *= 1.7;
    const Vec after = alpha_sweep(stack, alphas);
    std::size_t arg_before = 0, arg_after = 0;
    for (std::size_t i = 1; i < before.size(); ++i) {
        if (before[i] > before[arg_before]) arg_before = i;
        if (after[i] > after[arg_after]) arg_after = i;
    }
    EXPECT_EQ(arg_before, arg_after);
    EXPECT_NEAR(grid[arg_before], 1.0, 1e-9);
    // Cosine at the peak is scale-invariant.
    EXPECT_NEAR(before[arg_before], after[arg_after], 1e-9);
}

TEST(AlignmentRecorder, WihlerRelationHoldsOnEveryRecord) {
    Rng rng(59);
    std::vector<LayerShape> shapes{{8, 4}, {8, 8}, {6, 8}};
    Network net;
    net.head = HeadKind::none;
    net.stack = default_uniform_init(shapes, rng);
    const Dataset data = linear_dataset(32, 4, 6, 2, rng);
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::gd;
    cfg.learning_rate = 1e-4;
    cfg.weight_decay = 1e-2;
    Schedule sched;
    sched.main_epochs = 3000;
    sched.extra_epochs = 0;
    sched.record_every = 100;

    struct Entry {
        double rooted;
        double bound;
    };
    std::vector<Entry> entries;
    std::vector<Monitor> monitors{[&entries](const RecordContext& ctx) {
        const Matrix agop = agop_linear(ctx.net->stack);
        const Matrix feature_l =
            matrix_int_power(neural_feature_matrix(ctx.net->stack),
                             ctx.net->stack.depth());
        entries.push_back(
            {rooted_power_gap(agop, feature_l, ctx.net->stack.depth()),
             wihler_gap_bound(agop, feature_l, ctx.net->stack.depth())});
    }};
    Rng train_rng(60);
    train(net, data, cfg, sched, train_rng, monitors);
    for (const Entry& e : entries) EXPECT_LE(e.rooted, e.bound + 1e-9);
}

TEST(TelescopeDefects, TooShallowThrows) {
    LinearStack stack;
    stack.weights = {Matrix::identity(3)};
    EXPECT_THROW(telescope_defects(stack), TooShallowError);
    EXPECT_THROW(check_nfa_exact(stack, 1e-3), TooShallowError);
}
