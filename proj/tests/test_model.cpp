#include <doctest.h>

#include <filesystem>

#include "grd/checkpoint.hpp"
#include "grd/errors.hpp"
#include "grd/io_util.hpp"
#include "grd/model.hpp"

using namespace grd;

namespace {

Tensor2 random_rows(RngStream& rng, int rows, int cols) {
    Tensor2 t(rows, cols);
    for (double& v : t.data) v = rng.normal(0.0, 1.0);
    return t;
}

TrajectoryDataset tiny_dataset(std::uint64_t seed, std::uint64_t count, int max_links, int steps) {
    GenerationConfig cfg;
    cfg.trajectories = count;
    cfg.max_links = max_links;
    cfg.n_steps = steps;
    cfg.dt = 0.1;
    return generate_dataset(cfg, seed);
}

}  // namespace

TEST_SUITE_BEGIN("grd_model");

TEST_CASE("built parameter counts match the closed form") {
    const Network toy = build_grd(3, 64, 2, 4, 1);
    CHECK(toy.store.total_values() == toy.arch.parameter_count(ModelKind::Grd));

    std::size_t manual = 0;
    for (int i = 0; i < toy.store.count(); ++i) manual += toy.store.at(i).value.size();
    CHECK(manual == toy.arch.parameter_count(ModelKind::Grd));

    // Reference-scale metadata stays constructible as a count (not trained):
    // tens of blocks at d_model 512 put the total in the 1e8 range.
    const GrdArchitecture big = make_architecture(ModelKind::Grd, 3, 512, 64, 8);
    CHECK(big.parameter_count(ModelKind::Grd) > 100'000'000u);
    CHECK(big.parameter_count(ModelKind::Grd) < 400'000'000u);
}

TEST_CASE("same seed builds identical networks") {
    const Network a = build_grd(3, 32, 1, 2, 42);
    const Network b = build_grd(3, 32, 1, 2, 42);
    for (int i = 0; i < a.store.count(); ++i)
        CHECK(a.store.at(i).value.data == b.store.at(i).value.data);
    const Network c = build_grd(3, 32, 1, 2, 43);
    CHECK(c.store.at(0).value.data != a.store.at(0).value.data);
}

TEST_CASE("prediction is causal row by row") {
    const Network net = build_grd(3, 32, 2, 4, 7);
    RngStream rng(70);
    const Tensor2 x = random_rows(rng, 20, 9);
    const Tensor2 y = grd_forward(net, x);
    CHECK(y.rows == 20);
    CHECK(y.cols == 6);

    Tensor2 xp = x;
    for (int c = 0; c < 9; ++c) xp.at(10, c) += rng.normal(0.0, 3.0);
    const Tensor2 yp = grd_forward(net, xp);
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 6; ++c) CHECK(yp.at(r, c) == y.at(r, c));
    bool later_changed = false;
    for (int c = 0; c < 6; ++c) later_changed = later_changed || yp.at(10, c) != y.at(10, c);
    CHECK(later_changed);
}

TEST_CASE("single rows and padded narrow inputs are accepted") {
    const Network net = build_grd(3, 32, 1, 2, 8);
    RngStream rng(71);
    const Tensor2 one = random_rows(rng, 1, 9);
    const Tensor2 y1 = grd_forward(net, one);
    CHECK(y1.rows == 1);
    CHECK(y1.all_finite());

    // Two-link rows padded to width 9: zero the third joint columns.
    Tensor2 two = random_rows(rng, 12, 9);
    for (int t = 0; t < 12; ++t) two.at(t, 2) = two.at(t, 5) = two.at(t, 8) = 0.0;
    const Tensor2 y2 = grd_forward(net, two);
    CHECK(y2.all_finite());

    Tensor2 too_long = random_rows(rng, 51, 9);
    CHECK_THROWS_AS(grd_forward(net, too_long), ShapeMismatch);
}

TEST_CASE("full network gradients match central differences") {
    Network net = build_grd(2, 16, 2, 2, 9);
    RngStream rng(72);
    const Tensor2 x = random_rows(rng, 6, 6);
    const Tensor2 target = random_rows(rng, 6, 4);
    Tensor2 mask(6, 4);
    for (double& v : mask.data) v = 1.0;

    auto loss_fn = [&](bool compute_grad) {
        NetCache cache;
        const Tensor2 pred = net_forward(net, x, 6, compute_grad ? &cache : nullptr);
        const LossGrad lg = masked_mse(pred, target, mask, 24.0);
        if (compute_grad) net_backward(net, cache, 6, lg.grad);
        return lg.loss;
    };
    RngStream probe_rng(73);
    CHECK(gradient_check(loss_fn, net.store, 80, 1e-5, probe_rng) < 1e-5);
}

TEST_CASE("unmasked second attention still keeps the first one causal") {
    const Network net = build_grd(2, 16, 1, 2, 10, /*second_attention_causal=*/false);
    RngStream rng(74);
    const Tensor2 x = random_rows(rng, 8, 6);
    const Tensor2 y = net_forward(net, x, 8, nullptr);
    Tensor2 xp = x;
    xp.at(7, 0) += 1.0;
    const Tensor2 yp = net_forward(net, xp, 8, nullptr);
    // With a non-causal layer in the block, earlier outputs may move.
    bool changed = false;
    for (int c = 0; c < 4; ++c) changed = changed || yp.at(0, c) != y.at(0, c);
    CHECK(changed);
}

TEST_CASE("checkpoints round-trip bitwise and reject corruption") {
    Network net = build_grd(3, 32, 1, 2, 11);
    net.norm_stats.max_dim = 3;
    net.norm_stats.mean.assign(9, 0.25);
    net.norm_stats.stdev.assign(9, 2.0);

    const auto path = (std::filesystem::temp_directory_path() / "grd_ckpt_rt.grdm").string();
    save_checkpoint(net, path);
    const Network back = load_checkpoint(path);

    CHECK(back.kind == net.kind);
    CHECK(back.arch.d_model == 32);
    CHECK(back.arch.second_attention_causal);
    CHECK(back.norm_stats.mean == net.norm_stats.mean);
    for (int i = 0; i < net.store.count(); ++i) {
        CHECK(back.store.at(i).name == net.store.at(i).name);
        CHECK(back.store.at(i).value.data == net.store.at(i).value.data);
    }

    RngStream rng(75);
    const Tensor2 x = random_rows(rng, 5, 9);
    CHECK(grd_forward(net, x).data == grd_forward(back, x).data);

    auto bytes = read_file(path);
    bytes[bytes.size() / 3] ^= 0x01;
    write_file(path, bytes);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("the per-row baseline ignores row order") {
    const Network mlp = build_mlp(3, 32, 12);
    CHECK(mlp.store.total_values() == mlp.arch.parameter_count(ModelKind::Mlp));

    RngStream rng(76);
    const Tensor2 x = random_rows(rng, 10, 9);
    const Tensor2 y = net_forward(mlp, x, 10, nullptr);

    // Row r is bitwise independent of every other row.
    Tensor2 xp = x;
    for (int r = 0; r < 10; ++r)
        if (r != 4)
            for (int c = 0; c < 9; ++c) xp.at(r, c) += rng.normal(0.0, 2.0);
    const Tensor2 yp = net_forward(mlp, xp, 10, nullptr);
    for (int c = 0; c < 6; ++c) CHECK(yp.at(4, c) == y.at(4, c));

    // Permuting rows permutes predictions (up to GEMM panel rounding, which
    // regroups accumulation when a row lands in a different panel position).
    Tensor2 reversed(10, 9);
    for (int r = 0; r < 10; ++r) reversed.mat().row(r) = x.mat().row(9 - r);
    const Tensor2 yr = net_forward(mlp, reversed, 10, nullptr);
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 6; ++c)
            CHECK(yr.at(r, c) == doctest::Approx(y.at(9 - r, c)).epsilon(1e-12));
}

TEST_CASE("baseline with 7200 hidden neurons is constructible") {
    // Five layers, four hidden blocks of width 1800.
    const GrdArchitecture arch = make_architecture(ModelKind::Mlp, 3, 1800, 5, 1);
    CHECK(3 * 1800 + 1800 == 7200);  // hidden neuron count behind the closed form
    const std::size_t count = arch.parameter_count(ModelKind::Mlp);
    CHECK(count > 9'000'000u);
    CHECK(count < 11'000'000u);
}

TEST_CASE("evaluation identities hold on a small dataset") {
    const TrajectoryDataset ds = tiny_dataset(500, 60, 2, 10);
    const NormStats stats = compute_normalization(ds);

    const EvalMetrics base = baseline_persistence(ds, stats);
    CHECK(base.rmse_norm > 0.0);

    // Decomposition: total^2 = weighted mean of the component squares. Both
    // components cover the same entry count here.
    const double combined =
        std::sqrt(0.5 * (base.rmse_pos_norm * base.rmse_pos_norm +
                         base.rmse_vel_norm * base.rmse_vel_norm));
    CHECK(combined == doctest::Approx(base.rmse_norm).epsilon(1e-12));

    // Independent recomputation of the persistence error.
    double sq = 0.0;
    std::uint64_t n = 0;
    for (const auto& rec : ds.records) {
        PaddedTrajectory rows = to_padded_rows(rec.trajectory, ds.max_dim);
        normalize_rows(rows, stats);
        for (int t = 0; t < rows.input.rows; ++t)
            for (int j = 0; j < rec.trajectory.dimension; ++j) {
                const double eq = rows.input.at(t, j) - rows.target.at(t, j);
                const double ev = rows.input.at(t, 2 + j) - rows.target.at(t, 2 + j);
                sq += eq * eq + ev * ev;
                n += 2;
            }
    }
    CHECK(std::sqrt(sq / n) == doctest::Approx(base.rmse_norm).epsilon(1e-12));

    // Evaluation of a network is deterministic.
    Network net = build_grd(2, 16, 1, 2, 13);
    net.norm_stats = stats;
    const EvalMetrics a = eval_rmse(net, ds);
    const EvalMetrics b = eval_rmse(net, ds);
    CHECK(a.rmse_norm == b.rmse_norm);
    CHECK(a.rmse_phys == b.rmse_phys);
}

TEST_CASE("a short training run learns past the no-change baseline") {
    const TrajectoryDataset ds = tiny_dataset(700, 500, 2, 10);
    auto [train, eval] = split_dataset(ds, 0.9, 1);

    Network net = build_grd(2, 32, 1, 2, 14);
    TrainConfig cfg;
    cfg.epochs = 25;
    cfg.batch_size = 32;
    cfg.adam.lr = 1e-3;
    cfg.seed = 2;
    cfg.verbose = false;
    const TrainResult result = train_network(net, train, eval, cfg);

    const EvalMetrics base = baseline_persistence(eval, net.norm_stats);
    CHECK(result.best_eval.rmse_norm < base.rmse_norm);

    // Loss on the first batches trends down.
    REQUIRE(result.history.size() == 25);
    CHECK(result.history.back().train_rmse < result.history.front().train_rmse);
}

TEST_CASE("training is reproducible and starts from the saved initial loss") {
    const TrajectoryDataset ds = tiny_dataset(701, 120, 2, 8);
    auto [train, eval] = split_dataset(ds, 0.8, 1);

    auto run = [&](Network& net) {
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 16;
        cfg.seed = 5;
        cfg.verbose = false;
        return train_network(net, train, eval, cfg);
    };

    Network net1 = build_grd(2, 16, 1, 2, 15);
    Network net2 = build_grd(2, 16, 1, 2, 15);

    // Reconstruct the first batch loss from the untouched initial network.
    Network initial = build_grd(2, 16, 1, 2, 15);
    initial.norm_stats = compute_normalization(train);
    TrajectoryDataset view = train;
    view.max_dim = initial.arch.max_dim;
    std::vector<std::size_t> order(view.records.size());
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle_rng = RngStream::derive(5, 0);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
    order.resize(16);
    const Batch first = make_state_batch(view, order, initial.norm_stats);
    const Tensor2 pred = net_forward(initial, first.input, first.seq_len, nullptr);
    const double expected_first = masked_mse(pred, first.target, first.mask, first.mask_count).loss;

    const TrainResult r1 = run(net1);
    const TrainResult r2 = run(net2);
    CHECK(r1.first_batch_loss == expected_first);
    CHECK(r1.first_batch_loss == r2.first_batch_loss);
    for (int i = 0; i < net1.store.count(); ++i)
        CHECK(net1.store.at(i).value.data == net2.store.at(i).value.data);
    for (std::size_t e = 0; e < r1.history.size(); ++e) {
        CHECK(r1.history[e].train_rmse == r2.history[e].train_rmse);
        CHECK(r1.history[e].eval_rmse == r2.history[e].eval_rmse);
    }
}

TEST_SUITE_END();
