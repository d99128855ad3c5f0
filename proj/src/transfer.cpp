#include "grd/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "grd/errors.hpp"
#include "grd/inverse.hpp"
#include "grd/log.hpp"

namespace grd {

namespace {

Eigen::VectorXd draw_vector(RngStream& rng, int n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
    return v;
}

bool capped(const JointState& s) {
    return s.q.allFinite() && s.qdot.allFinite() && s.qdot.cwiseAbs().maxCoeff() <= kVelocityCap;
}

/// Parameters tuned during transfer: the output layer, widened by the last
/// `tune_blocks` blocks when requested.
std::vector<int> tuned_handles(const Network& net, int tune_blocks) {
    std::vector<int> handles;
    std::vector<std::string> prefixes = {"output."};
    for (int k = 0; k < tune_blocks; ++k) {
        const int idx = net.arch.n_blocks - 1 - k;
        if (idx >= 0) prefixes.push_back("block" + std::to_string(idx) + ".");
    }
    for (int i = 0; i < net.store.count(); ++i)
        for (const std::string& p : prefixes)
            if (net.store.at(i).name.rfind(p, 0) == 0) {
                handles.push_back(i);
                break;
            }
    return handles;
}

double masked_rmse(const Tensor2& pred, const Batch& batch) {
    double sq = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double e = (pred.data[i] - batch.target.data[i]) * batch.mask.data[i];
        sq += e * e;
    }
    return std::sqrt(sq / batch.mask_count);
}

double masked_torque_rmse_nm(const Tensor2& pred, const Batch& batch, const NormStats& stats) {
    const int o = stats.max_dim;
    double sq = 0.0;
    std::uint64_t n = 0;
    for (int r = 0; r < pred.rows; ++r)
        for (int j = 0; j < o; ++j) {
            if (batch.mask.at(r, j) == 0.0) continue;
            const double e = (pred.at(r, j) - batch.target.at(r, j)) * stats.stdev[2 * o + j];
            sq += e * e;
            ++n;
        }
    return std::sqrt(sq / static_cast<double>(n));
}

std::vector<double> snapshot(const ParamStore& store, const std::vector<int>& handles) {
    std::vector<double> out;
    for (int h : handles)
        out.insert(out.end(), store.at(h).value.data.begin(), store.at(h).value.data.end());
    return out;
}

void restore(ParamStore& store, const std::vector<int>& handles, const std::vector<double>& values) {
    std::size_t offset = 0;
    for (int h : handles) {
        auto& data = store.at(h).value.data;
        std::copy(values.begin() + offset, values.begin() + offset + data.size(), data.begin());
        offset += data.size();
    }
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

}  // namespace

TargetRobot sample_target_robot(std::uint64_t seed, int dimension, const RealityGap& gap,
                                int probe_steps, double dt) {
    RngStream rng = RngStream::derive(seed, 0);
    for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
        const RobotModel model = sample_robot_model(rng, dimension, dimension);
        JointState s{draw_vector(rng, dimension, -M_PI, M_PI), draw_vector(rng, dimension, -1.0, 1.0)};
        bool ok = capped(s);
        for (int t = 0; ok && t < probe_steps; ++t) {
            const Eigen::VectorXd tau =
                draw_vector(rng, dimension, ParamRanges::kTorqueMin, ParamRanges::kTorqueMax);
            try {
                s = rk4_step(model, s, tau, dt);
            } catch (const NonFiniteState&) {
                ok = false;
                break;
            }
            ok = capped(s);
        }
        if (ok) return TargetRobot{model, gap};
    }
    throw RejectionOverflow("no target candidate survived the bubbling probe");
}

Trajectory collect_target_data(const TargetRobot& target, int steps, std::uint64_t seed, double dt) {
    if (steps < 10) throw InvalidConfig("target data collection needs at least 10 steps");
    const int d = target.model.dimension;
    RngStream rng = RngStream::derive(seed, 1);

    for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
        Trajectory traj;
        traj.dimension = d;
        traj.dt = dt;
        traj.states.reserve(steps + 1);
        traj.torques.reserve(steps);

        JointState s{draw_vector(rng, d, -M_PI, M_PI), draw_vector(rng, d, -1.0, 1.0)};
        traj.states.push_back(s);
        bool ok = capped(s);
        for (int t = 0; ok && t < steps; ++t) {
            const Eigen::VectorXd commanded =
                draw_vector(rng, d, ParamRanges::kTorqueMin, ParamRanges::kTorqueMax);
            Eigen::VectorXd applied = commanded;
            for (int j = 0; j < d; ++j) applied[j] += rng.normal(0.0, target.gap.disturbance_torque);
            try {
                s = rk4_step(target.model, s, applied, dt);
            } catch (const NonFiniteState&) {
                ok = false;
                break;
            }
            ok = capped(s);
            if (ok) {
                traj.states.push_back(s);
                traj.torques.push_back(commanded);
            }
        }
        if (!ok) continue;

        // Observation noise goes on the recorded states only; the dynamics
        // above ran on the true ones.
        bool recorded_ok = true;
        for (JointState& rec : traj.states) {
            for (int j = 0; j < d; ++j) {
                rec.q[j] += rng.normal(0.0, target.gap.obs_noise_q);
                rec.qdot[j] += rng.normal(0.0, target.gap.obs_noise_qdot);
            }
            recorded_ok = recorded_ok && capped(rec);
        }
        if (recorded_ok) return traj;
    }
    throw RejectionOverflow("target data collection kept violating the velocity cap");
}

std::pair<TrajectoryDataset, TrajectoryDataset> window_target_data(const TargetRobot& target,
                                                                   const Trajectory& data,
                                                                   int window, double train_fraction,
                                                                   std::uint64_t seed) {
    if (window < 1) throw InvalidConfig("window must be >= 1");
    const int count = data.steps() / window;
    if (count < 2) throw InvalidConfig("target data too short for a train/test split");

    TrajectoryDataset windows;
    windows.max_dim = target.model.dimension;
    windows.n_steps = window;
    windows.dt = data.dt;
    for (int w = 0; w < count; ++w) {
        Trajectory slice;
        slice.dimension = data.dimension;
        slice.dt = data.dt;
        slice.states.assign(data.states.begin() + w * window,
                            data.states.begin() + (w + 1) * window + 1);
        slice.torques.assign(data.torques.begin() + w * window,
                             data.torques.begin() + (w + 1) * window);
        windows.records.push_back({target.model, std::move(slice)});
    }

    auto [train, test] = split_dataset(windows, train_fraction, seed);
    if (test.records.empty()) {
        test.records.push_back(train.records.back());
        train.records.pop_back();
    }
    return {std::move(train), std::move(test)};
}

std::string transfer_report_to_json(const TransferReport& report) {
    nlohmann::json j;
    j["zero_shot_rmse"] = report.zero_shot_rmse;
    j["final_rmse"] = report.final_rmse;
    j["tuned_parameters"] = report.tuned_parameters;
    j["data_budget_rows"] = report.data_budget_rows;
    j["steps"] = report.history.size();
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& [train_m, test_m] : report.history) hist.push_back({train_m, test_m});
    j["history"] = hist;
    if (report.composite_torque_rmse >= 0.0) j["composite_torque_rmse"] = report.composite_torque_rmse;
    if (report.composite_state_rmse >= 0.0) j["composite_state_rmse"] = report.composite_state_rmse;
    return j.dump(2);
}

void write_transfer_history_csv(const std::string& path, const TransferReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "step,train_rmse,test_rmse\n";
    for (std::size_t i = 0; i < report.history.size(); ++i)
        out << i << ',' << report.history[i].first << ',' << report.history[i].second << '\n';
}

TransferReport adapt_to_target(Network& net, const TargetRobot& target, const Trajectory& data,
                               const TransferConfig& cfg) {
    if (net.kind != ModelKind::Grd && net.kind != ModelKind::Mlp)
        throw InvalidConfig("adapt_to_target expects a dynamics network");
    if (target.model.dimension > net.arch.max_dim)
        throw DimensionMismatch("target dimension exceeds the network's max_dim");
    if (net.norm_stats.empty()) throw InvalidConfig("checkpoint carries no normalization stats");

    auto [train_ds, test_ds] =
        window_target_data(target, data, cfg.window, cfg.train_fraction, cfg.seed);
    TrajectoryDataset train_view = train_ds, test_view = test_ds;
    train_view.max_dim = test_view.max_dim = net.arch.max_dim;

    const Batch train_batch = make_state_batch(train_view, all_indices(train_view.size()), net.norm_stats);
    const Batch test_batch = make_state_batch(test_view, all_indices(test_view.size()), net.norm_stats);

    const std::vector<int> handles = tuned_handles(net, cfg.tune_blocks);
    AdamState adam(net.store);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;

    TransferReport report;
    for (int h : handles) report.tuned_parameters.push_back(net.store.at(h).name);
    report.data_budget_rows = static_cast<std::uint64_t>(train_batch.input.rows);

    const bool fast = cfg.tune_blocks == 0 && net.blocks.size() + net.mlp_layers.size() > 0;
    Tensor2 trunk_train, trunk_test;
    if (fast) {
        trunk_train = net_trunk_forward(net, train_batch.input, train_batch.seq_len);
        trunk_test = net_trunk_forward(net, test_batch.input, test_batch.seq_len);
    }

    auto test_metric = [&]() {
        const Tensor2 pred = fast ? net.output.forward(net.store, trunk_test)
                                  : net_forward(net, test_batch.input, test_batch.seq_len, nullptr);
        return masked_rmse(pred, test_batch);
    };

    report.zero_shot_rmse = test_metric();
    double best = report.zero_shot_rmse;
    std::vector<double> best_values = snapshot(net.store, handles);
    int since_best = 0;

    for (int step = 0; step < cfg.steps && since_best < cfg.patience; ++step) {
        net.store.zero_grads();
        double train_metric;
        if (fast) {
            const Tensor2 pred = net.output.forward(net.store, trunk_train);
            const LossGrad lg = masked_mse(pred, train_batch.target, train_batch.mask,
                                           train_batch.mask_count);
            net.output.backward(net.store, trunk_train, lg.grad);
            train_metric = std::sqrt(lg.loss);
        } else {
            NetCache cache;
            const Tensor2 pred = net_forward(net, train_batch.input, train_batch.seq_len, &cache);
            const LossGrad lg = masked_mse(pred, train_batch.target, train_batch.mask,
                                           train_batch.mask_count);
            net_backward(net, cache, train_batch.seq_len, lg.grad);
            train_metric = std::sqrt(lg.loss);
        }
        if (!std::isfinite(train_metric)) throw NonFiniteLoss("transfer step " + std::to_string(step));
        adam.update(net.store, adam_cfg, 1.0, handles);

        const double test_m = test_metric();
        report.history.emplace_back(train_metric, test_m);
        if (test_m < best) {
            best = test_m;
            best_values = snapshot(net.store, handles);
            since_best = 0;
        } else {
            ++since_best;
        }
    }

    restore(net.store, handles, best_values);
    report.final_rmse = best;
    if (cfg.verbose)
        log_info("transfer: zero-shot " + std::to_string(report.zero_shot_rmse) + " -> best " +
                 std::to_string(best) + " after " + std::to_string(report.history.size()) + " steps");
    return report;
}

Network specialize_to_model(const Network& grd, const RobotModel& nominal,
                            const SpecializeConfig& cfg) {
    if (grd.kind != ModelKind::Grd) throw InvalidConfig("specialization expects a dynamics network");
    if (nominal.dimension > grd.arch.max_dim)
        throw DimensionMismatch("nominal dimension exceeds the network's max_dim");

    GenerationConfig gen;
    gen.trajectories = cfg.trajectories;
    gen.max_links = grd.arch.max_dim;
    gen.n_steps = cfg.n_steps;
    gen.dt = cfg.dt;
    const RobotModel base = nominal;
    const double lo = cfg.perturb_lo, hi = cfg.perturb_hi;
    gen.model_sampler = [base, lo, hi](RngStream& rng) { return perturb_model(base, lo, hi, rng); };

    const TrajectoryDataset ds = generate_dataset(gen, cfg.seed);
    auto [train, eval] = split_dataset(ds, 0.9, cfg.seed + 1);

    Network specific = grd;  // keeps parameters and normalization stats
    train_network(specific, train, eval, cfg.train);
    return specific;
}

TransferReport adapt_inverse_to_target(Network& inv, const Network& grd, const TargetRobot& target,
                                       const Trajectory& data, const TransferConfig& cfg) {
    if (inv.kind != ModelKind::InvGeneral && inv.kind != ModelKind::InvLeft &&
        inv.kind != ModelKind::InvRight)
        throw InvalidConfig("adapt_inverse_to_target expects an inverse network");
    if (grd.arch.max_dim != inv.arch.max_dim) throw DimensionMismatch("network max_dim mismatch");
    if (target.model.dimension > inv.arch.max_dim)
        throw DimensionMismatch("target dimension exceeds the network's max_dim");
    if (inv.norm_stats.empty()) throw InvalidConfig("checkpoint carries no normalization stats");

    auto [train_ds, test_ds] =
        window_target_data(target, data, cfg.window, cfg.train_fraction, cfg.seed);
    TrajectoryDataset train_view = train_ds, test_view = test_ds;
    train_view.max_dim = test_view.max_dim = inv.arch.max_dim;
    const int o = inv.arch.max_dim;

    const Batch train_state = make_state_batch(train_view, all_indices(train_view.size()), inv.norm_stats);
    const Batch test_state = make_state_batch(test_view, all_indices(test_view.size()), inv.norm_stats);

    const Network* grd_for_inputs = inv.kind == ModelKind::InvRight ? &grd : nullptr;
    const Batch train_b = make_inverse_batch(train_view, all_indices(train_view.size()),
                                             inv.norm_stats, grd_for_inputs);
    const Batch test_b = make_inverse_batch(test_view, all_indices(test_view.size()), inv.norm_stats,
                                            grd_for_inputs);

    const std::vector<int> handles = tuned_handles(inv, cfg.tune_blocks);
    AdamState adam(inv.store);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;

    TransferReport report;
    for (int h : handles) report.tuned_parameters.push_back(inv.store.at(h).name);
    report.data_budget_rows = static_cast<std::uint64_t>(train_b.input.rows);

    const bool left = inv.kind == ModelKind::InvLeft;
    const bool fast = cfg.tune_blocks == 0;
    Network grd_scratch = grd;  // backward scratch for the left objective

    Tensor2 trunk_train, trunk_test;
    if (fast) {
        trunk_train = net_trunk_forward(inv, train_b.input, train_b.seq_len);
        trunk_test = net_trunk_forward(inv, test_b.input, test_b.seq_len);
    }

    auto forward_tau = [&](const Batch& b, const Tensor2& trunk) {
        return fast ? inv.output.forward(inv.store, trunk)
                    : net_forward(inv, b.input, b.seq_len, nullptr);
    };

    // Test metric in the kind's own domain: composite state RMSE for the left
    // inverse, torque RMSE in N*m otherwise.
    auto test_metric = [&]() {
        const Tensor2 tau_hat = forward_tau(test_b, trunk_test);
        if (!left) return masked_torque_rmse_nm(tau_hat, test_b, inv.norm_stats);
        Tensor2 grd_in(test_state.input.rows, 3 * o);
        grd_in.mat().leftCols(2 * o) = test_state.input.mat().leftCols(2 * o);
        grd_in.mat().rightCols(o) = tau_hat.mat();
        const Tensor2 shat = net_forward(grd, grd_in, test_state.seq_len, nullptr);
        return masked_rmse(shat, test_state);
    };

    report.zero_shot_rmse = test_metric();
    double best = report.zero_shot_rmse;
    std::vector<double> best_values = snapshot(inv.store, handles);
    int since_best = 0;

    for (int step = 0; step < cfg.steps && since_best < cfg.patience; ++step) {
        inv.store.zero_grads();
        double train_metric;
        if (!left) {
            NetCache cache;
            Tensor2 pred;
            if (fast) {
                pred = inv.output.forward(inv.store, trunk_train);
            } else {
                pred = net_forward(inv, train_b.input, train_b.seq_len, &cache);
            }
            const LossGrad lg = masked_mse(pred, train_b.target, train_b.mask, train_b.mask_count);
            if (fast) {
                inv.output.backward(inv.store, trunk_train, lg.grad);
            } else {
                net_backward(inv, cache, train_b.seq_len, lg.grad);
            }
            train_metric = masked_torque_rmse_nm(pred, train_b, inv.norm_stats);
        } else {
            NetCache inv_cache;
            Tensor2 tau_hat;
            if (fast) {
                tau_hat = inv.output.forward(inv.store, trunk_train);
            } else {
                tau_hat = net_forward(inv, train_b.input, train_b.seq_len, &inv_cache);
            }
            Tensor2 grd_in(train_state.input.rows, 3 * o);
            grd_in.mat().leftCols(2 * o) = train_state.input.mat().leftCols(2 * o);
            grd_in.mat().rightCols(o) = tau_hat.mat();
            NetCache grd_cache;
            const Tensor2 shat = net_forward(grd_scratch, grd_in, train_state.seq_len, &grd_cache);
            const LossGrad lg =
                masked_mse(shat, train_state.target, train_state.mask, train_state.mask_count);
            grd_scratch.store.zero_grads();
            const Tensor2 d_grd_in = net_backward(grd_scratch, grd_cache, train_state.seq_len, lg.grad);
            Tensor2 d_tau(tau_hat.rows, o);
            d_tau.mat() = d_grd_in.mat().rightCols(o);
            if (fast) {
                inv.output.backward(inv.store, trunk_train, d_tau);
            } else {
                net_backward(inv, inv_cache, train_b.seq_len, d_tau);
            }
            train_metric = std::sqrt(lg.loss);
        }
        if (!std::isfinite(train_metric))
            throw NonFiniteLoss("inverse transfer step " + std::to_string(step));
        adam.update(inv.store, adam_cfg, 1.0, handles);

        const double test_m = test_metric();
        report.history.emplace_back(train_metric, test_m);
        if (test_m < best) {
            best = test_m;
            best_values = snapshot(inv.store, handles);
            since_best = 0;
        } else {
            ++since_best;
        }
    }

    restore(inv.store, handles, best_values);
    report.final_rmse = best;

    report.composite_torque_rmse =
        eval_composition(CompositionKind::GrdThenInverse, grd, inv, test_ds).rmse;
    report.composite_state_rmse =
        eval_composition(CompositionKind::InverseThenGrd, grd, inv, test_ds).rmse;
    return report;
}

}  // namespace grd
