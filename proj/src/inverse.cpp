#include "grd/inverse.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "grd/errors.hpp"
#include "grd/log.hpp"

namespace grd {

namespace {

bool is_inverse_kind(ModelKind kind) {
    return kind == ModelKind::InvGeneral || kind == ModelKind::InvLeft || kind == ModelKind::InvRight;
}

/// [s | next] from a state batch; `next` is either the recorded target or a
/// supplied prediction.
Batch assemble_inverse_batch(const Batch& state_batch, const Tensor2& next, int o) {
    Batch out;
    out.seq_len = state_batch.seq_len;
    out.n_seq = state_batch.n_seq;
    out.input = Tensor2(state_batch.input.rows, 4 * o);
    out.input.mat().leftCols(2 * o) = state_batch.input.mat().leftCols(2 * o);
    out.input.mat().rightCols(2 * o) = next.mat();
    out.target = Tensor2(state_batch.input.rows, o);
    out.target.mat() = state_batch.input.mat().rightCols(o);
    out.mask = Tensor2(state_batch.input.rows, o);
    out.mask.mat() = state_batch.mask.mat().leftCols(o);
    out.mask_count = state_batch.mask_count / 2.0;
    return out;
}

double torque_rmse_nm(const Tensor2& pred, const Batch& batch, const NormStats& stats) {
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
    return n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
}

std::vector<std::vector<std::size_t>> chunks(std::size_t n, std::size_t size) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t begin = 0; begin < n; begin += size) {
        std::vector<std::size_t> ids;
        for (std::size_t i = begin; i < std::min(n, begin + size); ++i) ids.push_back(i);
        out.push_back(std::move(ids));
    }
    return out;
}

enum class InverseObjective { General, Right, Left };

InverseObjective objective_for(ModelKind kind) {
    switch (kind) {
        case ModelKind::InvGeneral: return InverseObjective::General;
        case ModelKind::InvRight: return InverseObjective::Right;
        case ModelKind::InvLeft: return InverseObjective::Left;
        default: throw InvalidConfig("not an inverse model kind: " + kind_name(kind));
    }
}

/// One training step; returns the loss and accumulates gradients into
/// inv.store. `grd_scratch` is the frozen dynamics network (its gradient
/// slots are used as scratch for the left objective, values never change).
double inverse_step(Network& inv, Network* grd_scratch, const Batch& state_batch, int o,
                    bool backward) {
    const int two_o = 2 * o;
    switch (objective_for(inv.kind)) {
        case InverseObjective::General: {
            const Batch b = assemble_inverse_batch(state_batch, state_batch.target, o);
            NetCache cache;
            const Tensor2 pred = net_forward(inv, b.input, b.seq_len, backward ? &cache : nullptr);
            const LossGrad lg = masked_mse(pred, b.target, b.mask, b.mask_count);
            if (backward) net_backward(inv, cache, b.seq_len, lg.grad);
            return lg.loss;
        }
        case InverseObjective::Right: {
            const Tensor2 shat =
                net_forward(*grd_scratch, state_batch.input, state_batch.seq_len, nullptr);
            const Batch b = assemble_inverse_batch(state_batch, shat, o);
            NetCache cache;
            const Tensor2 pred = net_forward(inv, b.input, b.seq_len, backward ? &cache : nullptr);
            const LossGrad lg = masked_mse(pred, b.target, b.mask, b.mask_count);
            if (backward) net_backward(inv, cache, b.seq_len, lg.grad);
            return lg.loss;
        }
        case InverseObjective::Left: {
            const Batch b = assemble_inverse_batch(state_batch, state_batch.target, o);
            NetCache inv_cache;
            const Tensor2 tau_hat =
                net_forward(inv, b.input, b.seq_len, backward ? &inv_cache : nullptr);

            Tensor2 grd_in(state_batch.input.rows, 3 * o);
            grd_in.mat().leftCols(two_o) = state_batch.input.mat().leftCols(two_o);
            grd_in.mat().rightCols(o) = tau_hat.mat();

            NetCache grd_cache;
            const Tensor2 shat = net_forward(*grd_scratch, grd_in, state_batch.seq_len,
                                             backward ? &grd_cache : nullptr);
            const LossGrad lg =
                masked_mse(shat, state_batch.target, state_batch.mask, state_batch.mask_count);
            if (backward) {
                grd_scratch->store.zero_grads();  // scratch only; values stay frozen
                const Tensor2 d_grd_in =
                    net_backward(*grd_scratch, grd_cache, state_batch.seq_len, lg.grad);
                Tensor2 d_tau(tau_hat.rows, o);
                d_tau.mat() = d_grd_in.mat().rightCols(o);
                net_backward(inv, inv_cache, b.seq_len, d_tau);
            }
            return lg.loss;
        }
    }
    throw InvalidConfig("unreachable inverse objective");
}

double eval_metric_for(const Network& inv, const Network* grd, const TrajectoryDataset& ds) {
    switch (objective_for(inv.kind)) {
        case InverseObjective::General:
            return eval_inverse_torque_rmse(inv, ds);
        case InverseObjective::Right:
            return eval_composition(CompositionKind::GrdThenInverse, *grd, inv, ds).rmse;
        case InverseObjective::Left:
            return eval_composition(CompositionKind::InverseThenGrd, *grd, inv, ds).rmse;
    }
    throw InvalidConfig("unreachable inverse objective");
}

InverseTrainResult train_inverse(Network& inv, const Network* grd, const TrajectoryDataset& train_ds,
                                 const TrajectoryDataset& eval_ds, const TrainConfig& cfg) {
    if (!is_inverse_kind(inv.kind)) throw InvalidConfig("network is not an inverse kind");
    if (train_ds.records.empty()) throw EmptyDataset("training split is empty");
    if (grd && grd->norm_stats.empty())
        throw InvalidConfig("the dynamics network has no normalization stats");

    // Inverse networks reuse the scaling of the dynamics network they attach
    // to, or compute their own for the standalone kind.
    if (inv.norm_stats.empty())
        inv.norm_stats = grd ? grd->norm_stats : compute_normalization(train_ds);
    inv.context_len = std::max(inv.context_len, train_ds.n_steps);
    const int o = inv.arch.max_dim;

    // Frozen scratch copy: gradient buffers get written during the left
    // objective, parameter values never do.
    Network grd_scratch;
    if (grd) {
        if (grd->arch.max_dim != o) throw DimensionMismatch("dynamics/inverse max_dim differ");
        grd_scratch = *grd;
    }

    TrajectoryDataset train_view = train_ds;
    train_view.max_dim = o;

    AdamState adam(inv.store);
    const std::size_t n = train_view.records.size();

    InverseTrainResult result;
    std::vector<double> best_params;
    double best_metric = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    const auto t0 = std::chrono::steady_clock::now();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        RngStream shuffle_rng = RngStream::derive(cfg.seed, static_cast<std::uint64_t>(epoch));
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        double loss_sum = 0.0, count_sum = 0.0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            std::vector<std::size_t> ids(order.begin() + begin,
                                         order.begin() + std::min(n, begin + cfg.batch_size));
            const Batch state_batch = make_state_batch(train_view, ids, inv.norm_stats);
            inv.store.zero_grads();
            const double loss =
                inverse_step(inv, grd ? &grd_scratch : nullptr, state_batch, o, /*backward=*/true);
            if (!std::isfinite(loss))
                throw NonFiniteLoss("inverse training epoch " + std::to_string(epoch));
            adam.update(inv.store, cfg.adam);
            loss_sum += loss * state_batch.mask_count;
            count_sum += state_batch.mask_count;
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.train_rmse = std::sqrt(loss_sum / count_sum);
        if (!eval_ds.records.empty()) {
            em.eval_rmse = eval_metric_for(inv, grd ? &grd_scratch : nullptr, eval_ds);
            if (em.eval_rmse < best_metric) {
                best_metric = em.eval_rmse;
                result.best_epoch = epoch;
                best_params.clear();
                for (int i = 0; i < inv.store.count(); ++i)
                    best_params.insert(best_params.end(), inv.store.at(i).value.data.begin(),
                                       inv.store.at(i).value.data.end());
            }
        }
        em.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(em);
        if (cfg.verbose)
            log_info(kind_name(inv.kind) + " epoch " + std::to_string(epoch) + ": train rmse " +
                     std::to_string(em.train_rmse) + ", eval metric " + std::to_string(em.eval_rmse));
        if (!cfg.metrics_csv.empty()) write_metrics_csv(cfg.metrics_csv, result.history);
    }

    if (!best_params.empty()) {
        std::size_t offset = 0;
        for (int i = 0; i < inv.store.count(); ++i) {
            auto& data = inv.store.at(i).value.data;
            std::copy(best_params.begin() + offset, best_params.begin() + offset + data.size(),
                      data.begin());
            offset += data.size();
        }
        result.eval_metric = best_metric;
    }
    return result;
}

}  // namespace

Batch make_inverse_batch(const TrajectoryDataset& ds, const std::vector<std::size_t>& indices,
                         const NormStats& stats, const Network* grd) {
    TrajectoryDataset view = ds;
    view.max_dim = stats.max_dim;
    const Batch state_batch = make_state_batch(view, indices, stats);
    if (!grd) return assemble_inverse_batch(state_batch, state_batch.target, stats.max_dim);
    const Tensor2 shat = net_forward(*grd, state_batch.input, state_batch.seq_len, nullptr);
    return assemble_inverse_batch(state_batch, shat, stats.max_dim);
}

Network build_inverse(ModelKind kind, int max_dim, int d_model, int n_blocks, int n_heads,
                      std::uint64_t seed) {
    if (!is_inverse_kind(kind)) throw InvalidConfig("not an inverse model kind");
    return build_network(kind, make_architecture(kind, max_dim, d_model, n_blocks, n_heads), seed);
}

InverseTrainResult train_general_inverse(Network& inv, const TrajectoryDataset& train_ds,
                                         const TrajectoryDataset& eval_ds, const TrainConfig& cfg) {
    if (inv.kind != ModelKind::InvGeneral) throw InvalidConfig("expected an inv_general network");
    return train_inverse(inv, nullptr, train_ds, eval_ds, cfg);
}

InverseTrainResult train_right_inverse(Network& inv, const Network& grd,
                                       const TrajectoryDataset& train_ds,
                                       const TrajectoryDataset& eval_ds, const TrainConfig& cfg) {
    if (inv.kind != ModelKind::InvRight) throw InvalidConfig("expected an inv_right network");
    return train_inverse(inv, &grd, train_ds, eval_ds, cfg);
}

InverseTrainResult train_left_inverse(Network& inv, const Network& grd,
                                      const TrajectoryDataset& train_ds,
                                      const TrajectoryDataset& eval_ds, const TrainConfig& cfg) {
    if (inv.kind != ModelKind::InvLeft) throw InvalidConfig("expected an inv_left network");
    return train_inverse(inv, &grd, train_ds, eval_ds, cfg);
}

double eval_inverse_torque_rmse(const Network& inv, const TrajectoryDataset& ds) {
    if (ds.records.empty()) throw EmptyDataset("evaluation dataset is empty");
    const int o = inv.arch.max_dim;
    double sq = 0.0;
    std::uint64_t n = 0;
    for (const auto& ids : chunks(ds.records.size(), 128)) {
        const Batch b = make_inverse_batch(ds, ids, inv.norm_stats, nullptr);
        const Tensor2 pred = net_forward(inv, b.input, b.seq_len, nullptr);
        for (int r = 0; r < pred.rows; ++r)
            for (int j = 0; j < o; ++j) {
                if (b.mask.at(r, j) == 0.0) continue;
                const double e = (pred.at(r, j) - b.target.at(r, j)) * inv.norm_stats.stdev[2 * o + j];
                sq += e * e;
                ++n;
            }
    }
    return std::sqrt(sq / static_cast<double>(n));
}

double zero_torque_rmse(const TrajectoryDataset& ds) {
    if (ds.records.empty()) throw EmptyDataset("dataset is empty");
    double sq = 0.0;
    std::uint64_t n = 0;
    for (const DatasetRecord& rec : ds.records)
        for (const Eigen::VectorXd& tau : rec.trajectory.torques) {
            sq += tau.squaredNorm();
            n += tau.size();
        }
    return std::sqrt(sq / static_cast<double>(n));
}

CompositionReport eval_composition(CompositionKind kind, const Network& grd, const Network& inv,
                                   const TrajectoryDataset& ds) {
    if (ds.records.empty()) throw EmptyDataset("evaluation dataset is empty");
    if (grd.arch.max_dim != inv.arch.max_dim) throw DimensionMismatch("composition max_dim mismatch");
    if (ds.max_dim > grd.arch.max_dim) throw ShapeMismatch("dataset max_dim exceeds the networks'");
    const int o = grd.arch.max_dim;
    const NormStats& stats = grd.norm_stats;

    TrajectoryDataset view = ds;
    view.max_dim = o;

    CompositionReport report;
    report.per_joint.assign(o, 0.0);
    report.per_joint_weight.assign(o, 0.0);
    double sq = 0.0, n = 0.0;
    std::vector<double> joint_sq(o, 0.0);

    for (const auto& ids : chunks(view.records.size(), 128)) {
        const Batch state_batch = make_state_batch(view, ids, stats);
        if (kind == CompositionKind::GrdThenInverse) {
            const Tensor2 shat = net_forward(grd, state_batch.input, state_batch.seq_len, nullptr);
            const Batch b = assemble_inverse_batch(state_batch, shat, o);
            const Tensor2 tau_hat = net_forward(inv, b.input, b.seq_len, nullptr);
            for (int r = 0; r < tau_hat.rows; ++r)
                for (int j = 0; j < o; ++j) {
                    if (b.mask.at(r, j) == 0.0) continue;
                    const double e = (tau_hat.at(r, j) - b.target.at(r, j)) * stats.stdev[2 * o + j];
                    sq += e * e;
                    n += 1.0;
                    joint_sq[j] += e * e;
                    report.per_joint_weight[j] += 1.0;
                }
        } else {
            const Batch b = assemble_inverse_batch(state_batch, state_batch.target, o);
            const Tensor2 tau_hat = net_forward(inv, b.input, b.seq_len, nullptr);
            Tensor2 grd_in(state_batch.input.rows, 3 * o);
            grd_in.mat().leftCols(2 * o) = state_batch.input.mat().leftCols(2 * o);
            grd_in.mat().rightCols(o) = tau_hat.mat();
            const Tensor2 shat = net_forward(grd, grd_in, state_batch.seq_len, nullptr);
            for (int r = 0; r < shat.rows; ++r)
                for (int j = 0; j < o; ++j) {
                    if (state_batch.mask.at(r, j) == 0.0) continue;
                    const double eq = shat.at(r, j) - state_batch.target.at(r, j);
                    const double ev = shat.at(r, o + j) - state_batch.target.at(r, o + j);
                    sq += eq * eq + ev * ev;
                    n += 2.0;
                    joint_sq[j] += eq * eq + ev * ev;
                    report.per_joint_weight[j] += 2.0;
                }
        }
    }

    report.kind = (kind == CompositionKind::GrdThenInverse ? "grd_then_" : "") + kind_name(inv.kind) +
                  (kind == CompositionKind::InverseThenGrd ? "_then_grd" : "");
    report.rmse = std::sqrt(sq / n);
    for (int j = 0; j < o; ++j)
        report.per_joint[j] =
            report.per_joint_weight[j] > 0 ? std::sqrt(joint_sq[j] / report.per_joint_weight[j]) : 0.0;
    return report;
}

std::string composition_to_json(const CompositionReport& report) {
    nlohmann::json j;
    j["kind"] = report.kind;
    j["rmse"] = report.rmse;
    j["per_joint"] = report.per_joint;
    j["per_joint_weight"] = report.per_joint_weight;
    return j.dump(2);
}

}  // namespace grd
