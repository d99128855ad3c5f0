#include "grd/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "grd/errors.hpp"
#include "grd/log.hpp"

namespace grd {

std::string kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::Grd: return "grd";
        case ModelKind::Mlp: return "mlp";
        case ModelKind::InvGeneral: return "inv_general";
        case ModelKind::InvLeft: return "inv_left";
        case ModelKind::InvRight: return "inv_right";
    }
    throw InvalidConfig("unknown model kind");
}

ModelKind kind_from_name(const std::string& name) {
    for (ModelKind k : {ModelKind::Grd, ModelKind::Mlp, ModelKind::InvGeneral, ModelKind::InvLeft,
                        ModelKind::InvRight})
        if (kind_name(k) == name) return k;
    throw FormatError("unknown model kind '" + name + "'");
}

GrdArchitecture make_architecture(ModelKind kind, int max_dim, int d_model, int n_blocks,
                                  int n_heads) {
    GrdArchitecture arch;
    arch.max_dim = max_dim;
    arch.d_model = d_model;
    arch.n_blocks = n_blocks;
    arch.n_heads = n_heads;
    const bool inverse =
        kind == ModelKind::InvGeneral || kind == ModelKind::InvLeft || kind == ModelKind::InvRight;
    arch.input_width = inverse ? 4 * max_dim : 3 * max_dim;
    arch.output_width = inverse ? max_dim : 2 * max_dim;
    return arch;
}

std::size_t GrdArchitecture::parameter_count(ModelKind kind) const {
    const auto d = static_cast<std::size_t>(d_model);
    const auto in = static_cast<std::size_t>(input_width);
    const auto out = static_cast<std::size_t>(output_width);
    if (kind == ModelKind::Mlp) {
        // n_blocks fully-connected layers, hidden width d.
        const auto hidden_links = static_cast<std::size_t>(n_blocks) - 2;
        return in * d + d + hidden_links * (d * d + d) + d * out + out;
    }
    const std::size_t attn = 4 * (d * d + d);
    const std::size_t ff = d * (4 * d) + 4 * d + (4 * d) * d + d;
    const std::size_t norms = 3 * (2 * d);
    return in * d + d + static_cast<std::size_t>(n_blocks) * (2 * attn + ff + norms) + d * out + out;
}

Network build_network(ModelKind kind, const GrdArchitecture& arch, std::uint64_t seed) {
    if (arch.d_model < 1 || arch.n_blocks < 1 || arch.max_dim < 1)
        throw InvalidConfig("architecture sizes must be positive");
    if (arch.d_model % arch.n_heads != 0)
        throw InvalidConfig("d_model must be divisible by n_heads");

    Network net;
    net.kind = kind;
    net.arch = arch;

    if (kind == ModelKind::Mlp) {
        if (arch.n_blocks < 2) throw InvalidConfig("the per-row baseline needs at least two layers");
        int width = arch.input_width;
        for (int i = 0; i + 1 < arch.n_blocks; ++i) {
            net.mlp_layers.push_back(
                Linear::create(net.store, "layer" + std::to_string(i), width, arch.d_model));
            width = arch.d_model;
        }
        net.output = Linear::create(net.store, "output", width, arch.output_width);
    } else {
        net.encoder = Linear::create(net.store, "encoder", arch.input_width, arch.d_model);
        for (int i = 0; i < arch.n_blocks; ++i) {
            const std::string p = "block" + std::to_string(i);
            Block b;
            b.attn1 = MultiHeadAttention::create(net.store, p + ".attn1", arch.d_model, arch.n_heads,
                                                 /*causal=*/true);
            b.ln1 = LayerNorm::create(net.store, p + ".ln1", arch.d_model);
            b.attn2 = MultiHeadAttention::create(net.store, p + ".attn2", arch.d_model, arch.n_heads,
                                                 arch.second_attention_causal);
            b.ln2 = LayerNorm::create(net.store, p + ".ln2", arch.d_model);
            b.ff1 = Linear::create(net.store, p + ".ff.w1", arch.d_model, arch.ff_width());
            b.ff2 = Linear::create(net.store, p + ".ff.w2", arch.ff_width(), arch.d_model);
            b.ln3 = LayerNorm::create(net.store, p + ".ln3", arch.d_model);
            net.blocks.push_back(b);
        }
        net.output = Linear::create(net.store, "output", arch.d_model, arch.output_width);
    }

    if (net.store.total_values() != arch.parameter_count(kind))
        throw InvalidConfig("built parameter count disagrees with the closed form");
    net.store.initialize(seed);
    return net;
}

Network build_grd(int max_dim, int d_model, int n_blocks, int n_heads, std::uint64_t seed,
                  bool second_attention_causal) {
    GrdArchitecture arch = make_architecture(ModelKind::Grd, max_dim, d_model, n_blocks, n_heads);
    arch.second_attention_causal = second_attention_causal;
    return build_network(ModelKind::Grd, arch, seed);
}

Network build_mlp(int max_dim, int hidden_width, std::uint64_t seed) {
    GrdArchitecture arch = make_architecture(ModelKind::Mlp, max_dim, hidden_width, 5, 1);
    return build_network(ModelKind::Mlp, arch, seed);
}

namespace {

Tensor2 block_forward(const Network& net, const Block& b, const Tensor2& x, int seq_len,
                      BlockCache* cache) {
    AttentionCache a1_local;
    AttentionCache* a1 = cache ? &cache->attn1 : &a1_local;
    Tensor2 a1_out = b.attn1.forward(net.store, x, seq_len, a1);
    a1_out.mat() += x.mat();
    Tensor2 h1 = b.ln1.forward(net.store, a1_out, cache ? &cache->ln1 : nullptr);

    AttentionCache a2_local;
    AttentionCache* a2 = cache ? &cache->attn2 : &a2_local;
    Tensor2 a2_out = b.attn2.forward(net.store, h1, seq_len, a2);
    a2_out.mat() += h1.mat();
    Tensor2 h2 = b.ln2.forward(net.store, a2_out, cache ? &cache->ln2 : nullptr);

    Tensor2 ff_pre = b.ff1.forward(net.store, h2);
    Tensor2 ff_act = gelu(ff_pre);
    Tensor2 ff_out = b.ff2.forward(net.store, ff_act);
    ff_out.mat() += h2.mat();
    Tensor2 y = b.ln3.forward(net.store, ff_out, cache ? &cache->ln3 : nullptr);

    if (cache) {
        cache->h1 = std::move(h1);
        cache->h2 = std::move(h2);
        cache->ff_pre = std::move(ff_pre);
        cache->ff_act = std::move(ff_act);
    }
    return y;
}

Tensor2 block_backward(Network& net, const Block& b, const BlockCache& cache, int seq_len,
                       const Tensor2& dy) {
    Tensor2 d_sum3 = b.ln3.backward(net.store, cache.ln3, dy);
    Tensor2 d_act = b.ff2.backward(net.store, cache.ff_act, d_sum3);
    Tensor2 d_pre = gelu_backward(cache.ff_pre, d_act);
    Tensor2 dh2 = b.ff1.backward(net.store, cache.h2, d_pre);
    dh2.mat() += d_sum3.mat();

    Tensor2 d_sum2 = b.ln2.backward(net.store, cache.ln2, dh2);
    Tensor2 dh1 = b.attn2.backward(net.store, cache.attn2, seq_len, d_sum2);
    dh1.mat() += d_sum2.mat();

    Tensor2 d_sum1 = b.ln1.backward(net.store, cache.ln1, dh1);
    Tensor2 dx = b.attn1.backward(net.store, cache.attn1, seq_len, d_sum1);
    dx.mat() += d_sum1.mat();
    return dx;
}

}  // namespace

Tensor2 net_forward(const Network& net, const Tensor2& rows, int seq_len, NetCache* cache) {
    if (rows.cols != net.arch.input_width)
        throw ShapeMismatch("network expects input width " + std::to_string(net.arch.input_width) +
                            ", got " + std::to_string(rows.cols));
    if (cache) {
        cache->input = rows;
        cache->blocks.clear();
        cache->mlp_pre.clear();
        cache->mlp_act.clear();
    }

    if (net.kind == ModelKind::Mlp) {
        Tensor2 h = rows;
        for (const Linear& layer : net.mlp_layers) {
            Tensor2 pre = layer.forward(net.store, h);
            Tensor2 act = gelu(pre);
            if (cache) {
                cache->mlp_act.push_back(h);
                cache->mlp_pre.push_back(std::move(pre));
                h = act;
            } else {
                h = std::move(act);
            }
        }
        if (cache) cache->trunk = h;
        return net.output.forward(net.store, h);
    }

    if (seq_len < 1 || rows.rows % seq_len != 0)
        throw ShapeMismatch("rows must be a multiple of the sequence length");
    Tensor2 h = net.encoder.forward(net.store, rows);
    if (cache) cache->blocks.resize(net.blocks.size());
    for (std::size_t i = 0; i < net.blocks.size(); ++i)
        h = block_forward(net, net.blocks[i], h, seq_len, cache ? &cache->blocks[i] : nullptr);
    if (cache) cache->trunk = h;
    return net.output.forward(net.store, h);
}

Tensor2 net_backward(Network& net, const NetCache& cache, int seq_len, const Tensor2& d_out) {
    Tensor2 dh = net.output.backward(net.store, cache.trunk, d_out);

    if (net.kind == ModelKind::Mlp) {
        for (int i = static_cast<int>(net.mlp_layers.size()) - 1; i >= 0; --i) {
            Tensor2 d_pre = gelu_backward(cache.mlp_pre[i], dh);
            dh = net.mlp_layers[i].backward(net.store, cache.mlp_act[i], d_pre);
        }
        return dh;
    }

    for (int i = static_cast<int>(net.blocks.size()) - 1; i >= 0; --i)
        dh = block_backward(net, net.blocks[i], cache.blocks[i], seq_len, dh);
    return net.encoder.backward(net.store, cache.input, dh);
}

Tensor2 net_trunk_forward(const Network& net, const Tensor2& rows, int seq_len) {
    if (net.kind == ModelKind::Mlp) {
        Tensor2 h = rows;
        for (const Linear& layer : net.mlp_layers) h = gelu(layer.forward(net.store, h));
        return h;
    }
    Tensor2 h = net.encoder.forward(net.store, rows);
    for (const Block& b : net.blocks) h = block_forward(net, b, h, seq_len, nullptr);
    return h;
}

Tensor2 grd_forward(const Network& net, const Tensor2& padded_rows) {
    if (padded_rows.rows < 1) throw ShapeMismatch("prediction needs at least one row");
    if (padded_rows.rows > net.context_len)
        throw ShapeMismatch("sequence of " + std::to_string(padded_rows.rows) +
                            " rows exceeds the context length " + std::to_string(net.context_len));
    return net_forward(net, padded_rows, padded_rows.rows, nullptr);
}

// ---------------------------------------------------------------------------
// Batches, losses, metrics
// ---------------------------------------------------------------------------

Batch make_state_batch(const TrajectoryDataset& ds, const std::vector<std::size_t>& indices,
                       const NormStats& stats) {
    if (indices.empty()) throw EmptyDataset("batch needs at least one trajectory");
    const int o = ds.max_dim;
    const int t_len = ds.n_steps;
    Batch batch;
    batch.seq_len = t_len;
    batch.n_seq = static_cast<int>(indices.size());
    batch.input = Tensor2(batch.n_seq * t_len, 3 * o);
    batch.target = Tensor2(batch.n_seq * t_len, 2 * o);
    batch.mask = Tensor2(batch.n_seq * t_len, 2 * o);

    for (int s = 0; s < batch.n_seq; ++s) {
        const Trajectory& traj = ds.records[indices[s]].trajectory;
        PaddedTrajectory rows = to_padded_rows(traj, o);
        normalize_rows(rows, stats);
        const int r0 = s * t_len;
        std::copy(rows.input.data.begin(), rows.input.data.end(),
                  batch.input.data.begin() + static_cast<std::size_t>(r0) * 3 * o);
        std::copy(rows.target.data.begin(), rows.target.data.end(),
                  batch.target.data.begin() + static_cast<std::size_t>(r0) * 2 * o);
        for (int t = 0; t < t_len; ++t)
            for (int j = 0; j < traj.dimension; ++j) {
                batch.mask.at(r0 + t, j) = 1.0;
                batch.mask.at(r0 + t, o + j) = 1.0;
            }
        batch.mask_count += 2.0 * traj.dimension * t_len;
    }
    return batch;
}

LossGrad masked_mse(const Tensor2& pred, const Tensor2& target, const Tensor2& mask,
                    double mask_count) {
    if (pred.rows != target.rows || pred.cols != target.cols)
        throw ShapeMismatch("prediction/target shapes differ");
    LossGrad out;
    out.grad = Tensor2(pred.rows, pred.cols);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double e = (pred.data[i] - target.data[i]) * mask.data[i];
        sum += e * e;
        out.grad.data[i] = 2.0 * e / mask_count;
    }
    out.loss = sum / mask_count;
    return out;
}

namespace {

struct ErrorAccumulator {
    double sq_pos_norm = 0.0, sq_vel_norm = 0.0, sq_pos_phys = 0.0, sq_vel_phys = 0.0;
    std::uint64_t n_pos = 0, n_vel = 0;

    void add(const Tensor2& pred, const Batch& batch, const NormStats& stats) {
        const int o = stats.max_dim;
        for (int r = 0; r < pred.rows; ++r)
            for (int c = 0; c < pred.cols; ++c) {
                if (batch.mask.at(r, c) == 0.0) continue;
                const double e = pred.at(r, c) - batch.target.at(r, c);
                const double ephys = e * stats.stdev[c];  // target feature c mirrors input feature c
                if (c < o) {
                    sq_pos_norm += e * e;
                    sq_pos_phys += ephys * ephys;
                    ++n_pos;
                } else {
                    sq_vel_norm += e * e;
                    sq_vel_phys += ephys * ephys;
                    ++n_vel;
                }
            }
    }

    EvalMetrics finish() const {
        EvalMetrics m;
        const double n_all = static_cast<double>(n_pos + n_vel);
        if (n_all == 0) return m;
        m.rmse_norm = std::sqrt((sq_pos_norm + sq_vel_norm) / n_all);
        m.rmse_phys = std::sqrt((sq_pos_phys + sq_vel_phys) / n_all);
        if (n_pos > 0) {
            m.rmse_pos_norm = std::sqrt(sq_pos_norm / static_cast<double>(n_pos));
            m.rmse_pos_phys = std::sqrt(sq_pos_phys / static_cast<double>(n_pos));
        }
        if (n_vel > 0) {
            m.rmse_vel_norm = std::sqrt(sq_vel_norm / static_cast<double>(n_vel));
            m.rmse_vel_phys = std::sqrt(sq_vel_phys / static_cast<double>(n_vel));
        }
        return m;
    }
};

std::vector<std::vector<std::size_t>> chunk_indices(std::size_t n, std::size_t chunk) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        std::vector<std::size_t> ids;
        for (std::size_t i = begin; i < std::min(n, begin + chunk); ++i) ids.push_back(i);
        out.push_back(std::move(ids));
    }
    return out;
}

}  // namespace

EvalMetrics eval_rmse(const Network& net, const TrajectoryDataset& ds) {
    if (ds.records.empty()) throw EmptyDataset("evaluation dataset is empty");
    if (ds.max_dim > net.arch.max_dim)
        throw ShapeMismatch("dataset max_dim exceeds the network's");
    if (net.norm_stats.empty()) throw InvalidConfig("network has no normalization stats");

    // Datasets narrower than the network are widened by re-padding.
    TrajectoryDataset view = ds;
    view.max_dim = net.arch.max_dim;

    ErrorAccumulator acc;
    for (const auto& ids : chunk_indices(view.records.size(), 128)) {
        const Batch batch = make_state_batch(view, ids, net.norm_stats);
        const Tensor2 pred = net_forward(net, batch.input, batch.seq_len, nullptr);
        acc.add(pred, batch, net.norm_stats);
    }
    return acc.finish();
}

EvalMetrics baseline_persistence(const TrajectoryDataset& ds, const NormStats& stats) {
    if (ds.records.empty()) throw EmptyDataset("evaluation dataset is empty");
    TrajectoryDataset view = ds;
    view.max_dim = stats.max_dim;

    ErrorAccumulator acc;
    const int o = stats.max_dim;
    for (const auto& ids : chunk_indices(view.records.size(), 256)) {
        const Batch batch = make_state_batch(view, ids, stats);
        Tensor2 pred(batch.input.rows, 2 * o);
        pred.mat() = batch.input.mat().leftCols(2 * o);
        acc.add(pred, batch, stats);
    }
    return acc.finish();
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "epoch,train_rmse,eval_rmse,rmse_position,rmse_velocity,wall_seconds\n";
    for (const EpochMetrics& m : history)
        out << m.epoch << ',' << m.train_rmse << ',' << m.eval_rmse << ',' << m.eval_rmse_position
            << ',' << m.eval_rmse_velocity << ',' << m.wall_seconds << '\n';
}

TrainResult train_network(Network& net, const TrajectoryDataset& train_ds,
                          const TrajectoryDataset& eval_ds, const TrainConfig& cfg) {
    if (net.kind != ModelKind::Grd && net.kind != ModelKind::Mlp)
        throw InvalidConfig("train_network handles the dynamics kinds; inverse kinds train separately");
    if (train_ds.records.empty()) throw EmptyDataset("training split is empty");

    if (net.norm_stats.empty()) net.norm_stats = compute_normalization(train_ds);
    net.context_len = std::max(net.context_len, train_ds.n_steps);

    TrajectoryDataset train_view = train_ds;
    train_view.max_dim = net.arch.max_dim;

    AdamState adam(net.store);
    const std::size_t n = train_view.records.size();
    const std::size_t batches_per_epoch =
        (n + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size);
    const double total_steps = static_cast<double>(batches_per_epoch) * cfg.epochs;
    const double warmup_steps = std::max(1.0, cfg.warmup_frac * total_steps);

    TrainResult result;
    std::vector<double> best_params;
    double best_eval = std::numeric_limits<double>::infinity();

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
            const Batch batch = make_state_batch(train_view, ids, net.norm_stats);

            NetCache cache;
            const Tensor2 pred = net_forward(net, batch.input, batch.seq_len, &cache);
            const LossGrad lg = masked_mse(pred, batch.target, batch.mask, batch.mask_count);
            if (!std::isfinite(lg.loss))
                throw NonFiniteLoss("epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(begin / cfg.batch_size) + ": loss " +
                                    std::to_string(lg.loss));
            if (epoch == 0 && begin == 0) result.first_batch_loss = lg.loss;

            net.store.zero_grads();
            net_backward(net, cache, batch.seq_len, lg.grad);
            const double step_no = static_cast<double>(adam.step()) + 1.0;
            const double lr_scale =
                cfg.warmup_frac > 0.0 ? std::min(1.0, step_no / warmup_steps) : 1.0;
            adam.update(net.store, cfg.adam, lr_scale);

            loss_sum += lg.loss * batch.mask_count;
            count_sum += batch.mask_count;
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.train_rmse = std::sqrt(loss_sum / count_sum);
        if (!eval_ds.records.empty()) {
            const EvalMetrics ev = eval_rmse(net, eval_ds);
            em.eval_rmse = ev.rmse_norm;
            em.eval_rmse_position = ev.rmse_pos_norm;
            em.eval_rmse_velocity = ev.rmse_vel_norm;
            if (ev.rmse_norm < best_eval) {
                best_eval = ev.rmse_norm;
                result.best_eval = ev;
                result.best_epoch = epoch;
                best_params.clear();
                for (int i = 0; i < net.store.count(); ++i)
                    best_params.insert(best_params.end(), net.store.at(i).value.data.begin(),
                                       net.store.at(i).value.data.end());
            }
        }
        em.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(em);
        if (cfg.verbose)
            log_info("epoch " + std::to_string(epoch) + ": train rmse " +
                     std::to_string(em.train_rmse) + ", eval rmse " + std::to_string(em.eval_rmse));
        if (!cfg.metrics_csv.empty()) write_metrics_csv(cfg.metrics_csv, result.history);
    }

    if (!best_params.empty()) {
        std::size_t offset = 0;
        for (int i = 0; i < net.store.count(); ++i) {
            auto& data = net.store.at(i).value.data;
            std::copy(best_params.begin() + offset, best_params.begin() + offset + data.size(),
                      data.begin());
            offset += data.size();
        }
    }
    return result;
}

}  // namespace grd
