#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grd/dataset.hpp"
#include "grd/nn.hpp"
#include "grd/tensor.hpp"

namespace grd {

enum class ModelKind { Grd, Mlp, InvGeneral, InvLeft, InvRight };

std::string kind_name(ModelKind kind);
ModelKind kind_from_name(const std::string& name);

/// Shape of the sequence networks. For the per-row baseline (Mlp), d_model is
/// the hidden width and n_blocks the total layer count.
struct GrdArchitecture {
    int max_dim = 3;
    int d_model = 64;
    int n_blocks = 2;
    int n_heads = 4;
    int input_width = 9;    // 3 * max_dim for dynamics, 4 * max_dim for inverses
    int output_width = 6;   // 2 * max_dim for dynamics, max_dim for inverses
    bool second_attention_causal = true;

    int ff_width() const { return 4 * d_model; }
    std::size_t parameter_count(ModelKind kind) const;
};

/// Input/output widths implied by the model kind.
GrdArchitecture make_architecture(ModelKind kind, int max_dim, int d_model, int n_blocks,
                                  int n_heads);

/// One decoder block: self-attention, a second self-attention, and a
/// two-layer feedforward, each wrapped in add&norm. The first attention is
/// always causal; the second is causal by default and configurable.
struct Block {
    MultiHeadAttention attn1, attn2;
    LayerNorm ln1, ln2, ln3;
    Linear ff1, ff2;
};

struct BlockCache {
    AttentionCache attn1, attn2;
    LayerNormCache ln1, ln2, ln3;
    Tensor2 h1, h2;          // block state after ln1 / ln2
    Tensor2 ff_pre, ff_act;  // feedforward hidden pre/post activation
};

struct NetCache {
    Tensor2 input;
    std::vector<BlockCache> blocks;
    Tensor2 trunk;  // input of the output projection
    std::vector<Tensor2> mlp_pre;
    std::vector<Tensor2> mlp_act;
};

/// A trained (or trainable) model: parameters, architecture, and the input
/// standardization it was trained with. The sequence kinds share the block
/// stack; the Mlp kind is a plain 5-layer per-row network. There is no
/// positional encoding anywhere; rows are encoded by one fully-connected
/// layer and read out by another, with no softmax on the output.
struct Network {
    ModelKind kind = ModelKind::Grd;
    GrdArchitecture arch;
    int context_len = 50;
    ParamStore store;
    NormStats norm_stats;

    Linear encoder;
    std::vector<Block> blocks;
    std::vector<Linear> mlp_layers;  // hidden layers of the Mlp kind
    Linear output;
};

Network build_network(ModelKind kind, const GrdArchitecture& arch, std::uint64_t seed);
Network build_grd(int max_dim, int d_model, int n_blocks, int n_heads, std::uint64_t seed,
                  bool second_attention_causal = true);
Network build_mlp(int max_dim, int hidden_width, std::uint64_t seed);

/// Forward over concatenated equal-length sequences. Pass a cache to enable
/// backward. The Mlp kind ignores sequence boundaries.
Tensor2 net_forward(const Network& net, const Tensor2& rows, int seq_len, NetCache* cache = nullptr);

/// Gradient of everything from the cached forward; accumulates parameter
/// gradients and returns the gradient w.r.t. the input rows.
Tensor2 net_backward(Network& net, const NetCache& cache, int seq_len, const Tensor2& d_out);

/// Features entering the output projection (frozen-trunk fine-tuning path).
Tensor2 net_trunk_forward(const Network& net, const Tensor2& rows, int seq_len);

/// Single-trajectory next-state prediction: row t of the result is the
/// (normalized) predicted state of step t+1, depending only on rows <= t.
Tensor2 grd_forward(const Network& net, const Tensor2& padded_rows);

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

struct Batch {
    Tensor2 input;
    Tensor2 target;
    Tensor2 mask;  // 1.0 on real entries of target, 0.0 on padding
    int seq_len = 0;
    int n_seq = 0;
    double mask_count = 0.0;
};

/// Next-state batch for the Grd/Mlp kinds from dataset records.
Batch make_state_batch(const TrajectoryDataset& ds, const std::vector<std::size_t>& indices,
                       const NormStats& stats);

struct LossGrad {
    double loss = 0.0;
    Tensor2 grad;
};

/// Mean squared error over unmasked entries and its gradient w.r.t. pred.
LossGrad masked_mse(const Tensor2& pred, const Tensor2& target, const Tensor2& mask,
                    double mask_count);

struct EvalMetrics {
    double rmse_norm = 0.0, rmse_pos_norm = 0.0, rmse_vel_norm = 0.0;
    double rmse_phys = 0.0, rmse_pos_phys = 0.0, rmse_vel_phys = 0.0;
};

/// Masked next-state RMSE in normalized and physical units, split into
/// position and velocity components.
EvalMetrics eval_rmse(const Network& net, const TrajectoryDataset& ds);

/// RMSE of the no-change predictor (next state = current state); the
/// model-free reference every learned model must beat.
EvalMetrics baseline_persistence(const TrajectoryDataset& ds, const NormStats& stats);

struct EpochMetrics {
    int epoch = 0;
    double train_rmse = 0.0;
    double eval_rmse = 0.0;
    double eval_rmse_position = 0.0;
    double eval_rmse_velocity = 0.0;
    double wall_seconds = 0.0;
};

struct TrainConfig {
    int epochs = 5;
    int batch_size = 64;
    AdamConfig adam;
    double warmup_frac = 0.0;  // linear ramp over this fraction of total steps
    std::uint64_t seed = 1;
    std::string metrics_csv;  // appended per epoch when non-empty
    bool verbose = true;
};

struct TrainResult {
    std::vector<EpochMetrics> history;
    EvalMetrics best_eval;
    int best_epoch = -1;
    double first_batch_loss = 0.0;
};

/// Self-supervised next-state training for the Grd and Mlp kinds. Computes
/// norm stats from the training split when the network has none, minimizes
/// masked MSE, and leaves the network at its best-eval parameters.
TrainResult train_network(Network& net, const TrajectoryDataset& train_ds,
                          const TrajectoryDataset& eval_ds, const TrainConfig& cfg);

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history);

}  // namespace grd
