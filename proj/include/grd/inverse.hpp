#pragma once

#include <string>
#include <vector>

#include "grd/model.hpp"

namespace grd {

/// Torque-recovery batch. Row t of `input` is [s_t | s_{t+1}] (4*max_dim,
/// normalized); `target` is the normalized torque (max_dim); mask marks real
/// joints. With `grd` given, the next-state half is GRD's prediction instead
/// of the recorded state (the right-inverse wiring).
Batch make_inverse_batch(const TrajectoryDataset& ds, const std::vector<std::size_t>& indices,
                         const NormStats& stats, const Network* grd = nullptr);

Network build_inverse(ModelKind kind, int max_dim, int d_model, int n_blocks, int n_heads,
                      std::uint64_t seed);

struct InverseTrainResult {
    std::vector<EpochMetrics> history;  // eval columns carry the kind's own metric
    double eval_metric = 0.0;           // N*m for torque kinds, normalized for the left inverse
    int best_epoch = -1;
};

/// Supervised torque regression from recorded (s_t, s_{t+1}, tau_t) triples.
/// Reports torque RMSE in N*m on the eval split.
InverseTrainResult train_general_inverse(Network& inv, const TrajectoryDataset& train_ds,
                                         const TrajectoryDataset& eval_ds, const TrainConfig& cfg);

/// Right inverse of a frozen dynamics network: recover tau_t from
/// (s_t, GRD(s_t, tau_t)). The GRD parameters receive no updates; the metric
/// is the torque RMSE of the GRD -> inverse composition.
InverseTrainResult train_right_inverse(Network& inv, const Network& grd,
                                       const TrajectoryDataset& train_ds,
                                       const TrajectoryDataset& eval_ds, const TrainConfig& cfg);

/// Left inverse trained through a frozen dynamics network: produce tau so
/// that GRD(s_t, tau) lands on s_{t+1}. Gradients flow through GRD into the
/// inverse only; the metric is the state RMSE of the inverse -> GRD
/// composition in normalized units.
InverseTrainResult train_left_inverse(Network& inv, const Network& grd,
                                      const TrajectoryDataset& train_ds,
                                      const TrajectoryDataset& eval_ds, const TrainConfig& cfg);

/// Torque RMSE (N*m) of an inverse evaluated on recorded state pairs.
double eval_inverse_torque_rmse(const Network& inv, const TrajectoryDataset& ds);

/// RMSE (N*m) of always predicting zero torque; the model-free reference.
double zero_torque_rmse(const TrajectoryDataset& ds);

enum class CompositionKind { GrdThenInverse, InverseThenGrd };

struct CompositionReport {
    std::string kind;
    double rmse = 0.0;               // N*m for GrdThenInverse, normalized for InverseThenGrd
    std::vector<double> per_joint;   // same units, one entry per joint index
    std::vector<double> per_joint_weight;  // entry counts behind each per-joint RMSE
};

/// GrdThenInverse: torque error of inv(s, GRD(s, tau)) against tau.
/// InverseThenGrd: state error of GRD(s, inv(s, s')) against s'.
CompositionReport eval_composition(CompositionKind kind, const Network& grd, const Network& inv,
                                   const TrajectoryDataset& ds);

std::string composition_to_json(const CompositionReport& report);

}  // namespace grd
