#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "grd/dynamics.hpp"
#include "grd/robot_model.hpp"
#include "grd/rng.hpp"
#include "grd/tensor.hpp"

namespace grd {

/// Per-joint speed limit for generated trajectories. Attempts that exceed it
/// (or go non-finite) are thrown away whole and regenerated with a fresh
/// model, initial state, and torque sequence.
constexpr double kVelocityCap = 4.0 * M_PI;  // rad/s

constexpr int kMaxRejections = 1000;

struct DatasetRecord {
    RobotModel model;
    Trajectory trajectory;
};

/// Per-feature standardization statistics over the padded input layout
/// [q (o) | qdot (o) | tau (o)], estimated on real (unpadded) entries only.
struct NormStats {
    int max_dim = 0;
    std::vector<double> mean;   // 3 * max_dim
    std::vector<double> stdev;  // 3 * max_dim, floored at kStdFloor

    static constexpr double kStdFloor = 1e-8;

    bool empty() const { return mean.empty(); }
    int features() const { return 3 * max_dim; }
};

struct TrajectoryDataset {
    int max_dim = 0;
    int n_steps = 0;
    double dt = 0.1;
    std::vector<DatasetRecord> records;
    NormStats norm_stats;  // empty until computed from a training split

    std::size_t size() const { return records.size(); }
};

struct GenerationConfig {
    std::uint64_t trajectories = 0;
    int max_links = 3;
    std::optional<int> fixed_dimension;
    int n_steps = 50;
    double dt = 0.1;
    int workers = 1;
    /// Optional replacement for the default model sampler (used by the
    /// specific-robot adaptation flow, which perturbs a nominal model).
    std::function<RobotModel(RngStream&)> model_sampler;
};

/// One motor-bubbling trajectory on a freshly sampled model: initial position
/// uniform in [-pi, pi], initial velocity in [-1, 1], per-step torques in
/// [-30, 30] N*m, integrated at dt with the velocity-cap rejection loop.
std::pair<RobotModel, Trajectory> generate_trajectory(RngStream& rng, int max_links, int n_steps,
                                                      double dt,
                                                      std::optional<int> fixed_dimension = std::nullopt);

/// Same rejection loop with an explicit model source; the sampler is invoked
/// again after every rejection.
std::pair<RobotModel, Trajectory> generate_trajectory_with(
    RngStream& rng, const std::function<RobotModel(RngStream&)>& sampler, int n_steps, double dt);

/// Builds config.trajectories records. Record i is produced entirely from the
/// stream derived from (seed, i), so the result is byte-identical for any
/// worker count.
TrajectoryDataset generate_dataset(const GenerationConfig& config, std::uint64_t seed);

void write_dataset(const TrajectoryDataset& ds, const std::string& path);
TrajectoryDataset read_dataset(const std::string& path);

/// Deterministic shuffled split at the trajectory level.
std::pair<TrajectoryDataset, TrajectoryDataset> split_dataset(const TrajectoryDataset& ds,
                                                              double ratio, std::uint64_t seed);

NormStats compute_normalization(const TrajectoryDataset& train);

/// A trajectory turned into network rows. Row t of `input` is
/// [q_t | qdot_t | tau_t] zero-padded to 3*max_dim; row t of `target` is
/// [q_{t+1} | qdot_{t+1}] padded to 2*max_dim. Joints >= dimension are
/// padding and excluded from losses and metrics.
struct PaddedTrajectory {
    Tensor2 input;
    Tensor2 target;
    int dimension = 0;
    int max_dim = 0;
};

PaddedTrajectory to_padded_rows(const Trajectory& traj, int max_dim);

/// Recovers the trajectory from (raw, unnormalized) padded rows; used to
/// check that padding is lossless.
Trajectory from_padded_rows(const PaddedTrajectory& padded, double dt);

/// Standardizes real entries in place and leaves padding at exactly zero.
void normalize_rows(PaddedTrajectory& padded, const NormStats& stats);

}  // namespace grd
