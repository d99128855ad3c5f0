#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "grd/dataset.hpp"
#include "grd/model.hpp"

namespace grd {

/// Train/deploy mismatch injected into the target robot: disturbance torques
/// act inside the simulation, observation noise corrupts the recorded states.
struct RealityGap {
    double obs_noise_q = 0.005;        // rad
    double obs_noise_qdot = 0.01;      // rad/s
    double disturbance_torque = 0.5;   // N*m

    bool zero() const {
        return obs_noise_q == 0.0 && obs_noise_qdot == 0.0 && disturbance_torque == 0.0;
    }
};

/// A fixed robot excluded from every training draw, plus its reality gap.
struct TargetRobot {
    RobotModel model;
    RealityGap gap;
};

/// Draws target candidates (standard sampling distribution, fixed dimension)
/// until one survives a clean full-length motor-bubbling probe under the
/// velocity cap. Deterministic in the seed; use seeds disjoint from the
/// dataset seeds.
TargetRobot sample_target_robot(std::uint64_t seed, int dimension, const RealityGap& gap,
                                int probe_steps = 2000, double dt = 0.1);

/// One long motor-bubbling run on the target's true dynamics. Disturbance
/// torques are added to the commanded torque inside the integrator (the
/// recorded torque is the command); observation noise is added to the
/// recorded states. Runs violating the velocity cap are redrawn whole.
Trajectory collect_target_data(const TargetRobot& target, int steps, std::uint64_t seed,
                               double dt = 0.1);

/// Non-overlapping windows of the long trajectory as a dataset, shuffled and
/// split train/test.
std::pair<TrajectoryDataset, TrajectoryDataset> window_target_data(const TargetRobot& target,
                                                                   const Trajectory& data,
                                                                   int window, double train_fraction,
                                                                   std::uint64_t seed);

struct TransferConfig {
    int steps = 1000;            // fine-tuning step budget
    double lr = 1e-4;
    int patience = 200;          // early stop after this many steps without a new best
    int window = 50;
    double train_fraction = 0.8;
    std::uint64_t seed = 1;
    int tune_blocks = 0;         // widen tuning to the last k blocks (0 = output layer only)
    bool verbose = false;
};

struct TransferReport {
    double zero_shot_rmse = 0.0;
    double final_rmse = 0.0;
    std::vector<std::pair<double, double>> history;  // per step: train/test metric
    std::vector<std::string> tuned_parameters;
    std::uint64_t data_budget_rows = 0;
    // Filled by the inverse transfer only.
    double composite_torque_rmse = -1.0;
    double composite_state_rmse = -1.0;
};

std::string transfer_report_to_json(const TransferReport& report);
void write_transfer_history_csv(const std::string& path, const TransferReport& report);

/// Last-layer fine-tuning of a dynamics network (general or specific) on
/// target data; the network is updated in place to its best-test parameters.
/// Metrics are normalized-unit state RMSE.
TransferReport adapt_to_target(Network& net, const TargetRobot& target, const Trajectory& data,
                               const TransferConfig& cfg);

struct SpecializeConfig {
    std::uint64_t trajectories = 2000;
    int n_steps = 50;
    double dt = 0.1;
    double perturb_lo = 0.25;
    double perturb_hi = 4.0;
    std::uint64_t seed = 11;
    TrainConfig train;
};

/// Adapts a general network toward a specific robot class: generates a fresh
/// dataset by perturbing the nominal model's parameters (axes and dimension
/// fixed), then continues training all parameters on it. The input scaling of
/// the checkpoint is kept.
Network specialize_to_model(const Network& grd, const RobotModel& nominal,
                            const SpecializeConfig& cfg);

/// Last-layer fine-tuning of an inverse network on target data, plus both
/// composite evaluations (dynamics after inverse, inverse after dynamics) on
/// the test windows. Torque kinds report N*m; the left kind reports
/// normalized state RMSE.
TransferReport adapt_inverse_to_target(Network& inv, const Network& grd, const TargetRobot& target,
                                       const Trajectory& data, const TransferConfig& cfg);

}  // namespace grd
