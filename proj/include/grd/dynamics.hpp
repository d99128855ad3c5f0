#pragma once

#include <Eigen/Core>
#include <vector>

#include "grd/robot_model.hpp"

namespace grd {

/// Joint-space state s = [q, qdot].
struct JointState {
    Eigen::VectorXd q;     // rad
    Eigen::VectorXd qdot;  // rad/s
};

/// One simulated episode: n torque commands and the n+1 states they produce.
/// states[t+1] is the integration of states[t] under torques[t], held
/// constant over the step.
struct Trajectory {
    int dimension = 0;
    std::vector<JointState> states;
    std::vector<Eigen::VectorXd> torques;  // N*m
    double dt = 0.1;                       // s

    int steps() const { return static_cast<int>(torques.size()); }
};

/// Joint-space terms of the equation of motion
///   M(q) qddot + C(q, qdot) qdot + G(q) = tau + f
/// with viscous friction f_i = -mu_i * qdot_i.
struct DynamicsTerms {
    Eigen::MatrixXd mass_matrix;      // kg*m^2, symmetric positive-definite
    Eigen::VectorXd bias;             // N*m, C qdot + G
    Eigen::VectorXd friction_torque;  // N*m, f
};

/// Joint-space mass matrix via the composite-rigid-body recursion.
Eigen::MatrixXd mass_matrix(const RobotModel& model, const Eigen::VectorXd& q);

/// Recursive Newton-Euler: the applied torque that realizes qddot at
/// (q, qdot), i.e. tau = M qddot + C qdot + G - f.
Eigen::VectorXd inverse_dynamics_rnea(const RobotModel& model, const Eigen::VectorXd& q,
                                      const Eigen::VectorXd& qdot, const Eigen::VectorXd& qddot);

/// All terms at once (one kinematics pass for M plus one RNEA pass for bias).
DynamicsTerms dynamics_terms(const RobotModel& model, const Eigen::VectorXd& q,
                             const Eigen::VectorXd& qdot);

/// qddot = M^{-1} (tau + f - C qdot - G), solved by Cholesky with one step of
/// iterative refinement.
Eigen::VectorXd forward_dynamics(const RobotModel& model, const JointState& state,
                                 const Eigen::VectorXd& tau);

/// Classical fourth-order Runge-Kutta step of (q, qdot) with tau held
/// constant (zero-order hold). Angles accumulate without wrapping.
JointState rk4_step(const RobotModel& model, const JointState& state, const Eigen::VectorXd& tau,
                    double dt);

/// Kinetic plus gravitational potential energy, J. Potential is measured
/// against the base height (zero when every COM sits at height 0).
double total_energy(const RobotModel& model, const JointState& state);

/// Integrates the motor-torque sequence into a trajectory; states.front() is
/// s1 and the final integrated state is retained for supervision.
Trajectory rollout(const RobotModel& model, const JointState& s1,
                   const std::vector<Eigen::VectorXd>& torques, double dt);

}  // namespace grd
