#include "grd/dynamics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Geometry>
#include <cmath>
#include <string>

#include "grd/errors.hpp"

namespace grd {

namespace {

/// World-frame kinematics of every joint and link COM at configuration q.
/// Frame convention: link i's frame sits at joint i; the link body extends
/// along the frame's x-axis; joint i+1 is offset length_i along that axis.
/// At q = 0 all frames align with the world frame.
struct Kinematics {
    std::vector<Eigen::Matrix3d> rot;        // world orientation of link frame i
    std::vector<Eigen::Vector3d> joint_pos;  // world position of joint i
    std::vector<Eigen::Vector3d> axis_w;     // world direction of joint i's axis
    std::vector<Eigen::Vector3d> com;        // world position of link i's COM
    std::vector<Eigen::Matrix3d> inertia_w;  // COM-frame inertia rotated to world
};

Kinematics forward_kinematics(const RobotModel& model, const Eigen::VectorXd& q) {
    const int n = model.dimension;
    Kinematics k;
    k.rot.resize(n);
    k.joint_pos.resize(n);
    k.axis_w.resize(n);
    k.com.resize(n);
    k.inertia_w.resize(n);

    Eigen::Matrix3d parent_rot = Eigen::Matrix3d::Identity();
    Eigen::Vector3d parent_origin = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i) {
        k.joint_pos[i] = parent_origin;
        k.axis_w[i] = parent_rot * axis_vector(model.axes[i]);
        k.rot[i] = parent_rot * Eigen::AngleAxisd(q[i], axis_vector(model.axes[i])).toRotationMatrix();
        k.com[i] = k.joint_pos[i] + k.rot[i] * Eigen::Vector3d(model.links[i].com_offset, 0, 0);
        k.inertia_w[i] = k.rot[i] * model.links[i].inertia_diagonal().asDiagonal() * k.rot[i].transpose();

        parent_origin = k.joint_pos[i] + k.rot[i] * Eigen::Vector3d(model.links[i].length, 0, 0);
        parent_rot = k.rot[i];
    }
    return k;
}

void check_dimension(const RobotModel& model, const Eigen::VectorXd& v, const char* what) {
    if (v.size() != model.dimension)
        throw DimensionMismatch(std::string(what) + " has length " + std::to_string(v.size()) +
                                ", model dimension is " + std::to_string(model.dimension));
}

/// Parallel-axis term: inertia of a point mass at displacement d.
Eigen::Matrix3d point_mass_inertia(double mass, const Eigen::Vector3d& d) {
    return mass * (d.squaredNorm() * Eigen::Matrix3d::Identity() - d * d.transpose());
}

/// Rigid-link torque tau = M qddot + C qdot + G, world-frame Newton-Euler.
/// Friction is added by the caller.
Eigen::VectorXd rnea_rigid(const RobotModel& model, const Kinematics& k, const Eigen::VectorXd& qdot,
                           const Eigen::VectorXd& qddot) {
    const int n = model.dimension;

    // Outward pass: angular velocity/acceleration of each link and linear
    // acceleration of each joint origin and COM. Gravity enters as a fictitious
    // base acceleration, which folds G into the same recursion.
    std::vector<Eigen::Vector3d> omega(n), alpha(n), acc_origin(n), acc_com(n);
    Eigen::Vector3d parent_omega = Eigen::Vector3d::Zero();
    Eigen::Vector3d parent_alpha = Eigen::Vector3d::Zero();
    Eigen::Vector3d parent_acc = -model.gravity;  // base "accelerates" opposite to gravity
    Eigen::Vector3d parent_origin = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector3d r = k.joint_pos[i] - parent_origin;
        const Eigen::Vector3d joint_acc =
            parent_acc + parent_alpha.cross(r) + parent_omega.cross(parent_omega.cross(r));
        const Eigen::Vector3d& w = k.axis_w[i];

        omega[i] = parent_omega + w * qdot[i];
        alpha[i] = parent_alpha + w * qddot[i] + parent_omega.cross(w * qdot[i]);
        acc_origin[i] = joint_acc;
        const Eigen::Vector3d c = k.com[i] - k.joint_pos[i];
        acc_com[i] = joint_acc + alpha[i].cross(c) + omega[i].cross(omega[i].cross(c));

        parent_omega = omega[i];
        parent_alpha = alpha[i];
        parent_acc = joint_acc;
        parent_origin = k.joint_pos[i];
    }

    // Inward pass: accumulate the wrench each joint must transmit.
    Eigen::VectorXd tau(n);
    Eigen::Vector3d child_force = Eigen::Vector3d::Zero();
    Eigen::Vector3d child_moment = Eigen::Vector3d::Zero();  // about joint i+1
    for (int i = n - 1; i >= 0; --i) {
        const Eigen::Vector3d inertial_force = model.links[i].mass * acc_com[i];
        const Eigen::Vector3d inertial_moment =
            k.inertia_w[i] * alpha[i] + omega[i].cross(k.inertia_w[i] * omega[i]);

        Eigen::Vector3d moment = inertial_moment + (k.com[i] - k.joint_pos[i]).cross(inertial_force);
        if (i + 1 < n) {
            moment += child_moment + (k.joint_pos[i + 1] - k.joint_pos[i]).cross(child_force);
        }
        const Eigen::Vector3d force = inertial_force + child_force;

        tau[i] = k.axis_w[i].dot(moment);
        child_force = force;
        child_moment = moment;
    }
    return tau;
}

}  // namespace

Eigen::MatrixXd mass_matrix(const RobotModel& model, const Eigen::VectorXd& q) {
    check_dimension(model, q, "q");
    const int n = model.dimension;
    const Kinematics k = forward_kinematics(model, q);

    // Composite-rigid-body recursion from the tip: mass, COM, and COM-frame
    // inertia of the subtree rooted at each link.
    std::vector<double> comp_mass(n);
    std::vector<Eigen::Vector3d> comp_com(n);
    std::vector<Eigen::Matrix3d> comp_inertia(n);
    for (int i = n - 1; i >= 0; --i) {
        if (i == n - 1) {
            comp_mass[i] = model.links[i].mass;
            comp_com[i] = k.com[i];
            comp_inertia[i] = k.inertia_w[i];
        } else {
            comp_mass[i] = model.links[i].mass + comp_mass[i + 1];
            comp_com[i] =
                (model.links[i].mass * k.com[i] + comp_mass[i + 1] * comp_com[i + 1]) / comp_mass[i];
            comp_inertia[i] = k.inertia_w[i] + point_mass_inertia(model.links[i].mass, k.com[i] - comp_com[i]) +
                              comp_inertia[i + 1] +
                              point_mass_inertia(comp_mass[i + 1], comp_com[i + 1] - comp_com[i]);
        }
    }

    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        // Unit qddot_i sweeps subtree i about joint i's axis. Total wrench of
        // that sweep, expressed as force at the subtree COM plus a moment.
        const Eigen::Vector3d force = comp_mass[i] * k.axis_w[i].cross(comp_com[i] - k.joint_pos[i]);
        const Eigen::Vector3d moment_about_joint =
            (comp_inertia[i] + point_mass_inertia(comp_mass[i], comp_com[i] - k.joint_pos[i])) *
            k.axis_w[i];
        for (int j = i; j >= 0; --j) {
            const double mji =
                k.axis_w[j].dot(moment_about_joint + (k.joint_pos[i] - k.joint_pos[j]).cross(force));
            m(j, i) = mji;
            m(i, j) = mji;
        }
    }
    return m;
}

Eigen::VectorXd inverse_dynamics_rnea(const RobotModel& model, const Eigen::VectorXd& q,
                                      const Eigen::VectorXd& qdot, const Eigen::VectorXd& qddot) {
    check_dimension(model, q, "q");
    check_dimension(model, qdot, "qdot");
    check_dimension(model, qddot, "qddot");
    const Kinematics k = forward_kinematics(model, q);
    Eigen::VectorXd tau = rnea_rigid(model, k, qdot, qddot);
    for (int i = 0; i < model.dimension; ++i) tau[i] += model.links[i].friction_coeff * qdot[i];
    return tau;
}

DynamicsTerms dynamics_terms(const RobotModel& model, const Eigen::VectorXd& q,
                             const Eigen::VectorXd& qdot) {
    check_dimension(model, q, "q");
    check_dimension(model, qdot, "qdot");
    DynamicsTerms terms;
    terms.mass_matrix = mass_matrix(model, q);
    const Kinematics k = forward_kinematics(model, q);
    terms.bias = rnea_rigid(model, k, qdot, Eigen::VectorXd::Zero(model.dimension));
    terms.friction_torque = Eigen::VectorXd(model.dimension);
    for (int i = 0; i < model.dimension; ++i)
        terms.friction_torque[i] = -model.links[i].friction_coeff * qdot[i];
    return terms;
}

Eigen::VectorXd forward_dynamics(const RobotModel& model, const JointState& state,
                                 const Eigen::VectorXd& tau) {
    check_dimension(model, state.q, "q");
    check_dimension(model, state.qdot, "qdot");
    check_dimension(model, tau, "tau");

    const DynamicsTerms terms = dynamics_terms(model, state.q, state.qdot);
    const Eigen::VectorXd rhs = tau + terms.friction_torque - terms.bias;

    Eigen::LLT<Eigen::MatrixXd> llt(terms.mass_matrix);
    if (llt.info() != Eigen::Success)
        throw SingularMass("Cholesky failed; the model violates its construction invariants");

    // One step of iterative refinement keeps the torque residual near machine
    // precision even for badly conditioned mass matrices (near-collinear
    // chains with axial joints).
    Eigen::VectorXd qddot = llt.solve(rhs);
    qddot += llt.solve(rhs - terms.mass_matrix * qddot);
    return qddot;
}

JointState rk4_step(const RobotModel& model, const JointState& state, const Eigen::VectorXd& tau,
                    double dt) {
    if (!(dt > 0.0)) throw InvalidConfig("rk4 step requires dt > 0");

    auto accel = [&](const JointState& s) { return forward_dynamics(model, s, tau); };
    auto advance = [&](const JointState& s, const Eigen::VectorXd& dq, const Eigen::VectorXd& dqd,
                       double h) {
        return JointState{s.q + h * dq, s.qdot + h * dqd};
    };

    const Eigen::VectorXd k1q = state.qdot;
    const Eigen::VectorXd k1v = accel(state);
    const JointState s2 = advance(state, k1q, k1v, dt / 2);
    const Eigen::VectorXd k2q = s2.qdot;
    const Eigen::VectorXd k2v = accel(s2);
    const JointState s3 = advance(state, k2q, k2v, dt / 2);
    const Eigen::VectorXd k3q = s3.qdot;
    const Eigen::VectorXd k3v = accel(s3);
    const JointState s4 = advance(state, k3q, k3v, dt);
    const Eigen::VectorXd k4q = s4.qdot;
    const Eigen::VectorXd k4v = accel(s4);

    JointState next;
    next.q = state.q + (dt / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
    next.qdot = state.qdot + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    if (!next.q.allFinite() || !next.qdot.allFinite())
        throw NonFiniteState("rk4 step produced a non-finite state");
    return next;
}

double total_energy(const RobotModel& model, const JointState& state) {
    check_dimension(model, state.q, "q");
    check_dimension(model, state.qdot, "qdot");
    const Eigen::MatrixXd m = mass_matrix(model, state.q);
    const double kinetic = 0.5 * state.qdot.dot(m * state.qdot);

    const Kinematics k = forward_kinematics(model, state.q);
    double potential = 0.0;
    for (int i = 0; i < model.dimension; ++i)
        potential -= model.links[i].mass * model.gravity.dot(k.com[i]);
    return kinetic + potential;
}

Trajectory rollout(const RobotModel& model, const JointState& s1,
                   const std::vector<Eigen::VectorXd>& torques, double dt) {
    Trajectory traj;
    traj.dimension = model.dimension;
    traj.dt = dt;
    traj.states.reserve(torques.size() + 1);
    traj.torques = torques;
    traj.states.push_back(s1);
    for (std::size_t t = 0; t < torques.size(); ++t) {
        try {
            traj.states.push_back(rk4_step(model, traj.states.back(), torques[t], dt));
        } catch (const NonFiniteState&) {
            throw NonFiniteState("rollout diverged at step " + std::to_string(t));
        }
    }
    return traj;
}

}  // namespace grd
