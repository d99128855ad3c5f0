#pragma once

// Independent closed-form references used by the tests. These are derived by
// hand from first principles (Lagrangian mechanics for the pendulums) and
// deliberately share no code with the engine they check.

#include <Eigen/Dense>
#include <cmath>

#include "grd/robot_model.hpp"

namespace grd::oracle {

/// Planar double pendulum. Both joints rotate about +y; gravity acts along
/// world -z, so motion stays in the x-z plane. Angles are measured from the
/// +x axis toward -z (q = pi/2 points straight down). For link i:
/// m = mass, l = joint-to-joint length, lc = signed COM offset, ic = COM
/// inertia about the rotation axis, mu = viscous friction.
struct PlanarDoublePendulum {
    double m1, l1, lc1, ic1, mu1;
    double m2, lc2, ic2, mu2;
    double g;  // magnitude, pulls along -z

    Eigen::Matrix2d mass(const Eigen::Vector2d& q) const {
        const double c2 = std::cos(q[1]);
        Eigen::Matrix2d m;
        m(0, 0) = ic1 + m1 * lc1 * lc1 + ic2 + m2 * (l1 * l1 + lc2 * lc2 + 2 * l1 * lc2 * c2);
        m(0, 1) = ic2 + m2 * (lc2 * lc2 + l1 * lc2 * c2);
        m(1, 0) = m(0, 1);
        m(1, 1) = ic2 + m2 * lc2 * lc2;
        return m;
    }

    Eigen::Vector2d coriolis(const Eigen::Vector2d& q, const Eigen::Vector2d& qd) const {
        const double h = m2 * l1 * lc2 * std::sin(q[1]);
        return {-h * qd[1] * (2 * qd[0] + qd[1]), h * qd[0] * qd[0]};
    }

    /// Heights are z = -lc sin(q), so the potential carries a minus sign
    /// relative to the usual gravity-along--y convention.
    Eigen::Vector2d gravity_torque(const Eigen::Vector2d& q) const {
        const double c1 = std::cos(q[0]);
        const double c12 = std::cos(q[0] + q[1]);
        return {-g * ((m1 * lc1 + m2 * l1) * c1 + m2 * lc2 * c12), -g * m2 * lc2 * c12};
    }

    Eigen::Vector2d accel(const Eigen::Vector2d& q, const Eigen::Vector2d& qd,
                          const Eigen::Vector2d& tau) const {
        const Eigen::Vector2d friction(-mu1 * qd[0], -mu2 * qd[1]);
        return mass(q).ldlt().solve(tau + friction - coriolis(q, qd) - gravity_torque(q));
    }
};

/// A concrete two-link model matching PlanarDoublePendulum's conventions,
/// with the oracle parameters derived from the same links.
inline RobotModel planar_two_link(double m1 = 1.4, double m2 = 0.9, double lc1 = 0.22,
                                  double lc2 = 0.17, double u1 = 2.0, double u2 = 2.5,
                                  double s1 = 1.1, double s2 = 0.8, double mu1 = 0.0,
                                  double mu2 = 0.0) {
    RobotModel model;
    model.dimension = 2;
    model.axes = {JointAxis::PlusY, JointAxis::PlusY};
    LinkParams a, b;
    a.mass = m1;
    a.com_offset = lc1;
    a.length = lc1 * u1;
    a.inertia_scale = s1;
    a.friction_coeff = mu1;
    b.mass = m2;
    b.com_offset = lc2;
    b.length = lc2 * u2;
    b.inertia_scale = s2;
    b.friction_coeff = mu2;
    model.links = {a, b};
    return model;
}

inline PlanarDoublePendulum oracle_for(const RobotModel& model) {
    PlanarDoublePendulum p{};
    p.m1 = model.links[0].mass;
    p.l1 = model.links[0].length;
    p.lc1 = model.links[0].com_offset;
    p.ic1 = model.links[0].mass * model.links[0].length * model.links[0].length *
            model.links[0].inertia_scale / 12.0;
    p.mu1 = model.links[0].friction_coeff;
    p.m2 = model.links[1].mass;
    p.lc2 = model.links[1].com_offset;
    p.ic2 = model.links[1].mass * model.links[1].length * model.links[1].length *
            model.links[1].inertia_scale / 12.0;
    p.mu2 = model.links[1].friction_coeff;
    p.g = 9.81;
    return p;
}

/// Single pendulum about +y: M = ic + m lc^2, gravity torque -m g lc cos(q).
inline RobotModel single_link(double mass, double com_offset, double inertia_scale,
                              double friction = 0.0, JointAxis axis = JointAxis::PlusY) {
    RobotModel model;
    model.dimension = 1;
    model.axes = {axis};
    LinkParams p;
    p.mass = mass;
    p.com_offset = com_offset;
    p.length = 2.0 * com_offset;
    p.inertia_scale = inertia_scale;
    p.friction_coeff = friction;
    model.links = {p};
    return model;
}

}  // namespace grd::oracle
