#include <doctest.h>

#include <Eigen/Cholesky>
#include <cmath>

#include "grd/dynamics.hpp"
#include "grd/errors.hpp"
#include "grd/rng.hpp"
#include "oracles.hpp"

using namespace grd;

namespace {

Eigen::VectorXd random_vector(RngStream& rng, int n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
    return v;
}

/// Mass matrix assembled column-by-column from inverse dynamics with unit
/// accelerations, zero velocity, zero gravity, zero friction.
Eigen::MatrixXd mass_matrix_from_rnea(const RobotModel& model, const Eigen::VectorXd& q) {
    RobotModel no_g = model;
    no_g.gravity.setZero();
    for (LinkParams& l : no_g.links) l.friction_coeff = 0.0;
    const int n = model.dimension;
    Eigen::MatrixXd m(n, n);
    for (int j = 0; j < n; ++j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
        e[j] = 1.0;
        m.col(j) = inverse_dynamics_rnea(no_g, q, Eigen::VectorXd::Zero(n), e);
    }
    return m;
}

}  // namespace

TEST_SUITE_BEGIN("dynamics");

TEST_CASE("single pendulum mass matrix matches the closed form") {
    const RobotModel model = oracle::single_link(2.0, 0.3, 1.0);
    Eigen::VectorXd q(1);
    for (double angle : {0.0, 0.7, -1.3, 2.9}) {
        q[0] = angle;
        const Eigen::MatrixXd m = mass_matrix(model, q);
        CHECK(m(0, 0) == doctest::Approx(0.24).epsilon(1e-12));
    }
}

TEST_CASE("mass matrix is symmetric and Cholesky-decomposable on random models") {
    RngStream rng(314);
    for (int rep = 0; rep < 500; ++rep) {
        const RobotModel model = sample_robot_model(rng, 6);
        const Eigen::VectorXd q = random_vector(rng, model.dimension, -M_PI, M_PI);
        const Eigen::MatrixXd m = mass_matrix(model, q);
        CHECK((m - m.transpose()).cwiseAbs().maxCoeff() < 1e-10);
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        CHECK(llt.info() == Eigen::Success);
    }
}

TEST_CASE("composite-rigid-body and column-assembled mass matrices agree") {
    RngStream rng(2718);
    double worst = 0.0;
    for (int rep = 0; rep < 500; ++rep) {
        const RobotModel model = sample_robot_model(rng, 6);
        const Eigen::VectorXd q = random_vector(rng, model.dimension, -M_PI, M_PI);
        const Eigen::MatrixXd crba = mass_matrix(model, q);
        const Eigen::MatrixXd rnea = mass_matrix_from_rnea(model, q);
        const double scale = std::max(1.0, crba.cwiseAbs().maxCoeff());
        worst = std::max(worst, (crba - rnea).cwiseAbs().maxCoeff() / scale);
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("static torque-free configurations need zero torque") {
    RobotModel model = oracle::planar_two_link();
    model.gravity.setZero();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd q(2);
    q << 0.4, -1.1;
    const Eigen::VectorXd tau = inverse_dynamics_rnea(model, q, zero, zero);
    CHECK(tau.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("single pendulum gravity torque peaks at the horizontal pose") {
    const RobotModel model = oracle::single_link(2.0, 0.3, 1.0);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
    double max_abs = 0.0;
    for (int i = 0; i <= 200; ++i) {
        Eigen::VectorXd q(1);
        q[0] = -M_PI + 2 * M_PI * i / 200.0;
        const Eigen::VectorXd tau = inverse_dynamics_rnea(model, q, zero, zero);
        const double expected = -9.81 * 2.0 * 0.3 * std::cos(q[0]);
        CHECK(tau[0] == doctest::Approx(expected).epsilon(1e-10));
        max_abs = std::max(max_abs, std::abs(tau[0]));
    }
    CHECK(max_abs == doctest::Approx(5.886).epsilon(1e-12));
}

TEST_CASE("forward and inverse dynamics are mutual inverses") {
    RngStream rng(99);
    double worst = 0.0;
    for (int rep = 0; rep < 500; ++rep) {
        const RobotModel model = sample_robot_model(rng, 6);
        JointState s{random_vector(rng, model.dimension, -M_PI, M_PI),
                     random_vector(rng, model.dimension, -4.0, 4.0)};
        const Eigen::VectorXd tau = random_vector(rng, model.dimension, -30.0, 30.0);
        const Eigen::VectorXd qddot = forward_dynamics(model, s, tau);
        const Eigen::VectorXd tau_back = inverse_dynamics_rnea(model, s.q, s.qdot, qddot);
        worst = std::max(worst,
                         (tau - tau_back).cwiseAbs().maxCoeff() / std::max(1.0, tau.cwiseAbs().maxCoeff()));
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("forward dynamics equilibrium and scalar division") {
    RobotModel model = oracle::single_link(2.0, 0.3, 1.0);
    model.gravity.setZero();
    JointState rest{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
    CHECK(forward_dynamics(model, rest, Eigen::VectorXd::Zero(1))[0] == doctest::Approx(0.0));

    Eigen::VectorXd tau(1);
    tau << 0.48;
    CHECK(forward_dynamics(model, rest, tau)[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("double pendulum matches the independent closed form") {
    const RobotModel model = oracle::planar_two_link();
    const oracle::PlanarDoublePendulum pend = oracle::oracle_for(model);
    RngStream rng(4242);
    double worst = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
        const Eigen::Vector2d q = random_vector(rng, 2, -M_PI, M_PI);
        const Eigen::Vector2d qd = random_vector(rng, 2, -3.0, 3.0);
        const Eigen::Vector2d tau = random_vector(rng, 2, -10.0, 10.0);

        const Eigen::MatrixXd m = mass_matrix(model, q);
        worst = std::max(worst, (m - pend.mass(q)).cwiseAbs().maxCoeff());

        const JointState s{q, qd};
        const Eigen::VectorXd acc = forward_dynamics(model, s, tau);
        worst = std::max(worst, (acc - pend.accel(q, qd, tau)).cwiseAbs().maxCoeff() /
                                    std::max(1.0, acc.cwiseAbs().maxCoeff()));
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("two +z joints give a horizontal-plane robot") {
    RobotModel model = oracle::planar_two_link();
    model.axes = {JointAxis::PlusZ, JointAxis::PlusZ};
    // Potential energy must not depend on the configuration.
    const JointState a{Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(0.0, 0.0)};
    const JointState b{Eigen::Vector2d(1.3, -2.1), Eigen::Vector2d(0.0, 0.0)};
    CHECK(total_energy(model, a) == doctest::Approx(total_energy(model, b)).epsilon(1e-12));
    // And gravity must produce no joint torque.
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
    CHECK(inverse_dynamics_rnea(model, b.q, zero, zero).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("rk4 free rotation is exact for constant velocity") {
    RobotModel model = oracle::single_link(1.0, 0.2, 1.0, 0.0, JointAxis::PlusZ);
    model.gravity.setZero();
    JointState s{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
    s.q[0] = 0.3;
    s.qdot[0] = 1.7;
    const JointState next = rk4_step(model, s, Eigen::VectorXd::Zero(1), 0.25);
    CHECK(next.q[0] == doctest::Approx(0.3 + 1.7 * 0.25).epsilon(1e-14));
    CHECK(next.qdot[0] == doctest::Approx(1.7).epsilon(1e-14));
}

TEST_CASE("rk4 shows fourth-order convergence on the passive double pendulum") {
    // Error metric: RMS deviation from a dt = 1e-4 reference over the whole
    // trajectory, sampled every 0.1 s. A single endpoint comparison is prone
    // to cancellation and gives erratic ratios.
    const RobotModel model = oracle::planar_two_link();
    const JointState s0{Eigen::Vector2d(0.5, -0.2), Eigen::Vector2d(0.1, 0.1)};
    const Eigen::VectorXd tau = Eigen::VectorXd::Zero(2);
    const double horizon = 1.0;

    std::vector<JointState> ref;
    {
        JointState s = s0;
        const int n = static_cast<int>(std::llround(horizon / 1e-4));
        for (int i = 1; i <= n; ++i) {
            s = rk4_step(model, s, tau, 1e-4);
            if (i % 1000 == 0) ref.push_back(s);
        }
    }
    auto rms_error = [&](double dt) {
        JointState s = s0;
        const int n = static_cast<int>(std::llround(horizon / dt));
        const int per = static_cast<int>(std::llround(0.1 / dt));
        double acc = 0.0;
        int cnt = 0;
        for (int i = 1; i <= n; ++i) {
            s = rk4_step(model, s, tau, dt);
            if (i % per == 0) {
                const JointState& r = ref[i / per - 1];
                acc += (s.q - r.q).squaredNorm() + (s.qdot - r.qdot).squaredNorm();
                cnt += 4;
            }
        }
        return std::sqrt(acc / cnt);
    };

    const double ratio = rms_error(0.02) / rms_error(0.01);
    CHECK(ratio > 12.0);
    CHECK(ratio < 20.0);
}

TEST_CASE("energy behavior: conserved without friction, dissipated with it") {
    const RobotModel frictionless = oracle::planar_two_link();
    JointState s{Eigen::Vector2d(0.9, -0.4), Eigen::Vector2d(0.3, -0.2)};
    const Eigen::VectorXd tau = Eigen::VectorXd::Zero(2);

    const double e0 = total_energy(frictionless, s);
    JointState cur = s;
    for (int i = 0; i < 2000; ++i) cur = rk4_step(frictionless, cur, tau, 0.005);
    CHECK(std::abs(total_energy(frictionless, cur) - e0) / std::abs(e0) < 1e-3);

    const RobotModel damped = oracle::planar_two_link(1.4, 0.9, 0.22, 0.17, 2.0, 2.5, 1.1, 0.8, 0.8, 0.6);
    double prev = total_energy(damped, s);
    cur = s;
    for (int i = 0; i < 200; ++i) {
        cur = rk4_step(damped, cur, tau, 0.005);
        const double e = total_energy(damped, cur);
        CHECK(e <= prev + 1e-9);
        prev = e;
    }
}

TEST_CASE("kinetic energy of the single pendulum") {
    RobotModel model = oracle::single_link(2.0, 0.3, 1.0);
    model.gravity.setZero();  // isolate the kinetic part
    JointState s{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
    s.qdot[0] = 1.0;
    CHECK(total_energy(model, s) == doctest::Approx(0.12).epsilon(1e-12));
}

TEST_CASE("rollout keeps the full state history and is deterministic") {
    RngStream rng(5150);
    // Heavy, lightly damped links: short light links are stiff under viscous
    // friction and can legitimately diverge under explicit integration at
    // dt = 0.1 (the dataset generator rejects those).
    const RobotModel model = oracle::planar_two_link(3.0, 2.0, 0.4, 0.35, 2.0, 2.2, 1.0, 1.0, 1.0, 0.8);
    JointState s1{random_vector(rng, model.dimension, -M_PI, M_PI),
                  random_vector(rng, model.dimension, -1.0, 1.0)};
    std::vector<Eigen::VectorXd> torques;
    for (int t = 0; t < 50; ++t) torques.push_back(random_vector(rng, model.dimension, -5.0, 5.0));

    const Trajectory a = rollout(model, s1, torques, 0.1);
    CHECK(a.steps() == 50);
    CHECK(a.states.size() == 51);

    const Trajectory b = rollout(model, s1, torques, 0.1);
    for (int t = 0; t <= 50; ++t) {
        CHECK(a.states[t].q == b.states[t].q);
        CHECK(a.states[t].qdot == b.states[t].qdot);
    }
}

TEST_CASE("rest stays at rest without forcing") {
    RobotModel model = oracle::planar_two_link();
    model.gravity.setZero();
    JointState s1{Eigen::Vector2d(0.3, 0.8), Eigen::Vector2d(0.0, 0.0)};
    std::vector<Eigen::VectorXd> torques(20, Eigen::VectorXd::Zero(2));
    const Trajectory traj = rollout(model, s1, torques, 0.1);
    for (const JointState& s : traj.states) {
        CHECK((s.q - s1.q).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
        CHECK(s.qdot.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    }
}

TEST_CASE("dimension mismatches are rejected") {
    const RobotModel model = oracle::planar_two_link();
    CHECK_THROWS_AS(mass_matrix(model, Eigen::VectorXd::Zero(3)), DimensionMismatch);
    CHECK_THROWS_AS(inverse_dynamics_rnea(model, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1),
                                          Eigen::VectorXd::Zero(2)),
                    DimensionMismatch);
    JointState bad{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
    CHECK_THROWS_AS(forward_dynamics(model, bad, Eigen::VectorXd::Zero(1)), DimensionMismatch);
}

TEST_SUITE_END();
