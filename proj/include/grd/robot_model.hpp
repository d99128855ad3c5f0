#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "grd/rng.hpp"

namespace grd {

/// Signed coordinate axis a revolute joint spins about, expressed in the
/// parent link frame.
enum class JointAxis : std::uint8_t {
    PlusX = 0,
    MinusX = 1,
    PlusY = 2,
    MinusY = 3,
    PlusZ = 4,
    MinusZ = 5,
};

Eigen::Vector3d axis_vector(JointAxis axis);
std::string axis_name(JointAxis axis);
JointAxis axis_from_name(const std::string& name);

/// Sampling ranges for link parameters, initial states, and torques.
struct ParamRanges {
    static constexpr double kMassMin = 0.1, kMassMax = 10.0;                 // kg
    static constexpr double kFrictionMin = 0.5, kFrictionMax = 2.5;          // N*m*s/rad
    static constexpr double kComOffsetMin = -0.1, kComOffsetMax = 0.5;       // m
    static constexpr double kLengthRatioMin = 10.0 / 7.0, kLengthRatioMax = 10.0 / 3.0;
    static constexpr double kInertiaScaleMin = 0.3, kInertiaScaleMax = 3.0;
    static constexpr double kLengthFloor = 0.05;                             // m
    static constexpr double kInitPosMin = -M_PI, kInitPosMax = M_PI;         // rad
    static constexpr double kInitVelMin = -1.0, kInitVelMax = 1.0;           // rad/s
    static constexpr double kTorqueMin = -30.0, kTorqueMax = 30.0;           // N*m
};

/// Dynamic parameters of a single link. The link body extends along its
/// local x-axis; the center of mass sits at (com_offset, 0, 0) and the next
/// joint at (length, 0, 0) in the link frame.
struct LinkParams {
    double mass = 1.0;            // kg
    double com_offset = 0.25;     // m, signed distance of the COM along local x
    double length = 0.5;          // m, joint-to-joint
    double inertia_scale = 1.0;   // multiplies the slender-rod inertia
    double friction_coeff = 1.0;  // N*m*s/rad, viscous

    /// Transverse moment of inertia about the COM: (1/12) m l^2 * scale.
    double transverse_inertia() const { return mass * length * length * inertia_scale / 12.0; }

    /// COM-frame inertia tensor, diagonal in the link frame. The axial term
    /// is kept strictly positive so the joint-space mass matrix stays
    /// positive-definite even when a joint axis is collinear with the link.
    Eigen::Vector3d inertia_diagonal() const {
        const double i = transverse_inertia();
        return {0.01 * i, i, i};
    }
};

/// A randomized serial robot: per-joint rotation axes, per-link dynamic
/// parameters, and a world-frame gravity vector. Joint i connects link i to
/// its parent (link i-1, or the grounded base for i = 0) and is located at
/// the distal end of the parent link.
struct RobotModel {
    int dimension = 0;
    std::vector<JointAxis> axes;
    std::vector<LinkParams> links;
    Eigen::Vector3d gravity{0.0, 0.0, -9.81};

    void validate() const;  // throws InvalidConfig when an invariant fails
};

constexpr int kDefaultMaxLinks = 6;

/// Uniform draw of link parameters within the sampling ranges. Length is
/// tied to the COM offset through the ratio rule; pairs whose length would
/// fall below the floor are redrawn.
LinkParams sample_link_params(RngStream& rng);

/// Uniform draw over the six signed axes.
JointAxis sample_joint_axis(RngStream& rng);

/// Samples a full robot: dimension (uniform in {1..max_links} unless fixed),
/// then one axis and one parameter block per link.
RobotModel sample_robot_model(RngStream& rng, int max_links = kDefaultMaxLinks,
                              std::optional<int> fixed_dimension = std::nullopt);

/// Multiplies mass, inertia_scale, and friction_coeff of every link by
/// independent uniform draws in [lo, hi]. Axes, dimension, and geometry are
/// untouched.
RobotModel perturb_model(const RobotModel& model, double lo, double hi, RngStream& rng);

std::string model_to_json(const RobotModel& model);
RobotModel model_from_json(const std::string& text);

}  // namespace grd
