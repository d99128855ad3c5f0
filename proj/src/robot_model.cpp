#include "grd/robot_model.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "grd/errors.hpp"

namespace grd {

Eigen::Vector3d axis_vector(JointAxis axis) {
    switch (axis) {
        case JointAxis::PlusX: return {1, 0, 0};
        case JointAxis::MinusX: return {-1, 0, 0};
        case JointAxis::PlusY: return {0, 1, 0};
        case JointAxis::MinusY: return {0, -1, 0};
        case JointAxis::PlusZ: return {0, 0, 1};
        case JointAxis::MinusZ: return {0, 0, -1};
    }
    throw InvalidConfig("unknown joint axis code");
}

std::string axis_name(JointAxis axis) {
    static const char* names[6] = {"+x", "-x", "+y", "-y", "+z", "-z"};
    return names[static_cast<int>(axis)];
}

JointAxis axis_from_name(const std::string& name) {
    for (int i = 0; i < 6; ++i) {
        if (axis_name(static_cast<JointAxis>(i)) == name) return static_cast<JointAxis>(i);
    }
    throw FormatError("bad axis name '" + name + "'");
}

void RobotModel::validate() const {
    if (dimension < 1) throw InvalidConfig("model dimension must be >= 1");
    if (static_cast<int>(axes.size()) != dimension || static_cast<int>(links.size()) != dimension)
        throw InvalidConfig("axes/links counts must equal the dimension");
    for (const LinkParams& link : links) {
        if (!(link.mass > 0.0)) throw InvalidConfig("link mass must be positive");
        if (!(link.length > 0.0)) throw InvalidConfig("link length must be positive");
        if (!(link.inertia_scale > 0.0)) throw InvalidConfig("inertia scale must be positive");
        if (link.friction_coeff < 0.0) throw InvalidConfig("friction must be non-negative");
        if (!std::isfinite(link.com_offset)) throw InvalidConfig("com offset must be finite");
    }
    if (!gravity.allFinite()) throw InvalidConfig("gravity must be finite");
}

LinkParams sample_link_params(RngStream& rng) {
    LinkParams p;
    p.mass = rng.uniform(ParamRanges::kMassMin, ParamRanges::kMassMax);
    p.friction_coeff = rng.uniform(ParamRanges::kFrictionMin, ParamRanges::kFrictionMax);

    // length = |com_offset| * u with u in the ratio range. Offsets too small
    // to ever reach the length floor are redrawn immediately; the (offset, u)
    // pair is redrawn as a whole if the product still lands below the floor.
    for (;;) {
        double com = rng.uniform(ParamRanges::kComOffsetMin, ParamRanges::kComOffsetMax);
        while (std::abs(com) * ParamRanges::kLengthRatioMax < ParamRanges::kLengthFloor) {
            com = rng.uniform(ParamRanges::kComOffsetMin, ParamRanges::kComOffsetMax);
        }
        const double ratio = rng.uniform(ParamRanges::kLengthRatioMin, ParamRanges::kLengthRatioMax);
        const double length = std::abs(com) * ratio;
        if (length >= ParamRanges::kLengthFloor) {
            p.com_offset = com;
            p.length = length;
            break;
        }
    }

    p.inertia_scale = rng.uniform(ParamRanges::kInertiaScaleMin, ParamRanges::kInertiaScaleMax);
    return p;
}

JointAxis sample_joint_axis(RngStream& rng) {
    return static_cast<JointAxis>(rng.uniform_int(6));
}

RobotModel sample_robot_model(RngStream& rng, int max_links, std::optional<int> fixed_dimension) {
    if (max_links < 1) throw InvalidConfig("max_links must be >= 1");
    if (fixed_dimension && (*fixed_dimension < 1 || *fixed_dimension > max_links))
        throw InvalidConfig("fixed_dimension must lie in [1, max_links]");

    RobotModel model;
    model.dimension = fixed_dimension ? *fixed_dimension
                                      : static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_links))) + 1;
    model.axes.reserve(model.dimension);
    model.links.reserve(model.dimension);
    for (int i = 0; i < model.dimension; ++i) {
        model.axes.push_back(sample_joint_axis(rng));
        model.links.push_back(sample_link_params(rng));
    }
    model.validate();
    return model;
}

RobotModel perturb_model(const RobotModel& model, double lo, double hi, RngStream& rng) {
    if (!(lo > 0.0) || lo > hi) throw InvalidConfig("perturbation interval must satisfy 0 < lo <= hi");
    RobotModel out = model;
    for (LinkParams& link : out.links) {
        link.mass = std::max(link.mass * rng.uniform(lo, hi), 1e-6);
        link.inertia_scale = std::max(link.inertia_scale * rng.uniform(lo, hi), 1e-6);
        link.friction_coeff = std::max(link.friction_coeff * rng.uniform(lo, hi), 0.0);
    }
    return out;
}

std::string model_to_json(const RobotModel& model) {
    nlohmann::json j;
    j["dimension"] = model.dimension;
    j["axes"] = nlohmann::json::array();
    for (JointAxis a : model.axes) j["axes"].push_back(axis_name(a));
    j["links"] = nlohmann::json::array();
    for (const LinkParams& l : model.links) {
        j["links"].push_back({{"mass", l.mass},
                              {"com_offset", l.com_offset},
                              {"length", l.length},
                              {"inertia_scale", l.inertia_scale},
                              {"friction_coeff", l.friction_coeff}});
    }
    j["gravity"] = {model.gravity.x(), model.gravity.y(), model.gravity.z()};
    return j.dump(2);
}

RobotModel model_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model json: ") + e.what());
    }
    RobotModel model;
    try {
        model.dimension = j.at("dimension").get<int>();
        for (const auto& a : j.at("axes")) model.axes.push_back(axis_from_name(a.get<std::string>()));
        for (const auto& l : j.at("links")) {
            LinkParams p;
            p.mass = l.at("mass").get<double>();
            p.com_offset = l.at("com_offset").get<double>();
            p.length = l.at("length").get<double>();
            p.inertia_scale = l.at("inertia_scale").get<double>();
            p.friction_coeff = l.at("friction_coeff").get<double>();
            model.links.push_back(p);
        }
        const auto& g = j.at("gravity");
        model.gravity = {g.at(0).get<double>(), g.at(1).get<double>(), g.at(2).get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model json: ") + e.what());
    }
    model.validate();
    return model;
}

}  // namespace grd
