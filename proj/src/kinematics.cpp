#include "fsag/kinematics.hpp"

#include <algorithm>
#include <set>

#include "fsag/io.hpp"
#include "fsag/scene_gen.hpp"

namespace fsag::kinematics {

int HandModel::joint_index(const std::string& joint_name) const {
    for (std::size_t i = 0; i < joints.size(); ++i)
        if (joints[i].name == joint_name) return static_cast<int>(i);
    return -1;
}

Eigen::VectorXd HandModel::clamp(const Eigen::VectorXd& q) const {
    return q.cwiseMax(q_min).cwiseMin(q_max);
}

namespace {

JointType joint_type_from_string(const std::string& s, const std::string& where) {
    if (s == "revolute") return JointType::revolute;
    if (s == "prismatic") return JointType::prismatic;
    if (s == "fixed") return JointType::fixed;
    raise_input("unknown joint type at " + where + ": " + s);
}

Eigen::Vector3d vec3_from(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) raise_input("expected 3-vector at " + where);
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Eigen::Isometry3d origin_from(const nlohmann::json& j, const std::string& where) {
    Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
    if (j.contains("xyz")) T.translation() = vec3_from(j.at("xyz"), where + "/xyz");
    if (j.contains("rpy")) {
        const Eigen::Vector3d rpy = vec3_from(j.at("rpy"), where + "/rpy");
        T.linear() = (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
                      Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
                      Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
                         .toRotationMatrix();
    }
    return T;
}

FingertipFrame frame_from(const nlohmann::json& j, const HandModel& model,
                          const std::string& where) {
    FingertipFrame f;
    f.name = io::require_string(j, "name", where);
    const std::string link = io::require_string(j, "link", where);
    f.link = model.joint_index(link);
    if (f.link < 0) raise_input("unknown link at " + where + ": " + link);
    if (j.contains("offset")) f.offset = vec3_from(j.at("offset"), where + "/offset");
    return f;
}

}  // namespace

HandModel parse_model(const nlohmann::json& description) {
    HandModel model;
    model.name = io::require_string(description, "name", "/model");
    const auto& joints = io::require_field(description, "joints", "/model");
    if (!joints.is_array() || joints.empty()) raise_input("model needs a joints array");

    // First pass: create joints and name them.
    std::vector<std::string> parents;
    for (std::size_t i = 0; i < joints.size(); ++i) {
        const std::string where = "/model/joints/" + std::to_string(i);
        const auto& entry = joints[i];
        Joint joint;
        joint.name = io::require_string(entry, "name", where);
        if (model.joint_index(joint.name) >= 0)
            raise_input("duplicate joint name at " + where + ": " + joint.name);
        joint.type = joint_type_from_string(io::require_string(entry, "type", where), where);
        if (entry.contains("origin")) joint.origin = origin_from(entry.at("origin"), where);
        if (joint.type != JointType::fixed) {
            joint.axis = vec3_from(io::require_field(entry, "axis", where), where + "/axis");
            if (std::abs(joint.axis.norm() - 1.0) > 1e-6)
                raise_input("non-unit joint axis at " + where);
            const auto& limits = io::require_field(entry, "limits", where);
            if (!limits.is_array() || limits.size() != 2)
                raise_input("expected [lo, hi] limits at " + where);
            joint.lower = limits[0].get<double>();
            joint.upper = limits[1].get<double>();
            if (joint.lower >= joint.upper)
                raise_input("joint limits must satisfy lo < hi at " + where);
            joint.q_index = model.n_q++;
        }
        parents.push_back(io::require_string(entry, "parent", where));
        model.joints.push_back(std::move(joint));
    }

    // Second pass: resolve parents ("base" is the root) and check for cycles.
    for (std::size_t i = 0; i < model.joints.size(); ++i) {
        if (parents[i] == "base") {
            model.joints[i].parent = -1;
            continue;
        }
        const int p = model.joint_index(parents[i]);
        if (p < 0)
            raise_input("unknown parent link '" + parents[i] + "' for joint " +
                        model.joints[i].name);
        model.joints[i].parent = p;
    }
    for (std::size_t i = 0; i < model.joints.size(); ++i) {
        std::set<int> seen;
        int cursor = static_cast<int>(i);
        while (cursor >= 0) {
            if (!seen.insert(cursor).second)
                raise_input("cycle detected through joint " + model.joints[i].name);
            cursor = model.joints[static_cast<std::size_t>(cursor)].parent;
        }
    }

    // Topological order so FK can fill parents before children regardless of
    // the file's declaration order.
    {
        std::vector<bool> placed(model.joints.size(), false);
        while (model.topo_order.size() < model.joints.size()) {
            for (std::size_t i = 0; i < model.joints.size(); ++i) {
                if (placed[i]) continue;
                const int p = model.joints[i].parent;
                if (p < 0 || placed[static_cast<std::size_t>(p)]) {
                    model.topo_order.push_back(static_cast<int>(i));
                    placed[i] = true;
                }
            }
        }
    }

    model.q_min.resize(model.n_q);
    model.q_max.resize(model.n_q);
    for (const auto& joint : model.joints) {
        if (joint.q_index >= 0) {
            model.q_min(joint.q_index) = joint.lower;
            model.q_max(joint.q_index) = joint.upper;
        }
    }

    const auto& fingertips = io::require_field(description, "fingertips", "/model");
    if (!fingertips.is_array() || fingertips.empty())
        raise_input("model needs a fingertips array");
    for (std::size_t i = 0; i < fingertips.size(); ++i)
        model.fingertips.push_back(
            frame_from(fingertips[i], model, "/model/fingertips/" + std::to_string(i)));

    if (description.contains("wrist"))
        model.wrist = frame_from(description.at("wrist"), model, "/model/wrist");

    if (description.contains("coupling")) {
        const auto& coupling = description.at("coupling");
        const auto& C = io::require_field(coupling, "C", "/model/coupling");
        const auto& d = io::require_field(coupling, "d", "/model/coupling");
        if (!C.is_array() || !d.is_array()) raise_input("coupling C and d must be arrays");
        const int rows = static_cast<int>(C.size());
        if (static_cast<int>(d.size()) != rows)
            raise_input("coupling d length must match C rows");
        model.coupling_C.resize(rows, model.n_q);
        model.coupling_d.resize(rows);
        for (int r = 0; r < rows; ++r) {
            const auto& row = C[static_cast<std::size_t>(r)];
            if (!row.is_array() || static_cast<int>(row.size()) != model.n_q)
                raise_input("coupling row " + std::to_string(r) + " must have n_q entries");
            for (int c = 0; c < model.n_q; ++c)
                model.coupling_C(r, c) = row[static_cast<std::size_t>(c)].get<double>();
            model.coupling_d(r) = d[static_cast<std::size_t>(r)].get<double>();
        }
    } else {
        model.coupling_C.resize(0, model.n_q);
        model.coupling_d.resize(0);
    }

    if (description.contains("collision")) {
        const auto& collision = description.at("collision");
        if (collision.contains("table_z"))
            model.table_z = collision.at("table_z").get<double>();
        if (collision.contains("spheres")) {
            const auto& spheres = collision.at("spheres");
            for (std::size_t i = 0; i < spheres.size(); ++i) {
                const std::string where = "/model/collision/spheres/" + std::to_string(i);
                const auto& s = spheres[i];
                CollisionSphere sphere;
                const std::string link = io::require_string(s, "link", where);
                sphere.link = model.joint_index(link);
                if (sphere.link < 0) raise_input("unknown link at " + where + ": " + link);
                sphere.center = vec3_from(io::require_field(s, "center", where), where);
                sphere.radius = io::require_number(s, "radius", where);
                if (sphere.radius <= 0.0) raise_input("sphere radius must be positive at " + where);
                model.spheres.push_back(sphere);
            }
        }
    }
    return model;
}

HandModel parse_model_file(const std::string& path) {
    return parse_model(io::read_json(path));
}

KinematicState forward_kinematics(const HandModel& model, const Eigen::VectorXd& q,
                                  const Eigen::Isometry3d& base) {
    if (q.size() != model.n_q) raise_input("forward_kinematics: q length mismatch");
    KinematicState state;
    state.q = q;
    state.link_poses.resize(model.joints.size());
    state.joint_frames.resize(model.joints.size());

    for (int idx : model.topo_order) {
        const std::size_t i = static_cast<std::size_t>(idx);
        const Joint& joint = model.joints[i];
        const Eigen::Isometry3d parent_pose =
            joint.parent < 0 ? base : state.link_poses[static_cast<std::size_t>(joint.parent)];
        const Eigen::Isometry3d frame = parent_pose * joint.origin;
        state.joint_frames[i] = frame;
        Eigen::Isometry3d motion = Eigen::Isometry3d::Identity();
        if (joint.type == JointType::revolute)
            motion.linear() = Eigen::AngleAxisd(q(joint.q_index), joint.axis).toRotationMatrix();
        else if (joint.type == JointType::prismatic)
            motion.translation() = q(joint.q_index) * joint.axis;
        state.link_poses[i] = frame * motion;
    }

    state.fingertips.resize(model.fingertips.size());
    for (std::size_t k = 0; k < model.fingertips.size(); ++k)
        state.fingertips[k] = frame_position(model, state, model.fingertips[k]);
    return state;
}

Eigen::Vector3d frame_position(const HandModel& model, const KinematicState& state,
                               const FingertipFrame& frame) {
    (void)model;
    return state.link_poses[static_cast<std::size_t>(frame.link)] * frame.offset;
}

Eigen::MatrixXd frame_jacobian(const HandModel& model, const KinematicState& state,
                               const FingertipFrame& frame) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(3, model.n_q);
    const Eigen::Vector3d p = frame_position(model, state, frame);
    int cursor = frame.link;
    while (cursor >= 0) {
        const Joint& joint = model.joints[static_cast<std::size_t>(cursor)];
        if (joint.q_index >= 0) {
            const Eigen::Vector3d axis_w =
                state.joint_frames[static_cast<std::size_t>(cursor)].linear() * joint.axis;
            if (joint.type == JointType::revolute) {
                const Eigen::Vector3d origin_w =
                    state.joint_frames[static_cast<std::size_t>(cursor)].translation();
                J.col(joint.q_index) = axis_w.cross(p - origin_w);
            } else {
                J.col(joint.q_index) = axis_w;
            }
        }
        cursor = joint.parent;
    }
    return J;
}

Eigen::MatrixXd fingertip_jacobian(const HandModel& model, const KinematicState& state, int pad) {
    if (pad < 0 || pad >= static_cast<int>(model.fingertips.size()))
        raise_input("fingertip_jacobian: pad index out of range");
    return frame_jacobian(model, state, model.fingertips[static_cast<std::size_t>(pad)]);
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> coupling_residual(const HandModel& model,
                                                              const Eigen::VectorXd& q) {
    if (q.size() != model.n_q) raise_input("coupling_residual: q length mismatch");
    if (model.coupling_C.cols() != model.n_q)
        raise_input("coupling matrix column count mismatch");
    return {model.coupling_C * q - model.coupling_d, model.coupling_C};
}

std::vector<Eigen::Vector3d> sphere_centers(const HandModel& model, const KinematicState& state) {
    std::vector<Eigen::Vector3d> centers;
    centers.reserve(model.spheres.size());
    for (const auto& sphere : model.spheres)
        centers.push_back(state.link_poses[static_cast<std::size_t>(sphere.link)] * sphere.center);
    return centers;
}

std::vector<std::pair<int, int>> collision_pairs(const HandModel& model) {
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t i = 0; i < model.spheres.size(); ++i) {
        for (std::size_t j = i + 1; j < model.spheres.size(); ++j) {
            const int li = model.spheres[i].link;
            const int lj = model.spheres[j].link;
            if (li == lj) continue;
            // Skip directly connected links.
            if (model.joints[static_cast<std::size_t>(li)].parent == lj ||
                model.joints[static_cast<std::size_t>(lj)].parent == li)
                continue;
            pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
        }
    }
    return pairs;
}

}  // namespace fsag::kinematics
