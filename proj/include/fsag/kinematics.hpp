#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <json.hpp>

#include "fsag/error.hpp"

namespace fsag::kinematics {

enum class JointType { revolute, prismatic, fixed };

struct Joint {
    std::string name;
    JointType type = JointType::fixed;
    int parent = -1;  // index into joints, -1 = base link
    Eigen::Isometry3d origin = Eigen::Isometry3d::Identity();
    Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
    double lower = 0.0;
    double upper = 0.0;
    int q_index = -1;  // -1 for fixed joints
};

struct FingertipFrame {
    std::string name;
    int link = -1;  // joint index whose child link carries the pad
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();
};

struct CollisionSphere {
    int link = -1;
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    double radius = 0.0;
};

// Kinematic chain for an arm+hand: tree of revolute/prismatic/fixed joints,
// fingertip frames (thumb..little), a linear underactuation coupling
// e_c = C q - d, collision spheres, and the table half-space z >= table_z.
struct HandModel {
    std::string name;
    std::vector<Joint> joints;
    std::vector<FingertipFrame> fingertips;
    std::optional<FingertipFrame> wrist;
    Eigen::MatrixXd coupling_C;  // m_c x n_q (0x0 when absent)
    Eigen::VectorXd coupling_d;
    std::vector<CollisionSphere> spheres;
    double table_z = -std::numeric_limits<double>::infinity();

    int n_q = 0;
    Eigen::VectorXd q_min, q_max;
    std::vector<int> topo_order;  // parents before children

    int joint_index(const std::string& name) const;
    Eigen::VectorXd clamp(const Eigen::VectorXd& q) const;
};

HandModel parse_model(const nlohmann::json& description);
HandModel parse_model_file(const std::string& path);

struct KinematicState {
    Eigen::VectorXd q;
    std::vector<Eigen::Isometry3d> link_poses;   // per joint, child-link pose
    std::vector<Eigen::Isometry3d> joint_frames; // pose before joint motion
    std::vector<Eigen::Vector3d> fingertips;     // per pad
};

KinematicState forward_kinematics(const HandModel& model, const Eigen::VectorXd& q,
                                  const Eigen::Isometry3d& base = Eigen::Isometry3d::Identity());

// Geometric Jacobian of pad k: 3 x n_q.
Eigen::MatrixXd fingertip_jacobian(const HandModel& model, const KinematicState& state, int pad);

// Position + Jacobian of an arbitrary frame (link + offset).
Eigen::Vector3d frame_position(const HandModel& model, const KinematicState& state,
                               const FingertipFrame& frame);
Eigen::MatrixXd frame_jacobian(const HandModel& model, const KinematicState& state,
                               const FingertipFrame& frame);

// e_c = C q - d with constant Jacobian C.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> coupling_residual(const HandModel& model,
                                                              const Eigen::VectorXd& q);

// World-frame collision sphere centers for a state.
std::vector<Eigen::Vector3d> sphere_centers(const HandModel& model, const KinematicState& state);

// Sphere pairs eligible for self-collision checks (different, non-adjacent links).
std::vector<std::pair<int, int>> collision_pairs(const HandModel& model);

}  // namespace fsag::kinematics
