#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <json.hpp>

#include "fsag/affordance.hpp"
#include "fsag/scene_lifting.hpp"
#include "fsag/tensor.hpp"

namespace fsag::scenegen {

enum class Primitive { cylinder, sphere, box, capsule };

// Synthetic tabletop scene: one analytic primitive posed in a world frame
// with z up and the table at z = 0, observed by a posed pinhole camera.
struct SceneSpec {
    Primitive primitive = Primitive::cylinder;
    Eigen::Vector3d dims = Eigen::Vector3d::Zero();  // see primitive docs below
    Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
    Eigen::Isometry3d camera_pose = Eigen::Isometry3d::Identity();  // camera-to-world
    lifting::CameraIntrinsics intrinsics;
    double noise_sigma = 0.0;  // depth noise (m)
    std::uint64_t seed = 0;
};
// dims: sphere (r,-,-); cylinder (r, height,-); capsule (r, segment height,-);
// box half-extents (hx, hy, hz). Cylinder/capsule axis and box frame follow
// the object pose, primitives centered at the pose origin.

struct RenderResult {
    Tensor depth;  // [h,w] z-depth in meters, 0 where no hit
    Tensor mask;   // [h,w] in {0,1}
    lifting::CameraIntrinsics intrinsics;
    lifting::PointCloud gt_cloud;              // camera frame, noiseless
    std::vector<Eigen::Vector3d> gt_normals;   // camera frame, per cloud point
};

RenderResult render_scene(const SceneSpec& spec);

struct GraspTemplate {
    std::vector<affordance::FingerAnnotation> annotations;  // image lattice
    std::vector<Eigen::Vector3d> contacts_world;            // matching 3D points
};

// Canned power-grasp template around the primitive's principal axis: thumb on
// the camera-near side, the four fingers fanned on the far side.
GraspTemplate annotate_grasp(const SceneSpec& spec);

SceneSpec scene_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const SceneSpec& spec);

// Rigid transform (de)serialization shared by scene and model files.
nlohmann::json isometry_to_json(const Eigen::Isometry3d& T);
Eigen::Isometry3d isometry_from_json(const nlohmann::json& j, const std::string& where);

// Camera orientation from position + look-at (world up = +z; falls back to
// +x as image-right when looking straight down).
Eigen::Isometry3d look_at_camera(const Eigen::Vector3d& position, const Eigen::Vector3d& target);

}  // namespace fsag::scenegen
