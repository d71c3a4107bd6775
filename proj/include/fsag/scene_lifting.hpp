#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "fsag/affordance.hpp"
#include "fsag/tensor.hpp"

namespace fsag::lifting {

struct CameraIntrinsics {
    double fx = 0.0, fy = 0.0;
    double cx = 0.0, cy = 0.0;
    int width = 0, height = 0;
};

CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);
nlohmann::json intrinsics_to_json(const CameraIntrinsics& k);

// Camera-frame point cloud (+z forward), with the source pixel retained for
// each point.
struct PointCloud {
    std::vector<Eigen::Vector3d> points;
    std::vector<std::pair<int, int>> pixels;  // (row, col) of origin, if known

    std::size_t size() const { return points.size(); }
};

// Back-project masked pixels with valid depth (depth 0 marks invalid).
PointCloud back_project(const Tensor& depth, const Tensor& mask, const CameraIntrinsics& K);

// Pinhole projection to sub-pixel (row, col); all z must be positive.
std::vector<std::pair<double, double>> project(const PointCloud& cloud,
                                               const CameraIntrinsics& K);

struct Contact {
    int finger_id = -1;
    bool valid = false;
    bool degraded = false;  // cloud smaller than N
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d normal = Eigen::Vector3d::Zero();
    std::vector<int> candidates;  // indices into the source cloud
};

struct ContactSet {
    std::vector<Contact> contacts;  // one per requested finger, input order

    const Contact* find(int finger_id) const;
    int valid_count() const;
};

struct SelectParams {
    int neighbors = 50;        // N
    double radius_px = 12.0;   // validity radius in the image plane
    double normal_radius = 0.015;
};

// Per finger keypoint: gather the N projected cloud points nearest in the
// image, take the coordinate-wise median as the contact, then fit a local
// tangent plane for the normal (camera-facing orientation).
ContactSet select_contacts(const std::vector<affordance::Peak>& peaks, const PointCloud& cloud,
                           const CameraIntrinsics& K, const SelectParams& params = {});

// Least-variance eigenvector of the neighborhood covariance within `radius`
// of `center`; sign flipped so the normal faces the camera origin.
// Returns nullopt for degenerate neighborhoods (< 3 points or rank < 2).
std::optional<Eigen::Vector3d> estimate_normal(const PointCloud& cloud,
                                               const Eigen::Vector3d& center, double radius);

nlohmann::json contacts_to_json(const ContactSet& contacts);
ContactSet contacts_from_json(const nlohmann::json& j);

}  // namespace fsag::lifting
