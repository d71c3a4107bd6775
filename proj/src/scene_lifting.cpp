#include "fsag/scene_lifting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "fsag/error.hpp"
#include "fsag/io.hpp"

namespace fsag::lifting {

CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
    CameraIntrinsics k;
    k.fx = io::require_number(j, "fx", "/intrinsics");
    k.fy = io::require_number(j, "fy", "/intrinsics");
    k.cx = io::require_number(j, "cx", "/intrinsics");
    k.cy = io::require_number(j, "cy", "/intrinsics");
    k.width = io::require_int(j, "width", "/intrinsics");
    k.height = io::require_int(j, "height", "/intrinsics");
    if (k.fx <= 0.0 || k.fy <= 0.0) raise_input("intrinsics: focal lengths must be positive");
    if (k.cx < 0.0 || k.cx > k.width || k.cy < 0.0 || k.cy > k.height)
        raise_input("intrinsics: principal point outside image");
    return k;
}

nlohmann::json intrinsics_to_json(const CameraIntrinsics& k) {
    return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx},
            {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

const Contact* ContactSet::find(int finger_id) const {
    for (const auto& c : contacts)
        if (c.finger_id == finger_id) return &c;
    return nullptr;
}

int ContactSet::valid_count() const {
    int n = 0;
    for (const auto& c : contacts) n += c.valid ? 1 : 0;
    return n;
}

PointCloud back_project(const Tensor& depth, const Tensor& mask, const CameraIntrinsics& K) {
    if (depth.rank() != 2 || mask.rank() != 2) raise_input("depth and mask must be rank-2");
    if (!depth.same_dims(mask)) raise_input("depth/mask dims mismatch");
    if (depth.dim(0) != K.height || depth.dim(1) != K.width)
        raise_input("depth dims do not match intrinsics");

    PointCloud cloud;
    for (int r = 0; r < K.height; ++r) {
        for (int c = 0; c < K.width; ++c) {
            if (mask.at(r, c) < 0.5f) continue;
            const double d = depth.at(r, c);
            if (d < 0.0 || !std::isfinite(d)) raise_input("negative or non-finite depth");
            if (d == 0.0) continue;  // invalid depth

            cloud.points.emplace_back((c - K.cx) * d / K.fx, (r - K.cy) * d / K.fy, d);
            cloud.pixels.emplace_back(r, c);
        }
    }
    return cloud;
}

std::vector<std::pair<double, double>> project(const PointCloud& cloud,
                                               const CameraIntrinsics& K) {
    std::vector<std::pair<double, double>> out;
    out.reserve(cloud.size());
    for (const auto& p : cloud.points) {
        if (p.z() <= 0.0) raise_input("project: point with non-positive depth");
        out.emplace_back(K.fy * p.y() / p.z() + K.cy, K.fx * p.x() / p.z() + K.cx);
    }
    return out;
}

std::optional<Eigen::Vector3d> estimate_normal(const PointCloud& cloud,
                                               const Eigen::Vector3d& center, double radius) {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    std::vector<const Eigen::Vector3d*> neighbors;
    const double r2 = radius * radius;
    for (const auto& p : cloud.points) {
        if ((p - center).squaredNorm() <= r2) {
            neighbors.push_back(&p);
            mean += p;
        }
    }
    if (neighbors.size() < 3) return std::nullopt;
    mean /= static_cast<double>(neighbors.size());

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto* p : neighbors) {
        const Eigen::Vector3d d = *p - mean;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(neighbors.size());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
    // Rank < 2 (collinear neighborhood): the two smallest eigenvalues vanish.
    if (evals(1) <= 1e-12 * std::max(evals(2), 1e-300)) return std::nullopt;

    Eigen::Vector3d normal = eig.eigenvectors().col(0).normalized();
    // Orient toward the sensor: n . (origin - center) > 0.
    if (normal.dot(-center) < 0.0) normal = -normal;
    return normal;
}

ContactSet select_contacts(const std::vector<affordance::Peak>& peaks, const PointCloud& cloud,
                           const CameraIntrinsics& K, const SelectParams& params) {
    if (cloud.size() == 0) raise_input("select_contacts: empty point cloud");
    if (params.neighbors < 1) raise_input("select_contacts: N must be >= 1");
    const auto projected = project(cloud, K);

    ContactSet out;
    for (const auto& peak : peaks) {
        Contact contact;
        contact.finger_id = peak.finger_id;
        const bool degraded = cloud.size() < static_cast<std::size_t>(params.neighbors);
        contact.degraded = degraded;
        const std::size_t n = degraded ? cloud.size() : static_cast<std::size_t>(params.neighbors);

        std::vector<std::pair<double, int>> by_distance(cloud.size());
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const double dr = projected[i].first - peak.row;
            const double dc = projected[i].second - peak.col;
            by_distance[i] = {dr * dr + dc * dc, static_cast<int>(i)};
        }
        std::sort(by_distance.begin(), by_distance.end());

        if (std::sqrt(by_distance[0].first) > params.radius_px) {
            out.contacts.push_back(std::move(contact));  // invalid: nothing nearby
            continue;
        }

        std::vector<double> xs(n), ys(n), zs(n);
        contact.candidates.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const int idx = by_distance[i].second;
            contact.candidates.push_back(idx);
            const auto& p = cloud.points[static_cast<std::size_t>(idx)];
            xs[i] = p.x();
            ys[i] = p.y();
            zs[i] = p.z();
        }
        auto median = [](std::vector<double>& v) {
            std::sort(v.begin(), v.end());
            const std::size_t m = v.size() / 2;
            return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
        };
        contact.position = Eigen::Vector3d(median(xs), median(ys), median(zs));

        auto normal = estimate_normal(cloud, contact.position, params.normal_radius);
        if (!normal) {
            out.contacts.push_back(std::move(contact));  // degenerate neighborhood
            continue;
        }
        contact.normal = *normal;
        contact.valid = true;
        out.contacts.push_back(std::move(contact));
    }
    return out;
}

nlohmann::json contacts_to_json(const ContactSet& contacts) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : contacts.contacts) {
        arr.push_back({{"finger", c.finger_id},
                       {"valid", c.valid},
                       {"degraded", c.degraded},
                       {"position", {c.position.x(), c.position.y(), c.position.z()}},
                       {"normal", {c.normal.x(), c.normal.y(), c.normal.z()}},
                       {"candidates", c.candidates.size()}});
    }
    return {{"contacts", arr}};
}

ContactSet contacts_from_json(const nlohmann::json& j) {
    ContactSet out;
    const auto& arr = io::require_field(j, "contacts", "");
    if (!arr.is_array()) raise_input("expected array at /contacts");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string where = "/contacts/" + std::to_string(i);
        const auto& e = arr[i];
        Contact c;
        c.finger_id = io::require_int(e, "finger", where);
        c.valid = io::require_field(e, "valid", where).get<bool>();
        c.degraded = e.contains("degraded") ? e.at("degraded").get<bool>() : false;
        const auto& pos = io::require_field(e, "position", where);
        const auto& nrm = io::require_field(e, "normal", where);
        if (!pos.is_array() || pos.size() != 3 || !nrm.is_array() || nrm.size() != 3)
            raise_input("expected 3-vectors at " + where);
        for (int k = 0; k < 3; ++k) {
            c.position(k) = pos[static_cast<std::size_t>(k)].get<double>();
            c.normal(k) = nrm[static_cast<std::size_t>(k)].get<double>();
        }
        if (c.valid && std::abs(c.normal.norm() - 1.0) > 1e-6)
            raise_input("non-unit contact normal at " + where);
        out.contacts.push_back(std::move(c));
    }
    return out;
}

}  // namespace fsag::lifting
