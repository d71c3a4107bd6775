#include "fsag/scene_gen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "fsag/error.hpp"
#include "fsag/io.hpp"
#include "fsag/rng.hpp"

namespace fsag::scenegen {

namespace {

struct Hit {
    double t;
    Eigen::Vector3d normal_local;
};

std::optional<Hit> intersect_sphere(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double r) {
    const double b = o.dot(d);
    const double c = o.squaredNorm() - r * r;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= 1e-9) t = -b + sq;
    if (t <= 1e-9) return std::nullopt;
    return Hit{t, (o + t * d).normalized()};
}

std::optional<Hit> intersect_cylinder(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double r,
                                      double half_h) {
    std::optional<Hit> best;
    auto consider = [&](double t, const Eigen::Vector3d& n) {
        if (t > 1e-9 && (!best || t < best->t)) best = Hit{t, n};
    };
    // Side surface.
    const double a = d.x() * d.x() + d.y() * d.y();
    if (a > 1e-15) {
        const double b = (o.x() * d.x() + o.y() * d.y()) / a;
        const double c = (o.x() * o.x() + o.y() * o.y() - r * r) / a;
        const double disc = b * b - c;
        if (disc >= 0.0) {
            for (double t : {-b - std::sqrt(disc), -b + std::sqrt(disc)}) {
                const Eigen::Vector3d p = o + t * d;
                if (std::abs(p.z()) <= half_h)
                    consider(t, Eigen::Vector3d(p.x(), p.y(), 0).normalized());
            }
        }
    }
    // Caps.
    if (std::abs(d.z()) > 1e-15) {
        for (double zc : {half_h, -half_h}) {
            const double t = (zc - o.z()) / d.z();
            const Eigen::Vector3d p = o + t * d;
            if (p.x() * p.x() + p.y() * p.y() <= r * r)
                consider(t, Eigen::Vector3d(0, 0, zc > 0 ? 1.0 : -1.0));
        }
    }
    return best;
}

std::optional<Hit> intersect_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                 const Eigen::Vector3d& h) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    int near_axis = -1;
    double near_sign = 1.0;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d(a)) < 1e-15) {
            if (std::abs(o(a)) > h(a)) return std::nullopt;
            continue;
        }
        double t1 = (-h(a) - o(a)) / d(a);
        double t2 = (h(a) - o(a)) / d(a);
        double sign = -1.0;
        if (t1 > t2) {
            std::swap(t1, t2);
            sign = 1.0;
        }
        if (t1 > t_near) {
            t_near = t1;
            near_axis = a;
            near_sign = sign;
        }
        t_far = std::min(t_far, t2);
        if (t_near > t_far) return std::nullopt;
    }
    if (t_near <= 1e-9 || near_axis < 0) return std::nullopt;
    Eigen::Vector3d n = Eigen::Vector3d::Zero();
    n(near_axis) = near_sign;
    return Hit{t_near, n};
}

std::optional<Hit> intersect_capsule(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double r,
                                     double half_h) {
    std::optional<Hit> best;
    auto consider = [&](const std::optional<Hit>& h, const Eigen::Vector3d& offset) {
        if (h && h->t > 1e-9 && (!best || h->t < best->t)) {
            best = h;
            if (offset != Eigen::Vector3d::Zero()) {
                const Eigen::Vector3d p = o + h->t * d;
                best->normal_local = (p - offset).normalized();
            }
        }
    };
    // Cylindrical body without caps.
    const double a = d.x() * d.x() + d.y() * d.y();
    if (a > 1e-15) {
        const double b = (o.x() * d.x() + o.y() * d.y()) / a;
        const double c = (o.x() * o.x() + o.y() * o.y() - r * r) / a;
        const double disc = b * b - c;
        if (disc >= 0.0) {
            for (double t : {-b - std::sqrt(disc), -b + std::sqrt(disc)}) {
                const Eigen::Vector3d p = o + t * d;
                if (std::abs(p.z()) <= half_h && t > 1e-9 && (!best || t < best->t))
                    best = Hit{t, Eigen::Vector3d(p.x(), p.y(), 0).normalized()};
            }
        }
    }
    // Hemispherical ends.
    for (double zc : {half_h, -half_h}) {
        const Eigen::Vector3d center(0, 0, zc);
        auto h = intersect_sphere(o - center, d, r);
        if (h) {
            const Eigen::Vector3d p = o + h->t * d;
            if ((zc > 0 && p.z() >= half_h) || (zc < 0 && p.z() <= -half_h))
                consider(Hit{h->t, h->normal_local}, center);
        }
    }
    return best;
}

std::optional<Hit> intersect(const SceneSpec& spec, const Eigen::Vector3d& o,
                             const Eigen::Vector3d& d) {
    switch (spec.primitive) {
        case Primitive::sphere: return intersect_sphere(o, d, spec.dims(0));
        case Primitive::cylinder:
            return intersect_cylinder(o, d, spec.dims(0), spec.dims(1) / 2.0);
        case Primitive::box: return intersect_box(o, d, spec.dims);
        case Primitive::capsule:
            return intersect_capsule(o, d, spec.dims(0), spec.dims(1) / 2.0);
    }
    raise(ErrorCode::internal, "unknown primitive");
}

double bounding_radius(const SceneSpec& spec) {
    switch (spec.primitive) {
        case Primitive::sphere: return spec.dims(0);
        case Primitive::cylinder:
            return std::hypot(spec.dims(0), spec.dims(1) / 2.0);
        case Primitive::box: return spec.dims.norm();
        case Primitive::capsule: return spec.dims(0) + spec.dims(1) / 2.0;
    }
    raise(ErrorCode::internal, "unknown primitive");
}

void validate_spec(const SceneSpec& spec) {
    if (spec.dims(0) <= 0.0) raise_input("scene: primitive dimensions must be positive");
    if ((spec.primitive == Primitive::cylinder || spec.primitive == Primitive::capsule) &&
        spec.dims(1) <= 0.0)
        raise_input("scene: primitive dimensions must be positive");
    if (spec.primitive == Primitive::box && (spec.dims(1) <= 0.0 || spec.dims(2) <= 0.0))
        raise_input("scene: box half-extents must be positive");
    if (spec.intrinsics.width < 8 || spec.intrinsics.height < 8)
        raise_input("scene: image too small");

    // Frustum containment of the bounding sphere.
    const auto& K = spec.intrinsics;
    const Eigen::Vector3d center_cam =
        spec.camera_pose.inverse() * spec.pose.translation();
    if (center_cam.z() <= 0.0) raise_input("scene: object behind the camera");
    const double r = bounding_radius(spec);
    const double margin_x = K.fx * r / center_cam.z();
    const double margin_y = K.fy * r / center_cam.z();
    const double col = K.fx * center_cam.x() / center_cam.z() + K.cx;
    const double row = K.fy * center_cam.y() / center_cam.z() + K.cy;
    if (col - margin_x < 0 || col + margin_x > K.width || row - margin_y < 0 ||
        row + margin_y > K.height)
        raise_input("scene: object not fully inside the camera frustum");
}

}  // namespace

RenderResult render_scene(const SceneSpec& spec) {
    validate_spec(spec);
    const auto& K = spec.intrinsics;

    RenderResult out;
    out.intrinsics = K;
    out.depth = Tensor({K.height, K.width});
    out.mask = Tensor({K.height, K.width});

    // Object-local ray = M * camera-frame ray.
    const Eigen::Isometry3d M = spec.pose.inverse() * spec.camera_pose;
    const Eigen::Vector3d o_local = M.translation();
    const std::uint64_t noise_seed = hash_tag(spec.seed, "depth_noise");

    for (int r = 0; r < K.height; ++r) {
        for (int c = 0; c < K.width; ++c) {
            Eigen::Vector3d dir_cam((c - K.cx) / K.fx, (r - K.cy) / K.fy, 1.0);
            dir_cam.normalize();
            const Eigen::Vector3d d_local = M.linear() * dir_cam;
            auto hit = intersect(spec, o_local, d_local);
            if (!hit) continue;
            const double depth = hit->t * dir_cam.z();
            out.mask.at(r, c) = 1.0f;

            double noisy = depth;
            if (spec.noise_sigma > 0.0)
                noisy += spec.noise_sigma *
                         counter_normal(noise_seed, static_cast<std::uint64_t>(r) * K.width + c);
            out.depth.at(r, c) = static_cast<float>(std::max(noisy, 1e-6));

            out.gt_cloud.points.push_back(hit->t * dir_cam);
            out.gt_cloud.pixels.emplace_back(r, c);
            Eigen::Vector3d n_cam =
                spec.camera_pose.linear().transpose() * (spec.pose.linear() * hit->normal_local);
            out.gt_normals.push_back(n_cam);
        }
    }
    return out;
}

namespace {

// Azimuths of the five contacts, relative to the camera-near direction:
// thumb on the near side, index opposite, the rest fanned to one side.
constexpr double kFingerFan[4] = {180.0, 152.0, 124.0, 96.0};

Eigen::Vector2d near_direction_xy(const SceneSpec& spec) {
    const Eigen::Vector3d to_cam = spec.camera_pose.translation() - spec.pose.translation();
    Eigen::Vector2d v(to_cam.x(), to_cam.y());
    if (v.norm() < 1e-9) v = Eigen::Vector2d(0.0, -1.0);  // straight-down camera
    return v.normalized();
}

}  // namespace

GraspTemplate annotate_grasp(const SceneSpec& spec) {
    RenderResult render = render_scene(spec);

    // The template requires an upright principal axis.
    const Eigen::Vector3d axis_world = spec.pose.linear().col(2);
    if (spec.primitive != Primitive::sphere && axis_world.dot(Eigen::Vector3d::UnitZ()) < 0.98)
        raise_input("grasp template requires an upright primitive");

    const Eigen::Vector2d near_xy = near_direction_xy(spec);
    const double near_az = std::atan2(near_xy.y(), near_xy.x());
    auto ring_point = [&](double radius, double azimuth_deg,
                          double z_world_offset) -> Eigen::Vector3d {
        const double az = near_az + azimuth_deg * std::numbers::pi / 180.0;
        return spec.pose.translation() +
               Eigen::Vector3d(radius * std::cos(az), radius * std::sin(az), z_world_offset);
    };

    std::vector<Eigen::Vector3d> contacts(5);
    switch (spec.primitive) {
        case Primitive::cylinder: {
            const double r = spec.dims(0), h = spec.dims(1);
            const double inset = std::min(0.0015, 0.1 * r);
            const double top = h / 2.0;
            contacts[0] = ring_point(r - inset, 0.0, top);
            for (int f = 1; f < 5; ++f) contacts[f] = ring_point(r - inset, kFingerFan[f - 1], top);
            break;
        }
        case Primitive::sphere: {
            const double r = spec.dims(0);
            const double polar = 45.0 * std::numbers::pi / 180.0;
            const double ring_r = r * std::sin(polar);
            const double z = r * std::cos(polar);
            contacts[0] = ring_point(ring_r, 0.0, z);
            for (int f = 1; f < 5; ++f) contacts[f] = ring_point(ring_r, kFingerFan[f - 1], z);
            break;
        }
        case Primitive::box: {
            // Ring pattern on the top face, sized to stay inside both edges.
            const Eigen::Vector3d h = spec.dims;
            const double inset = 0.006;
            const double ring_r = std::min(h.x(), h.y()) - inset;
            if (ring_r <= 0.0) raise_input("box too small for the grasp template");
            contacts[0] = ring_point(ring_r, 0.0, h.z());
            for (int f = 1; f < 5; ++f) contacts[f] = ring_point(ring_r, kFingerFan[f - 1], h.z());
            break;
        }
        case Primitive::capsule:
            raise_input("grasp template does not support this primitive/pose combination");
    }

    GraspTemplate out;
    out.contacts_world = contacts;
    const Eigen::Isometry3d cam_inv = spec.camera_pose.inverse();
    for (int f = 0; f < 5; ++f) {
        const Eigen::Vector3d p_cam = cam_inv * contacts[static_cast<std::size_t>(f)];
        if (p_cam.z() <= 0.0) raise(ErrorCode::internal, "template contact behind camera");
        const double row = spec.intrinsics.fy * p_cam.y() / p_cam.z() + spec.intrinsics.cy;
        const double col = spec.intrinsics.fx * p_cam.x() / p_cam.z() + spec.intrinsics.cx;
        const int ri = static_cast<int>(std::lround(row));
        const int ci = static_cast<int>(std::lround(col));
        if (ri < 0 || ri >= spec.intrinsics.height || ci < 0 || ci >= spec.intrinsics.width ||
            render.mask.at(ri, ci) < 0.5f)
            raise(ErrorCode::internal, "template annotation fell outside the rendered mask");
        out.annotations.push_back({f, row, col});
    }
    return out;
}

nlohmann::json isometry_to_json(const Eigen::Isometry3d& T) {
    nlohmann::json rot = nlohmann::json::array();
    for (int r = 0; r < 3; ++r)
        rot.push_back({T.linear()(r, 0), T.linear()(r, 1), T.linear()(r, 2)});
    return {{"position", {T.translation().x(), T.translation().y(), T.translation().z()}},
            {"rotation", rot}};
}

Eigen::Isometry3d isometry_from_json(const nlohmann::json& j, const std::string& where) {
    const auto& pos = io::require_field(j, "position", where);
    const auto& rot = io::require_field(j, "rotation", where);
    if (!pos.is_array() || pos.size() != 3 || !rot.is_array() || rot.size() != 3)
        raise_input("malformed transform at " + where);
    Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
    for (int i = 0; i < 3; ++i) T.translation()(i) = pos[static_cast<std::size_t>(i)].get<double>();
    Eigen::Matrix3d R;
    for (int r = 0; r < 3; ++r) {
        if (!rot[static_cast<std::size_t>(r)].is_array() || rot[static_cast<std::size_t>(r)].size() != 3)
            raise_input("malformed rotation at " + where);
        for (int c = 0; c < 3; ++c)
            R(r, c) = rot[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    }
    if ((R * R.transpose() - Eigen::Matrix3d::Identity()).norm() > 1e-6 ||
        std::abs(R.determinant() - 1.0) > 1e-6)
        raise_input("rotation is not orthonormal at " + where);
    T.linear() = R;
    return T;
}

Eigen::Isometry3d look_at_camera(const Eigen::Vector3d& position, const Eigen::Vector3d& target) {
    const Eigen::Vector3d z = (target - position).normalized();
    Eigen::Vector3d x = z.cross(Eigen::Vector3d::UnitZ());
    if (x.norm() < 1e-9) x = Eigen::Vector3d::UnitX();
    x.normalize();
    const Eigen::Vector3d y = z.cross(x);
    Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
    T.translation() = position;
    Eigen::Matrix3d R;
    R.col(0) = x;
    R.col(1) = y;
    R.col(2) = z;
    T.linear() = R;
    return T;
}

namespace {

Primitive primitive_from_string(const std::string& s) {
    if (s == "cylinder") return Primitive::cylinder;
    if (s == "sphere") return Primitive::sphere;
    if (s == "box") return Primitive::box;
    if (s == "capsule") return Primitive::capsule;
    raise_input("unknown primitive: " + s);
}

std::string primitive_to_string(Primitive p) {
    switch (p) {
        case Primitive::cylinder: return "cylinder";
        case Primitive::sphere: return "sphere";
        case Primitive::box: return "box";
        case Primitive::capsule: return "capsule";
    }
    raise(ErrorCode::internal, "unknown primitive");
}

}  // namespace

SceneSpec scene_from_json(const nlohmann::json& j) {
    SceneSpec spec;
    spec.primitive = primitive_from_string(io::require_string(j, "primitive", "/scene"));
    const auto& dims = io::require_field(j, "dims", "/scene");
    if (!dims.is_array() || dims.empty() || dims.size() > 3)
        raise_input("scene dims must have 1-3 entries");
    for (std::size_t i = 0; i < dims.size(); ++i) spec.dims(static_cast<int>(i)) = dims[i].get<double>();

    if (j.contains("pose")) {
        const auto& pose = j.at("pose");
        if (pose.contains("rotation")) {
            spec.pose = isometry_from_json(pose, "/scene/pose");
        } else {
        const auto& xyz = io::require_field(pose, "xyz", "/scene/pose");
        Eigen::Vector3d t;
        for (int i = 0; i < 3; ++i) t(i) = xyz[static_cast<std::size_t>(i)].get<double>();
        spec.pose.translation() = t;
        if (pose.contains("rpy")) {
            const auto& rpy = pose.at("rpy");
            const double roll = rpy[0].get<double>(), pitch = rpy[1].get<double>(),
                         yaw = rpy[2].get<double>();
            spec.pose.linear() = (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
                                  Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
                                  Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
                                     .toRotationMatrix();
        }
        }
    }

    const auto& cam = io::require_field(j, "camera", "/scene");
    if (cam.contains("rotation")) {
        spec.camera_pose = isometry_from_json(cam, "/scene/camera");
    } else {
        const auto& pos = io::require_field(cam, "position", "/scene/camera");
        const auto& look = io::require_field(cam, "look_at", "/scene/camera");
        Eigen::Vector3d p, l;
        for (int i = 0; i < 3; ++i) {
            p(i) = pos[static_cast<std::size_t>(i)].get<double>();
            l(i) = look[static_cast<std::size_t>(i)].get<double>();
        }
        spec.camera_pose = look_at_camera(p, l);
    }

    const auto& image = io::require_field(j, "image", "/scene");
    spec.intrinsics = lifting::intrinsics_from_json(image);
    if (j.contains("noise_sigma")) spec.noise_sigma = j.at("noise_sigma").get<double>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    return spec;
}

nlohmann::json scene_to_json(const SceneSpec& spec) {
    nlohmann::json dims = nlohmann::json::array();
    const int n_dims = spec.primitive == Primitive::sphere ? 1
                       : spec.primitive == Primitive::box ? 3
                                                          : 2;
    for (int i = 0; i < n_dims; ++i) dims.push_back(spec.dims(i));
    return {{"primitive", primitive_to_string(spec.primitive)},
            {"dims", dims},
            {"pose", isometry_to_json(spec.pose)},
            {"camera", isometry_to_json(spec.camera_pose)},
            {"image", lifting::intrinsics_to_json(spec.intrinsics)},
            {"noise_sigma", spec.noise_sigma},
            {"seed", spec.seed}};
}

}  // namespace fsag::scenegen
