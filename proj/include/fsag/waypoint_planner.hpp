#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "fsag/scene_lifting.hpp"

namespace fsag::planner {

enum class Phase { approach = 0, closure = 1, hold = 2 };

const char* phase_name(Phase phase);
Phase phase_from_name(const std::string& name);

// Signed offsets along the per-finger approach line: approach outside,
// closure just outside, hold slightly beneath the surface (preload).
struct PhaseOffsets {
    double s_app = 0.04;
    double s_clo = 0.005;
    double s_hold = -0.003;
};

// gamma_k(s) = c_k + s * n_k; the normal must be unit length.
Eigen::Vector3d approach_point(const Eigen::Vector3d& contact, const Eigen::Vector3d& normal,
                               double s);

struct GraspPlan {
    struct Target {
        int finger_id;
        Eigen::Vector3d position;
    };
    struct Anchor {
        Phase phase;
        double s;
        std::vector<Target> targets;  // ascending finger_id
    };
    std::array<Anchor, 3> phases;  // approach, closure, hold
    Eigen::Vector3d hand_waypoint = Eigen::Vector3d::Zero();
    std::vector<int> fingers_used;

    const Anchor& anchor(Phase phase) const {
        return phases[static_cast<std::size_t>(phase)];
    }
    const Eigen::Vector3d* target(Phase phase, int finger_id) const;
};

// Builds the three phase anchors from valid contacts. Requires at least two
// valid contacts including the thumb (finger 0). The hand waypoint is the
// barycentric mean of the approach-phase targets.
GraspPlan build_plan(const lifting::ContactSet& contacts, const PhaseOffsets& offsets = {});

nlohmann::json plan_to_json(const GraspPlan& plan);
GraspPlan plan_from_json(const nlohmann::json& j);

}  // namespace fsag::planner
