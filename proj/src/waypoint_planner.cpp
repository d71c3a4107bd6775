#include "fsag/waypoint_planner.hpp"

#include <algorithm>
#include <cmath>

#include "fsag/error.hpp"
#include "fsag/io.hpp"

namespace fsag::planner {

const char* phase_name(Phase phase) {
    switch (phase) {
        case Phase::approach: return "approach";
        case Phase::closure: return "closure";
        case Phase::hold: return "hold";
    }
    raise(ErrorCode::internal, "unknown phase");
}

Phase phase_from_name(const std::string& name) {
    if (name == "approach") return Phase::approach;
    if (name == "closure") return Phase::closure;
    if (name == "hold") return Phase::hold;
    raise_input("unknown phase name: " + name);
}

Eigen::Vector3d approach_point(const Eigen::Vector3d& contact, const Eigen::Vector3d& normal,
                               double s) {
    if (std::abs(normal.norm() - 1.0) > 1e-6)
        raise_input("approach_point: normal must be unit length");
    return contact + s * normal;
}

const Eigen::Vector3d* GraspPlan::target(Phase phase, int finger_id) const {
    for (const auto& t : anchor(phase).targets)
        if (t.finger_id == finger_id) return &t.position;
    return nullptr;
}

GraspPlan build_plan(const lifting::ContactSet& contacts, const PhaseOffsets& offsets) {
    if (!(offsets.s_app > offsets.s_clo && offsets.s_clo > 0.0 && offsets.s_hold < 0.0))
        raise_input("phase offsets must satisfy s_app > s_clo > 0 > s_hold");

    std::vector<const lifting::Contact*> valid;
    for (const auto& c : contacts.contacts)
        if (c.valid) valid.push_back(&c);
    std::sort(valid.begin(), valid.end(),
              [](const auto* a, const auto* b) { return a->finger_id < b->finger_id; });

    const bool thumb_ok =
        std::any_of(valid.begin(), valid.end(), [](const auto* c) { return c->finger_id == 0; });
    if (valid.size() < 2 || !thumb_ok)
        raise(ErrorCode::planning_failure,
              "planning requires at least two valid contacts including the thumb");

    GraspPlan plan;
    const double s_values[3] = {offsets.s_app, offsets.s_clo, offsets.s_hold};
    for (int p = 0; p < 3; ++p) {
        GraspPlan::Anchor& anchor = plan.phases[static_cast<std::size_t>(p)];
        anchor.phase = static_cast<Phase>(p);
        anchor.s = s_values[p];
        for (const auto* c : valid)
            anchor.targets.push_back(
                {c->finger_id, approach_point(c->position, c->normal, anchor.s)});
    }
    for (const auto* c : valid) plan.fingers_used.push_back(c->finger_id);

    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (const auto& t : plan.anchor(Phase::approach).targets) sum += t.position;
    plan.hand_waypoint = sum / static_cast<double>(plan.fingers_used.size());
    return plan;
}

nlohmann::json plan_to_json(const GraspPlan& plan) {
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& anchor : plan.phases) {
        nlohmann::json targets = nlohmann::json::array();
        for (const auto& t : anchor.targets)
            targets.push_back({{"finger", t.finger_id},
                               {"xyz", {t.position.x(), t.position.y(), t.position.z()}}});
        phases.push_back(
            {{"name", phase_name(anchor.phase)}, {"s", anchor.s}, {"targets", targets}});
    }
    return {{"phases", phases},
            {"hand_waypoint",
             {plan.hand_waypoint.x(), plan.hand_waypoint.y(), plan.hand_waypoint.z()}},
            {"fingers_used", plan.fingers_used}};
}

GraspPlan plan_from_json(const nlohmann::json& j) {
    GraspPlan plan;
    const auto& phases = io::require_field(j, "phases", "/plan");
    if (!phases.is_array() || phases.size() != 3)
        raise_input("plan must contain exactly three phases");
    for (std::size_t p = 0; p < 3; ++p) {
        const std::string where = "/plan/phases/" + std::to_string(p);
        const auto& entry = phases[p];
        GraspPlan::Anchor& anchor = plan.phases[p];
        anchor.phase = phase_from_name(io::require_string(entry, "name", where));
        if (anchor.phase != static_cast<Phase>(p))
            raise_input("plan phases out of order at " + where);
        anchor.s = io::require_number(entry, "s", where);
        const auto& targets = io::require_field(entry, "targets", where);
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const auto& t = targets[i];
            const std::string twhere = where + "/targets/" + std::to_string(i);
            GraspPlan::Target target;
            target.finger_id = io::require_int(t, "finger", twhere);
            const auto& xyz = io::require_field(t, "xyz", twhere);
            if (!xyz.is_array() || xyz.size() != 3) raise_input("expected 3-vector at " + twhere);
            for (int a = 0; a < 3; ++a)
                target.position(a) = xyz[static_cast<std::size_t>(a)].get<double>();
            anchor.targets.push_back(target);
        }
    }
    const auto& hw = io::require_field(j, "hand_waypoint", "/plan");
    for (int a = 0; a < 3; ++a) plan.hand_waypoint(a) = hw[static_cast<std::size_t>(a)].get<double>();
    const auto& used = io::require_field(j, "fingers_used", "/plan");
    for (const auto& f : used) plan.fingers_used.push_back(f.get<int>());

    // Phase ordering sanity on the offsets.
    if (!(plan.phases[0].s > plan.phases[1].s && plan.phases[1].s > 0.0 && plan.phases[2].s < 0.0))
        raise_input("plan offsets must satisfy s_app > s_clo > 0 > s_hold");
    return plan;
}

}  // namespace fsag::planner
