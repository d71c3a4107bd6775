#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "fsag/kinematics.hpp"
#include "fsag/qp.hpp"
#include "fsag/waypoint_planner.hpp"

namespace fsag::tracker {

struct TrackerConfig {
    std::vector<double> finger_weights = {2.0, 1.0, 1.0, 1.0, 1.0};  // thumb heavier
    double lambda_coup = 10.0;
    double lambda_damp = 1e-3;
    double delta_max = 0.05;   // per-step |dq| cap
    double tau_app = 0.008;
    double tau_clo = 0.003;
    double tau_hold = 0.003;
    std::array<int, 3> budgets = {300, 200, 100};
    double d_safe = 0.003;
    double activation_dist = 0.02;
    double wrist_weight = 0.5;  // hand-waypoint pull, approach phase only
    qp::QpSettings qp{.eps_abs = 1e-10, .eps_rel = 1e-10, .max_iter = 50000};
    std::optional<std::filesystem::path> debug_dump_dir;  // per-step (P,g,A,l,u)
};

TrackerConfig tracker_config_from_json(const nlohmann::json& j);

// Stacked tracking system: finger rows thumb..little (participating fingers
// only), then coupling rows. weights holds one entry per row.
struct ResidualStack {
    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    Eigen::VectorXd weights;
    std::vector<int> fingers;  // participating fingers, ascending
    int coupling_rows = 0;
};

ResidualStack stack_residuals(const kinematics::HandModel& model,
                              const kinematics::KinematicState& state,
                              const planner::GraspPlan& plan, planner::Phase phase,
                              const TrackerConfig& config);

// Linearized sphere-table and sphere-sphere avoidance rows: G dq <= h keeps
// predicted clearance >= d_safe to first order for every pair closer than
// the activation distance.
struct CollisionConstraints {
    Eigen::MatrixXd G;
    Eigen::VectorXd h;
    std::vector<double> clearances;  // current phi per emitted row
};

CollisionConstraints linearize_collisions(const kinematics::HandModel& model,
                                          const kinematics::KinematicState& state,
                                          const TrackerConfig& config);

// Fully assembled step QP (weighted Gauss-Newton with damping, box rows on
// dq, collision rows).
struct StepProblem {
    Eigen::MatrixXd P;
    Eigen::VectorXd g;
    Eigen::VectorXd box_lower, box_upper;
    CollisionConstraints collisions;
    ResidualStack stack;
};

StepProblem assemble_step(const kinematics::HandModel& model,
                          const kinematics::KinematicState& state,
                          const planner::GraspPlan& plan, planner::Phase phase,
                          const TrackerConfig& config);

struct TrajectoryStep {
    int t = 0;
    planner::Phase phase = planner::Phase::approach;
    Eigen::VectorXd q;              // after the step
    std::vector<double> residuals;  // per participating finger, before the step
    double coupling_norm = 0.0;
    Eigen::VectorXd dq;
    qp::QpStatus qp_status = qp::QpStatus::solved;
    int active_collisions = 0;
};

enum class Outcome { success, phase_timeout, qp_failure };

struct RolloutResult {
    Outcome outcome = Outcome::qp_failure;
    planner::Phase timeout_phase = planner::Phase::approach;  // valid for phase_timeout
    int steps = 0;
    std::vector<double> final_residuals;  // per participating finger
    std::vector<TrajectoryStep> trajectory;
};

struct StepResult {
    Eigen::VectorXd dq;
    qp::QpStatus status = qp::QpStatus::solved;
    int active_collisions = 0;
    bool failed = false;
};

// One Gauss-Newton step from `state`; warm start carried between steps.
StepResult step(const kinematics::HandModel& model, const kinematics::KinematicState& state,
                const planner::GraspPlan& plan, planner::Phase phase, const TrackerConfig& config,
                qp::QpSolver& solver, std::optional<qp::WarmStart>& warm);

RolloutResult rollout(const kinematics::HandModel& model, const Eigen::VectorXd& q_init,
                      const planner::GraspPlan& plan, const TrackerConfig& config);

nlohmann::json step_to_json(const TrajectoryStep& step);
nlohmann::json summary_to_json(const RolloutResult& result);
void write_trajectory(const std::filesystem::path& jsonl_path, const RolloutResult& result);

}  // namespace fsag::tracker
