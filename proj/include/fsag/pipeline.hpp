#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "fsag/affordance.hpp"
#include "fsag/grounding_eval.hpp"
#include "fsag/scene_gen.hpp"
#include "fsag/scene_lifting.hpp"
#include "fsag/tracker.hpp"
#include "fsag/waypoint_planner.hpp"

namespace fsag::pipeline {

struct PipelineConfig {
    std::uint64_t seed = 1;
    scenegen::SceneSpec scene;
    int label_height = 80;
    int label_width = 160;
    affordance::ActivationShapeSpec activations;
    affordance::TrainConfig train;
    double peak_threshold = 0.1;
    lifting::SelectParams lift;
    planner::PhaseOffsets offsets;
    std::string model_path;
    std::map<std::string, double> q_init;  // joint name -> value; others zero
    tracker::TrackerConfig track;
    std::optional<std::string> load_params_dir;  // skip training when set
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir);

// Annotation lattice rescale (align-corners-false convention).
double rescale_coord(double value, int from_extent, int to_extent);

struct PipelineResult {
    tracker::RolloutResult rollout;
    grounding::EvalReport report;
    lifting::ContactSet contacts_world;
    planner::GraspPlan plan;
};

// Runs render -> labels -> activations -> train (or load) -> decode -> peaks
// -> lift -> plan -> track, writing every intermediate artifact into out_dir.
PipelineResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir);

// Resolve the initial joint vector for a model from a name->value map.
Eigen::VectorXd resolve_q_init(const kinematics::HandModel& model,
                               const std::map<std::string, double>& named);

}  // namespace fsag::pipeline
