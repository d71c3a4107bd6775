#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "fsag/affordance.hpp"
#include "fsag/error.hpp"
#include "fsag/grounding_eval.hpp"
#include "fsag/io.hpp"
#include "fsag/kinematics.hpp"
#include "fsag/pipeline.hpp"
#include "fsag/render.hpp"
#include "fsag/scene_gen.hpp"
#include "fsag/scene_lifting.hpp"
#include "fsag/tracker.hpp"
#include "fsag/waypoint_planner.hpp"

namespace fs = std::filesystem;
using namespace fsag;
using nlohmann::json;

namespace {

affordance::HeatmapStack read_stack(const fs::path& path) {
    Tensor t = io::read_tensor(path);
    if (t.rank() != 3) raise_input("expected a [K,h,w] stack in " + path.string());
    return affordance::HeatmapStack(std::move(t));
}

std::vector<affordance::Peak> peaks_from_json(const json& j) {
    std::vector<affordance::Peak> peaks;
    for (const auto& p : io::require_field(j, "peaks", "")) {
        peaks.push_back({io::require_int(p, "finger", "/peaks"),
                         io::require_number(p, "row", "/peaks"),
                         io::require_number(p, "col", "/peaks"),
                         static_cast<float>(p.contains("score") ? p.at("score").get<double>() : 1.0)});
    }
    return peaks;
}

// ---- subcommand payloads -------------------------------------------------

void cmd_gen_labels(const std::string& annotations_path, const std::string& out,
                    int lattice_h, int lattice_w) {
    int src_h = 0, src_w = 0;
    auto annotations =
        affordance::annotations_from_json(io::read_json(annotations_path), &src_h, &src_w);
    const int h = lattice_h > 0 ? lattice_h : src_h;
    const int w = lattice_w > 0 ? lattice_w : src_w;
    for (auto& a : annotations) {
        a.row = std::clamp(pipeline::rescale_coord(a.row, src_h, h), 0.0, h - 1.0);
        a.col = std::clamp(pipeline::rescale_coord(a.col, src_w, w), 0.0, w - 1.0);
    }
    io::write_tensor(out, affordance::synthesize_labels(annotations, h, w).channels);
}

void cmd_synth_acts(const std::string& labels_path, const std::string& out_dir,
                    std::uint64_t seed, const std::string& spec_json) {
    affordance::HeatmapStack labels = read_stack(labels_path);
    json spec = io::read_json(spec_json);
    affordance::ActivationShapeSpec shape;
    for (const auto& level : io::require_field(spec, "levels", "/activations"))
        shape.levels.push_back({io::require_int(level, "c", "/levels"),
                                io::require_int(level, "h", "/levels"),
                                io::require_int(level, "w", "/levels")});
    for (const auto& t : io::require_field(spec, "timesteps", "/activations"))
        shape.timesteps.push_back(t.get<int>());
    if (spec.contains("noise_amp")) shape.noise_amp = spec.at("noise_amp").get<double>();
    affordance::save_activations(out_dir,
                                 affordance::generate_synthetic_activations(labels, seed, shape));
}

void cmd_train(const std::string& acts_dir, const std::string& labels_path,
               const std::string& out_dir, affordance::TrainConfig config) {
    affordance::ActivationSet acts = affordance::load_activations(acts_dir);
    affordance::HeatmapStack labels = read_stack(labels_path);
    affordance::TrainResult result = affordance::train_decoder({{acts, labels}}, config);
    affordance::save_params(out_dir, result.aggregator, result.decoder);
    std::vector<std::vector<double>> rows;
    for (const auto& rec : result.history)
        rows.push_back({static_cast<double>(rec.step), rec.loss, rec.lr});
    io::write_csv(fs::path(out_dir) / "loss.csv", {"step", "loss", "lr"}, rows);
}

void cmd_decode(const std::string& acts_dir, const std::string& params_dir,
                const std::string& out) {
    affordance::ActivationSet acts = affordance::load_activations(acts_dir);
    auto [agg, dec] = affordance::load_params(params_dir);
    affordance::AggregateResult a_g = affordance::aggregate(acts, agg);
    io::write_tensor(out, affordance::decode(a_g.map, dec).channels);
}

void cmd_peaks(const std::string& pred_path, const std::string& out, double threshold) {
    affordance::HeatmapStack pred = read_stack(pred_path);
    json arr = json::array();
    for (const auto& p : affordance::extract_peaks(pred, threshold))
        arr.push_back({{"finger", p.finger_id}, {"row", p.row}, {"col", p.col}, {"score", p.score}});
    io::write_json(out, {{"peaks", arr}, {"h", pred.height()}, {"w", pred.width()}});
}

void cmd_eval(const std::vector<std::string>& preds, const std::vector<std::string>& gts,
              const std::vector<std::string>& annotations, const std::string& out_json,
              const std::string& out_csv) {
    if (preds.size() != gts.size() || (!annotations.empty() && annotations.size() != preds.size()))
        raise_input("eval: --pred, --gt (and --annotations) must be given the same number of times");
    if (preds.empty()) raise_input("eval: at least one --pred/--gt pair required");
    std::vector<grounding::EvalSample> samples;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        grounding::EvalSample sample;
        sample.id = fs::path(preds[i]).stem().string() + "_" + std::to_string(i);
        sample.pred = read_stack(preds[i]);
        sample.gt = read_stack(gts[i]);
        if (!annotations.empty()) {
            int h = 0, w = 0;
            sample.annotations =
                affordance::annotations_from_json(io::read_json(annotations[i]), &h, &w);
            if (h != sample.gt.height() || w != sample.gt.width())
                raise_input("eval: annotation lattice does not match the ground-truth stack");
        }
        samples.push_back(std::move(sample));
    }
    grounding::EvalReport report = grounding::evaluate_set(samples);
    io::write_json(out_json, grounding::report_to_json(report));
    if (!out_csv.empty())
        io::write_csv(out_csv, {"sample", "kld", "sim", "nss"},
                      grounding::report_to_csv_rows(report));
}

void cmd_render_scene(const std::string& scene_path, const std::string& out_dir,
                      std::optional<std::uint64_t> seed) {
    scenegen::SceneSpec spec = scenegen::scene_from_json(io::read_json(scene_path));
    if (seed) spec.seed = *seed;
    scenegen::RenderResult r = scenegen::render_scene(spec);
    fs::create_directories(out_dir);
    io::write_tensor(fs::path(out_dir) / "depth.tns", r.depth);
    io::write_tensor(fs::path(out_dir) / "mask.tns", r.mask);
    io::write_json(fs::path(out_dir) / "intrinsics.json",
                   lifting::intrinsics_to_json(spec.intrinsics));
    io::write_json(fs::path(out_dir) / "scene.json", scenegen::scene_to_json(spec));
    io::PlyCloud gt;
    for (std::size_t i = 0; i < r.gt_cloud.size(); ++i) {
        gt.points.push_back({r.gt_cloud.points[i].x(), r.gt_cloud.points[i].y(),
                             r.gt_cloud.points[i].z()});
        gt.normals.push_back({r.gt_normals[i].x(), r.gt_normals[i].y(), r.gt_normals[i].z()});
    }
    io::write_ply(fs::path(out_dir) / "gt_cloud.ply", gt);
}

void cmd_annotate(const std::string& scene_path, const std::string& out) {
    scenegen::SceneSpec spec = scenegen::scene_from_json(io::read_json(scene_path));
    scenegen::GraspTemplate tmpl = scenegen::annotate_grasp(spec);
    io::write_json(out, affordance::annotations_to_json(tmpl.annotations, spec.intrinsics.height,
                                                        spec.intrinsics.width));
}

void cmd_lift(const std::string& depth_path, const std::string& mask_path,
              const std::string& intrinsics_path, const std::string& peaks_path,
              const std::string& scene_path, const std::string& out_json,
              const std::string& out_ply, lifting::SelectParams params) {
    Tensor depth = io::read_tensor(depth_path);
    Tensor mask = io::read_tensor(mask_path);
    lifting::CameraIntrinsics K = lifting::intrinsics_from_json(io::read_json(intrinsics_path));
    auto peaks = peaks_from_json(io::read_json(peaks_path));
    lifting::PointCloud cloud = lifting::back_project(depth, mask, K);
    lifting::ContactSet contacts = lifting::select_contacts(peaks, cloud, K, params);

    std::string frame = "camera";
    if (!scene_path.empty()) {
        // Express contacts in the world frame using the scene's camera pose.
        json scene = io::read_json(scene_path);
        Eigen::Isometry3d cam = scenegen::isometry_from_json(
            io::require_field(scene, "camera", "/scene"), "/scene/camera");
        for (auto& c : contacts.contacts) {
            c.position = cam * c.position;
            c.normal = cam.linear() * c.normal;
        }
        frame = "world";
    }
    json out = lifting::contacts_to_json(contacts);
    out["frame"] = frame;
    io::write_json(out_json, out);
    if (!out_ply.empty()) {
        io::PlyCloud ply;
        for (const auto& c : contacts.contacts) {
            if (!c.valid) continue;
            ply.points.push_back({c.position.x(), c.position.y(), c.position.z()});
            ply.normals.push_back({c.normal.x(), c.normal.y(), c.normal.z()});
        }
        io::write_ply(out_ply, ply);
    }
}

void cmd_plan(const std::string& contacts_path, const std::string& out,
              planner::PhaseOffsets offsets) {
    lifting::ContactSet contacts = lifting::contacts_from_json(io::read_json(contacts_path));
    io::write_json(out, planner::plan_to_json(planner::build_plan(contacts, offsets)));
}

void cmd_track(const std::string& model_path, const std::string& plan_path,
               const std::string& config_path, const std::string& out_dir,
               const std::string& dump_dir) {
    kinematics::HandModel model = kinematics::parse_model_file(model_path);
    planner::GraspPlan plan = planner::plan_from_json(io::read_json(plan_path));
    tracker::TrackerConfig config;
    std::map<std::string, double> q_init_map;
    if (!config_path.empty()) {
        json j = io::read_json(config_path);
        config = j.contains("config") ? tracker::tracker_config_from_json(j.at("config"))
                                      : tracker::tracker_config_from_json(j);
        if (j.contains("q_init"))
            for (const auto& [name, value] : j.at("q_init").items())
                q_init_map[name] = value.get<double>();
    }
    if (!dump_dir.empty()) config.debug_dump_dir = dump_dir;
    const Eigen::VectorXd q_init = pipeline::resolve_q_init(model, q_init_map);
    tracker::RolloutResult result = tracker::rollout(model, q_init, plan, config);
    fs::create_directories(out_dir);
    tracker::write_trajectory(fs::path(out_dir) / "trajectory.jsonl", result);
    io::write_json(fs::path(out_dir) / "summary.json", tracker::summary_to_json(result));
    render::write_trajectory_svg(fs::path(out_dir) / "trajectory.svg", result);
    if (result.outcome != tracker::Outcome::success)
        throw Error(ErrorCode::tracking_failure,
                    "rollout ended with " +
                        tracker::summary_to_json(result)["outcome"].get<std::string>());
}

void cmd_pipeline(const std::string& config_path, const std::string& out_dir,
                  const std::string& model_override, std::optional<std::uint64_t> seed) {
    pipeline::PipelineConfig config = pipeline::pipeline_config_from_json(
        io::read_json(config_path), fs::path(config_path).parent_path());
    if (!model_override.empty()) config.model_path = model_override;
    if (seed) {
        config.seed = *seed;
        config.scene.seed = *seed;
        config.train.seed = *seed;
    }
    pipeline::PipelineResult result = pipeline::run_pipeline(config, out_dir);
    std::cout << tracker::summary_to_json(result.rollout).dump() << "\n";
    if (result.rollout.outcome != tracker::Outcome::success)
        throw Error(ErrorCode::tracking_failure,
                    "pipeline rollout ended with " +
                        tracker::summary_to_json(result.rollout)["outcome"].get<std::string>());
}

void cmd_render_overlay(const std::string& stack_path, const std::string& depth_path,
                        const std::string& out) {
    render::write_overlay_ppm(out, io::read_tensor(depth_path), read_stack(stack_path));
}

void cmd_plot_traj(const std::string& jsonl_path, const std::string& out) {
    std::ifstream in(jsonl_path);
    if (!in) raise_input("cannot open trajectory: " + jsonl_path);
    tracker::RolloutResult result;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) raise_input("invalid JSONL in " + jsonl_path);
        tracker::TrajectoryStep step;
        step.t = io::require_int(j, "t", "/step");
        step.phase = planner::phase_from_name(io::require_string(j, "phase", "/step"));
        const auto& q = io::require_field(j, "q", "/step");
        step.q.resize(static_cast<Eigen::Index>(q.size()));
        for (std::size_t i = 0; i < q.size(); ++i)
            step.q(static_cast<Eigen::Index>(i)) = q[i].get<double>();
        const auto& dq = io::require_field(j, "dq", "/step");
        step.dq.resize(static_cast<Eigen::Index>(dq.size()));
        for (std::size_t i = 0; i < dq.size(); ++i)
            step.dq(static_cast<Eigen::Index>(i)) = dq[i].get<double>();
        for (const auto& r : io::require_field(j, "residuals", "/step"))
            step.residuals.push_back(r.get<double>());
        result.trajectory.push_back(std::move(step));
    }
    result.steps = static_cast<int>(result.trajectory.size());
    render::write_trajectory_svg(out, result);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"finger-specific affordance grasping pipeline"};
    app.require_subcommand(1);

    std::string annotations_path, labels_path, acts_dir, params_dir, pred_path, out_path;
    std::string out_dir, scene_path, depth_path, mask_path, intrinsics_path, peaks_path;
    std::string contacts_path, model_path, plan_path, config_path, out_csv, out_ply, dump_dir;
    std::string model_override, stack_path, jsonl_path;
    std::vector<std::string> eval_preds, eval_gts, eval_annotations;
    int lattice_h = 0, lattice_w = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double threshold = 0.1;
    affordance::TrainConfig train_config;
    lifting::SelectParams lift_params;
    planner::PhaseOffsets offsets;

    auto add_seed = [&](CLI::App* cmd) {
        auto* opt = cmd->add_option("--seed", seed, "override the random seed");
        opt->each([&seed_set](const std::string&) { seed_set = true; });
    };

    auto* gen_labels = app.add_subcommand("gen-labels", "annotation JSON -> Gaussian label stack");
    gen_labels->add_option("--annotations", annotations_path)->required();
    gen_labels->add_option("--out", out_path)->required();
    gen_labels->add_option("--lattice-h", lattice_h, "target lattice height (default: source)");
    gen_labels->add_option("--lattice-w", lattice_w, "target lattice width");

    auto* synth = app.add_subcommand("synth-acts", "labels -> synthetic activation set");
    synth->add_option("--labels", labels_path)->required();
    synth->add_option("--spec", config_path, "activation shape spec JSON")->required();
    synth->add_option("--out", out_dir)->required();
    add_seed(synth);

    auto* train = app.add_subcommand("train", "train aggregator + decoder");
    train->add_option("--acts", acts_dir)->required();
    train->add_option("--labels", labels_path)->required();
    train->add_option("--out", out_dir)->required();
    train->add_option("--steps", train_config.steps);
    train->add_option("--lr", train_config.lr);
    train->add_option("--batch", train_config.batch);
    train->add_option("--width-factor", train_config.width_factor);
    train->add_option("--descriptor-channels", train_config.descriptor_channels);
    add_seed(train);

    auto* decode = app.add_subcommand("decode", "activations + params -> heatmap stack");
    decode->add_option("--acts", acts_dir)->required();
    decode->add_option("--params", params_dir)->required();
    decode->add_option("--out", out_path)->required();

    auto* peaks = app.add_subcommand("peaks", "heatmap stack -> peak list");
    peaks->add_option("--pred", pred_path)->required();
    peaks->add_option("--out", out_path)->required();
    peaks->add_option("--threshold", threshold);

    auto* eval = app.add_subcommand("eval", "prediction vs ground truth metrics");
    eval->add_option("--pred", eval_preds)->required();
    eval->add_option("--gt", eval_gts)->required();
    eval->add_option("--annotations", eval_annotations);
    eval->add_option("--out", out_path)->required();
    eval->add_option("--csv", out_csv);

    auto* render_scene = app.add_subcommand("render-scene", "scene config -> depth/mask/cloud");
    render_scene->add_option("--scene", scene_path)->required();
    render_scene->add_option("--out", out_dir)->required();
    add_seed(render_scene);

    auto* annotate = app.add_subcommand("annotate", "scene config -> grasp annotations");
    annotate->add_option("--scene", scene_path)->required();
    annotate->add_option("--out", out_path)->required();

    auto* lift = app.add_subcommand("lift", "depth+mask+peaks -> 3D contacts");
    lift->add_option("--depth", depth_path)->required();
    lift->add_option("--mask", mask_path)->required();
    lift->add_option("--intrinsics", intrinsics_path)->required();
    lift->add_option("--peaks", peaks_path)->required();
    lift->add_option("--scene", scene_path, "scene JSON; expresses contacts in the world frame");
    lift->add_option("--out", out_path)->required();
    lift->add_option("--ply", out_ply);
    lift->add_option("--neighbors", lift_params.neighbors);
    lift->add_option("--radius-px", lift_params.radius_px);
    lift->add_option("--normal-radius", lift_params.normal_radius);

    auto* plan = app.add_subcommand("plan", "contacts -> phase waypoints");
    plan->add_option("--contacts", contacts_path)->required();
    plan->add_option("--out", out_path)->required();
    plan->add_option("--s-app", offsets.s_app);
    plan->add_option("--s-clo", offsets.s_clo);
    plan->add_option("--s-hold", offsets.s_hold);

    auto* track = app.add_subcommand("track", "model + plan -> trajectory");
    track->add_option("--model", model_path)->required();
    track->add_option("--plan", plan_path)->required();
    track->add_option("--config", config_path, "tracker config JSON (config + q_init)");
    track->add_option("--out", out_dir)->required();
    track->add_option("--dump-qp", dump_dir, "dump per-step (P,g,A,l,u) tensors here");

    auto* pipe = app.add_subcommand("pipeline", "end-to-end run from one config");
    pipe->add_option("--config", config_path)->required();
    pipe->add_option("--out", out_dir)->required();
    pipe->add_option("--model", model_override, "override the hand model path");
    add_seed(pipe);

    auto* overlay = app.add_subcommand("render-overlay", "heatmaps over depth -> PPM");
    overlay->add_option("--stack", stack_path)->required();
    overlay->add_option("--depth", depth_path)->required();
    overlay->add_option("--out", out_path)->required();

    auto* plot = app.add_subcommand("plot-traj", "trajectory JSONL -> SVG");
    plot->add_option("--trajectory", jsonl_path)->required();
    plot->add_option("--out", out_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_labels->parsed()) cmd_gen_labels(annotations_path, out_path, lattice_h, lattice_w);
        if (synth->parsed()) cmd_synth_acts(labels_path, out_dir, seed_set ? seed : 0, config_path);
        if (train->parsed()) {
            if (seed_set) train_config.seed = seed;
            cmd_train(acts_dir, labels_path, out_dir, train_config);
        }
        if (decode->parsed()) cmd_decode(acts_dir, params_dir, out_path);
        if (peaks->parsed()) cmd_peaks(pred_path, out_path, threshold);
        if (eval->parsed()) cmd_eval(eval_preds, eval_gts, eval_annotations, out_path, out_csv);
        if (render_scene->parsed())
            cmd_render_scene(scene_path, out_dir,
                             seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt);
        if (annotate->parsed()) cmd_annotate(scene_path, out_path);
        if (lift->parsed())
            cmd_lift(depth_path, mask_path, intrinsics_path, peaks_path, scene_path, out_path,
                     out_ply, lift_params);
        if (plan->parsed()) cmd_plan(contacts_path, out_path, offsets);
        if (track->parsed()) cmd_track(model_path, plan_path, config_path, out_dir, dump_dir);
        if (pipe->parsed())
            cmd_pipeline(config_path, out_dir, model_override,
                         seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt);
        if (overlay->parsed()) cmd_render_overlay(stack_path, depth_path, out_path);
        if (plot->parsed()) cmd_plot_traj(jsonl_path, out_path);
    } catch (const Error& e) {
        std::cerr << "E" << e.exit_code() << ": " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "E5: " << e.what() << "\n";
        return 5;
    }
    return 0;
}
