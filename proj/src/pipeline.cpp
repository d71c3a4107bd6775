#include "fsag/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "fsag/error.hpp"
#include "fsag/io.hpp"
#include "fsag/kinematics.hpp"
#include "fsag/render.hpp"

namespace fsag::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

double rescale_coord(double value, int from_extent, int to_extent) {
    return (value + 0.5) * static_cast<double>(to_extent) / from_extent - 0.5;
}

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
    PipelineConfig config;
    if (j.contains("seed")) config.seed = j.at("seed").get<std::uint64_t>();
    config.scene = scenegen::scene_from_json(io::require_field(j, "scene", "/pipeline"));
    config.scene.seed = config.seed;

    const json& labels = io::require_field(j, "labels", "/pipeline");
    config.label_height = io::require_int(labels, "h", "/pipeline/labels");
    config.label_width = io::require_int(labels, "w", "/pipeline/labels");

    const json& acts = io::require_field(j, "activations", "/pipeline");
    const json& levels = io::require_field(acts, "levels", "/pipeline/activations");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const std::string where = "/pipeline/activations/levels/" + std::to_string(i);
        config.activations.levels.push_back({io::require_int(levels[i], "c", where),
                                             io::require_int(levels[i], "h", where),
                                             io::require_int(levels[i], "w", where)});
    }
    for (const auto& t : io::require_field(acts, "timesteps", "/pipeline/activations"))
        config.activations.timesteps.push_back(t.get<int>());
    if (acts.contains("noise_amp"))
        config.activations.noise_amp = acts.at("noise_amp").get<double>();

    const json& train = io::require_field(j, "train", "/pipeline");
    config.train.steps = io::require_int(train, "steps", "/pipeline/train");
    if (train.contains("lr")) config.train.lr = train.at("lr").get<double>();
    if (train.contains("batch")) config.train.batch = train.at("batch").get<int>();
    if (train.contains("width_factor"))
        config.train.width_factor = train.at("width_factor").get<double>();
    if (train.contains("descriptor_channels"))
        config.train.descriptor_channels = train.at("descriptor_channels").get<int>();
    config.train.seed = config.seed;

    if (j.contains("peaks") && j.at("peaks").contains("threshold"))
        config.peak_threshold = j.at("peaks").at("threshold").get<double>();
    if (j.contains("lift")) {
        const json& lift = j.at("lift");
        if (lift.contains("neighbors")) config.lift.neighbors = lift.at("neighbors").get<int>();
        if (lift.contains("radius_px")) config.lift.radius_px = lift.at("radius_px").get<double>();
        if (lift.contains("normal_radius"))
            config.lift.normal_radius = lift.at("normal_radius").get<double>();
    }
    if (j.contains("plan")) {
        const json& plan = j.at("plan");
        if (plan.contains("s_app")) config.offsets.s_app = plan.at("s_app").get<double>();
        if (plan.contains("s_clo")) config.offsets.s_clo = plan.at("s_clo").get<double>();
        if (plan.contains("s_hold")) config.offsets.s_hold = plan.at("s_hold").get<double>();
    }

    const json& track = io::require_field(j, "track", "/pipeline");
    config.model_path =
        (base_dir / io::require_string(track, "model", "/pipeline/track")).string();
    if (track.contains("q_init")) {
        for (const auto& [name, value] : track.at("q_init").items())
            config.q_init[name] = value.get<double>();
    }
    config.track = track.contains("config")
                       ? tracker::tracker_config_from_json(track.at("config"))
                       : tracker::TrackerConfig{};
    if (j.contains("load_params"))
        config.load_params_dir = (base_dir / j.at("load_params").get<std::string>()).string();
    return config;
}

Eigen::VectorXd resolve_q_init(const kinematics::HandModel& model,
                               const std::map<std::string, double>& named) {
    Eigen::VectorXd q = Eigen::VectorXd::Zero(model.n_q);
    for (const auto& [name, value] : named) {
        const int idx = model.joint_index(name);
        if (idx < 0) raise_input("q_init references unknown joint: " + name);
        const auto& joint = model.joints[static_cast<std::size_t>(idx)];
        if (joint.q_index < 0) raise_input("q_init references fixed joint: " + name);
        q(joint.q_index) = value;
    }
    return model.clamp(q);
}

PipelineResult run_pipeline(const PipelineConfig& config, const fs::path& out_dir) {
    fs::create_directories(out_dir);

    // Perception inputs: rendered scene, mask, annotations.
    scenegen::RenderResult rendered = scenegen::render_scene(config.scene);
    io::write_tensor(out_dir / "depth.tns", rendered.depth);
    io::write_tensor(out_dir / "mask.tns", rendered.mask);
    io::write_json(out_dir / "scene.json", scenegen::scene_to_json(config.scene));
    io::write_json(out_dir / "intrinsics.json",
                   lifting::intrinsics_to_json(config.scene.intrinsics));
    {
        io::PlyCloud gt;
        for (std::size_t i = 0; i < rendered.gt_cloud.size(); ++i) {
            const auto& p = rendered.gt_cloud.points[i];
            const auto& n = rendered.gt_normals[i];
            gt.points.push_back({p.x(), p.y(), p.z()});
            gt.normals.push_back({n.x(), n.y(), n.z()});
        }
        io::write_ply(out_dir / "gt_cloud.ply", gt);
    }

    scenegen::GraspTemplate tmpl = scenegen::annotate_grasp(config.scene);
    io::write_json(out_dir / "annotations.json",
                   affordance::annotations_to_json(tmpl.annotations, config.scene.intrinsics.height,
                                                   config.scene.intrinsics.width));

    // Labels on the training lattice.
    std::vector<affordance::FingerAnnotation> lattice_annotations;
    for (const auto& a : tmpl.annotations) {
        affordance::FingerAnnotation scaled = a;
        scaled.row = std::clamp(rescale_coord(a.row, config.scene.intrinsics.height,
                                              config.label_height),
                                0.0, config.label_height - 1.0);
        scaled.col = std::clamp(rescale_coord(a.col, config.scene.intrinsics.width,
                                              config.label_width),
                                0.0, config.label_width - 1.0);
        lattice_annotations.push_back(scaled);
    }
    affordance::HeatmapStack labels =
        affordance::synthesize_labels(lattice_annotations, config.label_height, config.label_width);
    io::write_tensor(out_dir / "labels.tns", labels.channels);
    io::write_json(out_dir / "annotations_lattice.json",
                   affordance::annotations_to_json(lattice_annotations, config.label_height,
                                                   config.label_width));

    // Synthetic activations and the decoder.
    affordance::ActivationSet acts =
        affordance::generate_synthetic_activations(labels, config.seed, config.activations);
    affordance::save_activations(out_dir / "activations", acts);

    affordance::AggregatorParams agg;
    affordance::DecoderParams dec;
    if (config.load_params_dir) {
        std::tie(agg, dec) = affordance::load_params(*config.load_params_dir);
    } else {
        affordance::TrainResult trained = affordance::train_decoder({{acts, labels}}, config.train);
        agg = std::move(trained.aggregator);
        dec = std::move(trained.decoder);
        std::vector<std::vector<double>> rows;
        for (const auto& rec : trained.history)
            rows.push_back({static_cast<double>(rec.step), rec.loss, rec.lr});
        io::write_csv(out_dir / "loss.csv", {"step", "loss", "lr"}, rows);
    }
    affordance::save_params(out_dir / "params", agg, dec);

    affordance::AggregateResult a_g = affordance::aggregate(acts, agg);
    affordance::HeatmapStack pred = affordance::decode(a_g.map, dec);
    io::write_tensor(out_dir / "pred.tns", pred.channels);
    render::write_overlay_ppm(out_dir / "overlay.ppm", rendered.depth, pred);

    // Grounding metrics of the prediction against the synthesized labels.
    grounding::EvalSample eval_sample;
    eval_sample.id = "scene";
    eval_sample.pred = pred;
    eval_sample.gt = labels;
    eval_sample.annotations = lattice_annotations;
    PipelineResult result;
    result.report = grounding::evaluate_set({eval_sample});
    io::write_json(out_dir / "report.json", grounding::report_to_json(result.report));
    io::write_csv(out_dir / "report.csv", {"sample", "kld", "sim", "nss"},
                  grounding::report_to_csv_rows(result.report));

    // Peaks on the lattice, exported in image pixel coordinates.
    std::vector<affordance::Peak> peaks = affordance::extract_peaks(pred, config.peak_threshold);
    json peaks_json = json::array();
    std::vector<affordance::Peak> image_peaks;
    for (const auto& p : peaks) {
        affordance::Peak scaled = p;
        scaled.row = rescale_coord(p.row, config.label_height, config.scene.intrinsics.height);
        scaled.col = rescale_coord(p.col, config.label_width, config.scene.intrinsics.width);
        image_peaks.push_back(scaled);
        peaks_json.push_back({{"finger", scaled.finger_id},
                              {"row", scaled.row},
                              {"col", scaled.col},
                              {"score", scaled.score}});
    }
    io::write_json(out_dir / "peaks.json",
                   {{"peaks", peaks_json},
                    {"frame", "image"},
                    {"h", config.scene.intrinsics.height},
                    {"w", config.scene.intrinsics.width}});

    // Lift to 3D contacts.
    lifting::PointCloud cloud =
        lifting::back_project(rendered.depth, rendered.mask, config.scene.intrinsics);
    {
        io::PlyCloud ply;
        for (const auto& p : cloud.points) ply.points.push_back({p.x(), p.y(), p.z()});
        io::write_ply(out_dir / "cloud.ply", ply);
    }
    lifting::ContactSet contacts =
        lifting::select_contacts(image_peaks, cloud, config.scene.intrinsics, config.lift);

    // Contacts to the world frame for planning against the tabletop model.
    result.contacts_world = contacts;
    for (auto& c : result.contacts_world.contacts) {
        c.position = config.scene.camera_pose * c.position;
        c.normal = config.scene.camera_pose.linear() * c.normal;
    }
    json contacts_json = lifting::contacts_to_json(result.contacts_world);
    contacts_json["frame"] = "world";
    io::write_json(out_dir / "contacts.json", contacts_json);
    {
        io::PlyCloud ply;
        for (const auto& c : result.contacts_world.contacts) {
            if (!c.valid) continue;
            ply.points.push_back({c.position.x(), c.position.y(), c.position.z()});
            ply.normals.push_back({c.normal.x(), c.normal.y(), c.normal.z()});
        }
        io::write_ply(out_dir / "contacts.ply", ply);
    }

    result.plan = planner::build_plan(result.contacts_world, config.offsets);
    io::write_json(out_dir / "plan.json", planner::plan_to_json(result.plan));

    // Track.
    kinematics::HandModel model = kinematics::parse_model_file(config.model_path);
    const Eigen::VectorXd q_init = resolve_q_init(model, config.q_init);
    result.rollout = tracker::rollout(model, q_init, result.plan, config.track);
    tracker::write_trajectory(out_dir / "trajectory.jsonl", result.rollout);
    io::write_json(out_dir / "summary.json", tracker::summary_to_json(result.rollout));
    render::write_trajectory_svg(out_dir / "trajectory.svg", result.rollout);
    return result;
}

}  // namespace fsag::pipeline
