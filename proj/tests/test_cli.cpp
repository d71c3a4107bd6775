#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "fsag/io.hpp"

namespace fs = std::filesystem;
using fsag::io::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("fsag_cli_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

int run(const std::string& args) {
    const std::string cmd = std::string(FSAG_CLI_PATH) + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json small_scene() {
    return json::parse(R"({
      "primitive": "cylinder",
      "dims": [0.05, 0.12],
      "pose": {"xyz": [0.0, 0.0, 0.06]},
      "camera": {"position": [0.0, -0.12, 0.42], "look_at": [0.0, 0.0, 0.12]},
      "image": {"fx": 160.0, "fy": 160.0, "cx": 128.0, "cy": 64.0, "width": 256, "height": 128},
      "noise_sigma": 0.0,
      "seed": 5
    })");
}

std::string file_bytes(const fs::path& p) { return fsag::io::read_text(p); }

}  // namespace

TEST_CASE("cli: perception-to-tracking chain from ground-truth labels") {
    TempDir dir;
    const fs::path scene = dir.path / "scene.json";
    fsag::io::write_json(scene, small_scene());

    REQUIRE(run("render-scene --scene " + scene.string() + " --out " + dir.path.string()) == 0);
    CHECK(fs::exists(dir.path / "depth.tns"));
    CHECK(fs::exists(dir.path / "mask.tns"));
    CHECK(fs::exists(dir.path / "intrinsics.json"));
    CHECK(fs::exists(dir.path / "gt_cloud.ply"));

    REQUIRE(run("annotate --scene " + scene.string() + " --out " +
                (dir.path / "ann.json").string()) == 0);
    REQUIRE(run("gen-labels --annotations " + (dir.path / "ann.json").string() + " --out " +
                (dir.path / "labels.tns").string()) == 0);
    REQUIRE(run("peaks --pred " + (dir.path / "labels.tns").string() + " --out " +
                (dir.path / "peaks.json").string() + " --threshold 0.5") == 0);
    json peaks = fsag::io::read_json(dir.path / "peaks.json");
    CHECK(peaks["peaks"].size() == 5);

    REQUIRE(run("lift --depth " + (dir.path / "depth.tns").string() + " --mask " +
                (dir.path / "mask.tns").string() + " --intrinsics " +
                (dir.path / "intrinsics.json").string() + " --peaks " +
                (dir.path / "peaks.json").string() + " --scene " +
                (dir.path / "scene.json").string() + " --out " +
                (dir.path / "contacts.json").string() + " --ply " +
                (dir.path / "contacts.ply").string()) == 0);
    json contacts = fsag::io::read_json(dir.path / "contacts.json");
    CHECK(contacts["frame"] == "world");
    CHECK(contacts["contacts"].size() == 5);

    REQUIRE(run("plan --contacts " + (dir.path / "contacts.json").string() + " --out " +
                (dir.path / "plan.json").string()) == 0);

    // Tracker config with a sane start pose.
    fsag::io::write_json(dir.path / "track.json", json::parse(R"({
      "q_init": {"arm_z": 0.35, "index_mcp": 0.25, "middle_mcp": 0.25,
                 "ring_mcp": 0.25, "little_mcp": 0.25, "thumb_mcp": 0.25, "thumb_ip": 0.15},
      "config": {}
    })"));
    REQUIRE(run("track --model " + std::string(FSAG_DATA_DIR) + "/hands/dexhand021.json" +
                " --plan " + (dir.path / "plan.json").string() + " --config " +
                (dir.path / "track.json").string() + " --out " + dir.path.string()) == 0);
    json summary = fsag::io::read_json(dir.path / "summary.json");
    CHECK(summary["outcome"] == "success");
    CHECK(fs::exists(dir.path / "trajectory.jsonl"));
    CHECK(fs::exists(dir.path / "trajectory.svg"));

    // Overlay + trajectory plot.
    REQUIRE(run("render-overlay --stack " + (dir.path / "labels.tns").string() + " --depth " +
                (dir.path / "depth.tns").string() + " --out " +
                (dir.path / "overlay.ppm").string()) == 0);
    std::string ppm = file_bytes(dir.path / "overlay.ppm");
    CHECK(ppm.substr(0, 2) == "P6");
    REQUIRE(run("plot-traj --trajectory " + (dir.path / "trajectory.jsonl").string() + " --out " +
                (dir.path / "plot.svg").string()) == 0);
    CHECK(file_bytes(dir.path / "plot.svg").find("<svg") != std::string::npos);
}

TEST_CASE("cli: idempotent outputs for identical inputs and seeds") {
    TempDir dir;
    const fs::path scene = dir.path / "scene.json";
    fsag::io::write_json(scene, small_scene());

    REQUIRE(run("render-scene --scene " + scene.string() + " --out " +
                (dir.path / "a").string() + " --seed 9") == 0);
    REQUIRE(run("render-scene --scene " + scene.string() + " --out " +
                (dir.path / "b").string() + " --seed 9") == 0);
    CHECK(file_bytes(dir.path / "a/depth.tns") == file_bytes(dir.path / "b/depth.tns"));
    CHECK(file_bytes(dir.path / "a/mask.tns") == file_bytes(dir.path / "b/mask.tns"));
    CHECK(file_bytes(dir.path / "a/gt_cloud.ply") == file_bytes(dir.path / "b/gt_cloud.ply"));

    REQUIRE(run("annotate --scene " + scene.string() + " --out " +
                (dir.path / "ann.json").string()) == 0);
    REQUIRE(run("gen-labels --annotations " + (dir.path / "ann.json").string() + " --out " +
                (dir.path / "l1.tns").string()) == 0);
    REQUIRE(run("gen-labels --annotations " + (dir.path / "ann.json").string() + " --out " +
                (dir.path / "l2.tns").string()) == 0);
    CHECK(file_bytes(dir.path / "l1.tns") == file_bytes(dir.path / "l2.tns"));
}

TEST_CASE("cli: eval with pred == gt reports SIM 1") {
    TempDir dir;
    const fs::path scene = dir.path / "scene.json";
    fsag::io::write_json(scene, small_scene());
    REQUIRE(run("annotate --scene " + scene.string() + " --out " +
                (dir.path / "ann.json").string()) == 0);
    REQUIRE(run("gen-labels --annotations " + (dir.path / "ann.json").string() + " --out " +
                (dir.path / "gt.tns").string()) == 0);
    REQUIRE(run("eval --pred " + (dir.path / "gt.tns").string() + " --gt " +
                (dir.path / "gt.tns").string() + " --annotations " +
                (dir.path / "ann.json").string() + " --out " + (dir.path / "report.json").string() +
                " --csv " + (dir.path / "report.csv").string()) == 0);
    json report = fsag::io::read_json(dir.path / "report.json");
    CHECK(report["mean"]["sim"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(report["mean"]["kld"].get<double>() <= 1e-9);
    CHECK(fs::exists(dir.path / "report.csv"));
}

TEST_CASE("cli: machine-parsable errors and exit codes") {
    TempDir dir;
    // Missing input file -> bad input, code 2.
    CHECK(run("gen-labels --annotations " + (dir.path / "missing.json").string() + " --out " +
              (dir.path / "x.tns").string()) == 2);

    // Planning failure -> code 3 (single valid contact).
    fsag::io::write_json(dir.path / "contacts.json", json::parse(R"({
      "contacts": [
        {"finger": 0, "valid": true, "degraded": false,
         "position": [0, 0, 0.5], "normal": [0, 0, 1], "candidates": 3},
        {"finger": 1, "valid": false, "degraded": false,
         "position": [0, 0, 0], "normal": [0, 0, 0], "candidates": 0}
      ]
    })"));
    CHECK(run("plan --contacts " + (dir.path / "contacts.json").string() + " --out " +
              (dir.path / "plan.json").string()) == 3);

    // Tracking failure -> code 4 (unreachable plan).
    fsag::io::write_json(dir.path / "far_contacts.json", json::parse(R"({
      "contacts": [
        {"finger": 0, "valid": true, "degraded": false,
         "position": [4.0, 0, 0.5], "normal": [0, 0, 1], "candidates": 3},
        {"finger": 1, "valid": true, "degraded": false,
         "position": [4.1, 0, 0.5], "normal": [0, 0, 1], "candidates": 3}
      ]
    })"));
    REQUIRE(run("plan --contacts " + (dir.path / "far_contacts.json").string() + " --out " +
                (dir.path / "far_plan.json").string()) == 0);
    fsag::io::write_json(dir.path / "fast.json", json::parse(R"({
      "q_init": {"arm_z": 0.35},
      "config": {"budgets": [15, 10, 10]}
    })"));
    CHECK(run("track --model " + std::string(FSAG_DATA_DIR) + "/hands/dexhand021.json" +
              " --plan " + (dir.path / "far_plan.json").string() + " --config " +
              (dir.path / "fast.json").string() + " --out " + dir.path.string()) == 4);

    // The error line is "E<code>: message" on stderr.
    const std::string cmd = std::string(FSAG_CLI_PATH) + " plan --contacts " +
                            (dir.path / "contacts.json").string() + " --out /dev/null 2>" +
                            (dir.path / "err.txt").string();
    std::system(cmd.c_str());
    const std::string err = file_bytes(dir.path / "err.txt");
    CHECK(err.rfind("E3: ", 0) == 0);
}
