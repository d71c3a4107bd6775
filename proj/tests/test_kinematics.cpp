#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>

#include "fsag/kinematics.hpp"
#include "fsag/rng.hpp"

using namespace fsag;
using namespace fsag::kinematics;

namespace {

nlohmann::json planar_two_link() {
    return nlohmann::json::parse(R"({
      "name": "planar2",
      "joints": [
        {"name": "j1", "type": "revolute", "parent": "base",
         "origin": {"xyz": [0,0,0]}, "axis": [0,0,1], "limits": [-3.2, 3.2]},
        {"name": "j2", "type": "revolute", "parent": "j1",
         "origin": {"xyz": [1,0,0]}, "axis": [0,0,1], "limits": [-3.2, 3.2]}
      ],
      "fingertips": [{"name": "tip", "link": "j2", "offset": [1,0,0]}]
    })");
}

// Random spatial chain for Jacobian checks.
nlohmann::json random_chain(Rng& rng, int segments) {
    nlohmann::json joints = nlohmann::json::array();
    std::string parent = "base";
    for (int i = 0; i < segments; ++i) {
        Eigen::Vector3d axis(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        axis.normalize();
        const bool prismatic = rng.uniform() < 0.25;
        nlohmann::json j = {
            {"name", "j" + std::to_string(i)},
            {"type", prismatic ? "prismatic" : "revolute"},
            {"parent", parent},
            {"origin",
             {{"xyz", {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)}},
              {"rpy", {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}}}},
            {"axis", {axis.x(), axis.y(), axis.z()}},
            {"limits", {-2.0, 2.0}}};
        joints.push_back(j);
        parent = "j" + std::to_string(i);
    }
    return {{"name", "random"},
            {"joints", joints},
            {"fingertips",
             nlohmann::json::array({{{"name", "tip"}, {"link", parent}, {"offset", {0.05, 0.02, -0.03}}}})}};
}

Eigen::MatrixXd fd_jacobian(const HandModel& model, const Eigen::VectorXd& q, int pad,
                            double step = 1e-6) {
    Eigen::MatrixXd J(3, model.n_q);
    for (int j = 0; j < model.n_q; ++j) {
        Eigen::VectorXd hi = q, lo = q;
        hi(j) += step;
        lo(j) -= step;
        const Eigen::Vector3d p_hi = forward_kinematics(model, hi).fingertips[static_cast<std::size_t>(pad)];
        const Eigen::Vector3d p_lo = forward_kinematics(model, lo).fingertips[static_cast<std::size_t>(pad)];
        J.col(j) = (p_hi - p_lo) / (2.0 * step);
    }
    return J;
}

}  // namespace

TEST_CASE("planar two-link closed forms") {
    HandModel model = parse_model(planar_two_link());
    CHECK(model.n_q == 2);

    KinematicState zero = forward_kinematics(model, Eigen::Vector2d(0, 0));
    CHECK(zero.fingertips[0].isApprox(Eigen::Vector3d(2, 0, 0), 1e-12));

    KinematicState bent =
        forward_kinematics(model, Eigen::Vector2d(std::numbers::pi / 2, 0));
    CHECK(bent.fingertips[0].isApprox(Eigen::Vector3d(0, 2, 0), 1e-12));

    KinematicState elbow =
        forward_kinematics(model, Eigen::Vector2d(0, std::numbers::pi / 2));
    CHECK(elbow.fingertips[0].isApprox(Eigen::Vector3d(1, 1, 0), 1e-12));

    // Jacobian at rest: axis x lever arm.
    Eigen::MatrixXd J = fingertip_jacobian(model, zero, 0);
    CHECK(J.col(0).isApprox(Eigen::Vector3d(0, 2, 0), 1e-12));
    CHECK(J.col(1).isApprox(Eigen::Vector3d(0, 1, 0), 1e-12));
}

TEST_CASE("fixed chain ignores q; joints downstream of a pad have zero columns") {
    nlohmann::json desc = nlohmann::json::parse(R"({
      "name": "fixed",
      "joints": [
        {"name": "a", "type": "fixed", "parent": "base", "origin": {"xyz": [0.1, 0, 0]}},
        {"name": "b", "type": "fixed", "parent": "a", "origin": {"xyz": [0, 0.2, 0]}},
        {"name": "c", "type": "revolute", "parent": "b",
         "origin": {"xyz": [0,0,0]}, "axis": [0,0,1], "limits": [-1, 1]}
      ],
      "fingertips": [{"name": "tip", "link": "b", "offset": [0,0,0.3]}]
    })");
    HandModel model = parse_model(desc);
    CHECK(model.n_q == 1);
    KinematicState s1 = forward_kinematics(model, Eigen::VectorXd::Constant(1, 0.0));
    KinematicState s2 = forward_kinematics(model, Eigen::VectorXd::Constant(1, 0.7));
    CHECK(s1.fingertips[0].isApprox(s2.fingertips[0], 1e-15));
    CHECK(s1.fingertips[0].isApprox(Eigen::Vector3d(0.1, 0.2, 0.3), 1e-12));

    // The revolute joint is downstream of the pad: zero column.
    Eigen::MatrixXd J = fingertip_jacobian(model, s1, 0);
    CHECK(J.col(0).norm() == 0.0);
}

TEST_CASE("parse_model validation") {
    nlohmann::json self_cycle = nlohmann::json::parse(R"({
      "name": "bad",
      "joints": [
        {"name": "a", "type": "revolute", "parent": "a",
         "axis": [0,0,1], "limits": [-1,1]}
      ],
      "fingertips": [{"name": "t", "link": "a"}]
    })");
    CHECK_THROWS_WITH_AS(parse_model(self_cycle), doctest::Contains("cycle"), Error);

    nlohmann::json bad_axis = planar_two_link();
    bad_axis["joints"][0]["axis"] = {0, 0, 2};
    CHECK_THROWS_WITH_AS(parse_model(bad_axis), doctest::Contains("axis"), Error);

    nlohmann::json bad_limits = planar_two_link();
    bad_limits["joints"][1]["limits"] = {1.0, -1.0};
    CHECK_THROWS_WITH_AS(parse_model(bad_limits), doctest::Contains("limits"), Error);

    nlohmann::json no_tips = planar_two_link();
    no_tips.erase("fingertips");
    CHECK_THROWS_AS(parse_model(no_tips), Error);

    nlohmann::json bad_coupling = planar_two_link();
    bad_coupling["coupling"] = {{"C", {{1.0}}}, {"d", {0.0}}};
    CHECK_THROWS_WITH_AS(parse_model(bad_coupling), doctest::Contains("n_q"), Error);

    // Forward references are fine (topological order is computed).
    nlohmann::json forward_ref = nlohmann::json::parse(R"({
      "name": "fwd",
      "joints": [
        {"name": "child", "type": "revolute", "parent": "root",
         "origin": {"xyz": [0.5,0,0]}, "axis": [0,0,1], "limits": [-1,1]},
        {"name": "root", "type": "revolute", "parent": "base",
         "axis": [0,0,1], "limits": [-1,1]}
      ],
      "fingertips": [{"name": "t", "link": "child", "offset": [0.5,0,0]}]
    })");
    HandModel fwd = parse_model(forward_ref);
    KinematicState s = forward_kinematics(fwd, Eigen::Vector2d(0, 0));
    CHECK(s.fingertips[0].isApprox(Eigen::Vector3d(1.0, 0, 0), 1e-12));
}

TEST_CASE("bundled hands: DOF counts match the supported embodiments") {
    HandModel dex = parse_model_file(std::string(FSAG_DATA_DIR) + "/hands/dexhand021.json");
    CHECK(dex.n_q == 17);
    CHECK(dex.fingertips.size() == 5);
    CHECK(dex.coupling_C.rows() == 1);
    CHECK(dex.wrist.has_value());

    HandModel l20 = parse_model_file(std::string(FSAG_DATA_DIR) + "/hands/l20.json");
    CHECK(l20.n_q == 21);
    CHECK(l20.fingertips.size() == 5);
    CHECK(l20.coupling_C.rows() == 5);
}

TEST_CASE("jacobians match finite differences on random chains and bundled hands") {
    Rng rng(41);
    for (int trial = 0; trial < 6; ++trial) {
        HandModel model = parse_model(random_chain(rng, 3 + static_cast<int>(rng.index(4))));
        Eigen::VectorXd q(model.n_q);
        for (int i = 0; i < model.n_q; ++i) q(i) = rng.uniform(-1.5, 1.5);
        KinematicState state = forward_kinematics(model, q);
        Eigen::MatrixXd J = fingertip_jacobian(model, state, 0);
        Eigen::MatrixXd Jfd = fd_jacobian(model, q, 0);
        CHECK((J - Jfd).cwiseAbs().maxCoeff() < 1e-5);
    }

    for (const char* file : {"/hands/dexhand021.json", "/hands/l20.json"}) {
        HandModel model = parse_model_file(std::string(FSAG_DATA_DIR) + file);
        for (int trial = 0; trial < 3; ++trial) {
            Eigen::VectorXd q(model.n_q);
            for (int i = 0; i < model.n_q; ++i)
                q(i) = rng.uniform(model.q_min(i), model.q_max(i));
            KinematicState state = forward_kinematics(model, q);
            for (int pad = 0; pad < 5; ++pad) {
                Eigen::MatrixXd J = fingertip_jacobian(model, state, pad);
                Eigen::MatrixXd Jfd = fd_jacobian(model, q, pad);
                CHECK((J - Jfd).cwiseAbs().maxCoeff() < 1e-5);
            }
        }
    }
}

TEST_CASE("rigid-motion equivariance of FK") {
    Rng rng(43);
    HandModel model = parse_model(random_chain(rng, 4));
    Eigen::VectorXd q(model.n_q);
    for (int i = 0; i < model.n_q; ++i) q(i) = rng.uniform(-1, 1);

    Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
    T.translation() = Eigen::Vector3d(0.3, -0.2, 0.5);
    T.linear() = (Eigen::AngleAxisd(0.7, Eigen::Vector3d::UnitZ()) *
                  Eigen::AngleAxisd(-0.3, Eigen::Vector3d::UnitX()))
                     .toRotationMatrix();

    KinematicState plain = forward_kinematics(model, q);
    KinematicState moved = forward_kinematics(model, q, T);
    CHECK(moved.fingertips[0].isApprox(T * plain.fingertips[0], 1e-12));
}

TEST_CASE("FK chain composition: splitting at a link composes exactly") {
    Rng rng(47);
    HandModel model = parse_model(random_chain(rng, 5));
    Eigen::VectorXd q(model.n_q);
    for (int i = 0; i < model.n_q; ++i) q(i) = rng.uniform(-1, 1);
    KinematicState full = forward_kinematics(model, q);

    // Recompute with the base placed at link 2's pose and the suffix chain.
    // Equivalent statement: pose(link5) == pose(link2) * rel(link2 -> link5),
    // where rel comes from an FK of the same model with identity base.
    const Eigen::Isometry3d pose2 = full.link_poses[2];
    KinematicState again = forward_kinematics(model, q, Eigen::Isometry3d::Identity());
    const Eigen::Isometry3d rel = again.link_poses[2].inverse() * again.link_poses[4];
    CHECK((pose2 * rel).isApprox(full.link_poses[4], 1e-12));
}

TEST_CASE("coupling residual closed forms") {
    HandModel model = parse_model(planar_two_link());

    SUBCASE("zero rows give -d and constant zero jacobian") {
        model.coupling_C = Eigen::MatrixXd::Zero(2, 2);
        model.coupling_d = Eigen::Vector2d(0.5, -1.0);
        auto [e, J] = coupling_residual(model, Eigen::Vector2d(0.3, 0.7));
        CHECK(e.isApprox(Eigen::Vector2d(-0.5, 1.0), 1e-15));
        CHECK(J.norm() == 0.0);
    }

    SUBCASE("distal-follows-proximal") {
        model.coupling_C.resize(1, 2);
        model.coupling_C << -0.7, 1.0;  // q_d - 0.7 q_p
        model.coupling_d = Eigen::VectorXd::Zero(1);

        auto [e_ok, J1] = coupling_residual(model, Eigen::Vector2d(1.0, 0.7));
        CHECK(e_ok(0) == doctest::Approx(0.0));
        CHECK(J1.isApprox(model.coupling_C, 1e-15));

        auto [e_off, J2] = coupling_residual(model, Eigen::Vector2d(1.0, 0.5));
        CHECK(e_off(0) == doctest::Approx(-0.2));
    }

    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(coupling_residual(model, Eigen::VectorXd::Zero(3)), Error);
    }
}

TEST_CASE("collision helpers") {
    HandModel dex = parse_model_file(std::string(FSAG_DATA_DIR) + "/hands/dexhand021.json");
    Eigen::VectorXd q = dex.clamp(Eigen::VectorXd::Zero(dex.n_q));
    KinematicState state = forward_kinematics(dex, q);
    auto centers = sphere_centers(dex, state);
    CHECK(centers.size() == dex.spheres.size());

    auto pairs = collision_pairs(dex);
    CHECK(!pairs.empty());
    for (auto [i, j] : pairs) {
        CHECK(dex.spheres[static_cast<std::size_t>(i)].link !=
              dex.spheres[static_cast<std::size_t>(j)].link);
    }
    CHECK(dex.table_z == 0.0);
}
