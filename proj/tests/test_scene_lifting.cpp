#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>

#include "fsag/error.hpp"
#include "fsag/rng.hpp"
#include "fsag/scene_lifting.hpp"

using namespace fsag;
using namespace fsag::lifting;

namespace {

CameraIntrinsics test_intrinsics() {
    CameraIntrinsics k;
    k.fx = 380.0;
    k.fy = 380.0;
    k.cx = 320.0;
    k.cy = 160.0;
    k.width = 640;
    k.height = 320;
    return k;
}

PointCloud cloud_from(std::vector<Eigen::Vector3d> pts) {
    PointCloud c;
    c.points = std::move(pts);
    return c;
}

}  // namespace

TEST_CASE("back_project closed forms") {
    CameraIntrinsics k = test_intrinsics();
    Tensor depth({320, 640});
    Tensor mask({320, 640});
    const double d = 0.5;
    // Principal point pixel.
    depth.at(160, 320) = static_cast<float>(d);
    mask.at(160, 320) = 1.0f;
    // Zero-depth pixel inside the mask: excluded.
    mask.at(100, 100) = 1.0f;

    PointCloud cloud = back_project(depth, mask, k);
    REQUIRE(cloud.size() == 1);
    CHECK(cloud.points[0].x() == doctest::Approx(0.0));
    CHECK(cloud.points[0].y() == doctest::Approx(0.0));
    CHECK(cloud.points[0].z() == doctest::Approx(d));
    CHECK(cloud.pixels[0] == std::pair{160, 320});
}

TEST_CASE("back_project unit-offset pixel") {
    CameraIntrinsics k = test_intrinsics();
    k.fx = 100.0;  // so cx + fx stays inside the image
    Tensor depth({320, 640});
    Tensor mask({320, 640});
    const int col = static_cast<int>(k.cx + k.fx);
    depth.at(160, col) = 2.0f;
    mask.at(160, col) = 1.0f;
    PointCloud cloud = back_project(depth, mask, k);
    REQUIRE(cloud.size() == 1);
    CHECK(cloud.points[0].x() == doctest::Approx(2.0));
    CHECK(cloud.points[0].y() == doctest::Approx(0.0));
    CHECK(cloud.points[0].z() == doctest::Approx(2.0));
}

TEST_CASE("empty mask gives empty cloud, not an error") {
    CameraIntrinsics k = test_intrinsics();
    Tensor depth = Tensor::full({320, 640}, 1.0f);
    Tensor mask({320, 640});
    PointCloud cloud = back_project(depth, mask, k);
    CHECK(cloud.size() == 0);
}

TEST_CASE("project closed forms and round trip") {
    CameraIntrinsics k = test_intrinsics();
    PointCloud cloud = cloud_from({{0.0, 0.0, 0.7}});
    auto px = project(cloud, k);
    CHECK(px[0].first == doctest::Approx(k.cy));
    CHECK(px[0].second == doctest::Approx(k.cx));

    // Projective invariance: scaling a point leaves its projection unchanged.
    PointCloud scaled = cloud_from({{0.1, -0.05, 0.5}, {0.2, -0.1, 1.0}});
    auto p2 = project(scaled, k);
    CHECK(p2[0].first == doctest::Approx(p2[1].first).epsilon(1e-12));
    CHECK(p2[0].second == doctest::Approx(p2[1].second).epsilon(1e-12));

    PointCloud bad = cloud_from({{0, 0, 0.0}});
    CHECK_THROWS_AS(project(bad, k), Error);

    // Round trip over a full synthetic frame.
    Rng rng(8);
    Tensor depth({320, 640}), mask({320, 640});
    for (int r = 100; r < 220; ++r)
        for (int c = 200; c < 440; ++c) {
            depth.at(r, c) = static_cast<float>(rng.uniform(0.3, 1.5));
            mask.at(r, c) = 1.0f;
        }
    PointCloud full = back_project(depth, mask, k);
    auto pix = project(full, k);
    double worst = 0.0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        worst = std::max(worst, std::abs(pix[i].first - full.pixels[i].first));
        worst = std::max(worst, std::abs(pix[i].second - full.pixels[i].second));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("select_contacts: nearest candidates and median") {
    CameraIntrinsics k = test_intrinsics();

    SUBCASE("peak exactly on a projected point, N=1") {
        PointCloud cloud = cloud_from({{0.0, 0.0, 0.5}, {0.1, 0.0, 0.5}, {0.0, 0.1, 0.5}});
        affordance::Peak peak{0, k.cy, k.cx, 1.0f};
        SelectParams params;
        params.neighbors = 1;
        ContactSet out = select_contacts({peak}, cloud, k, params);
        REQUIRE(out.contacts.size() == 1);
        // Normal estimation needs >= 3 neighbors in radius; position is exact.
        CHECK(out.contacts[0].position.isApprox(Eigen::Vector3d(0, 0, 0.5), 1e-12));
    }

    SUBCASE("N nearest by image distance are chosen") {
        // Points along +x at image distances 1,2,3,4,5,9 px from the peak.
        std::vector<Eigen::Vector3d> pts;
        const double z = 0.5;
        for (double px : {1.0, 2.0, 3.0, 4.0, 5.0, 9.0})
            pts.emplace_back(px * z / k.fx, 0.0, z);
        PointCloud cloud = cloud_from(std::move(pts));
        affordance::Peak peak{1, k.cy, k.cx, 1.0f};
        SelectParams params;
        params.neighbors = 5;
        ContactSet out = select_contacts({peak}, cloud, k, params);
        REQUIRE(out.contacts.size() == 1);
        const auto& cand = out.contacts[0].candidates;
        REQUIRE(cand.size() == 5);
        CHECK(std::find(cand.begin(), cand.end(), 5) == cand.end());  // 9px excluded
        // Median x of the five nearest: x at 3px.
        CHECK(out.contacts[0].position.x() == doctest::Approx(3.0 * z / k.fx).epsilon(1e-9));
    }

    SUBCASE("symmetric cluster centers the contact") {
        std::vector<Eigen::Vector3d> pts;
        const double z = 0.5;
        for (double dx : {-2.0, -1.0, 1.0, 2.0})
            for (double dy : {-2.0, -1.0, 1.0, 2.0})
                pts.emplace_back(dx * z / k.fx, dy * z / k.fy, z);
        PointCloud cloud = cloud_from(std::move(pts));
        affordance::Peak peak{2, k.cy, k.cx, 1.0f};
        SelectParams params;
        params.neighbors = 16;
        ContactSet out = select_contacts({peak}, cloud, k, params);
        CHECK(out.contacts[0].position.x() == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(out.contacts[0].position.y() == doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("median stays inside the candidate bounding box") {
        Rng rng(77);
        std::vector<Eigen::Vector3d> pts;
        for (int i = 0; i < 200; ++i)
            pts.emplace_back(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02),
                             rng.uniform(0.4, 0.6));
        PointCloud cloud = cloud_from(std::move(pts));
        affordance::Peak peak{0, k.cy, k.cx, 1.0f};
        SelectParams params;
        params.neighbors = 50;
        ContactSet out = select_contacts({peak}, cloud, k, params);
        REQUIRE(out.contacts[0].candidates.size() == 50);
        Eigen::Vector3d lo(1e9, 1e9, 1e9), hi(-1e9, -1e9, -1e9);
        for (int idx : out.contacts[0].candidates) {
            lo = lo.cwiseMin(cloud.points[static_cast<std::size_t>(idx)]);
            hi = hi.cwiseMax(cloud.points[static_cast<std::size_t>(idx)]);
        }
        for (int a = 0; a < 3; ++a) {
            CHECK(out.contacts[0].position(a) >= lo(a) - 1e-12);
            CHECK(out.contacts[0].position(a) <= hi(a) + 1e-12);
        }
    }

    SUBCASE("far peak is invalid; small cloud flags degraded") {
        PointCloud cloud = cloud_from({{0.0, 0.0, 0.5}, {0.001, 0, 0.5}, {0, 0.001, 0.5}});
        affordance::Peak far_peak{3, k.cy + 100.0, k.cx, 1.0f};
        ContactSet out = select_contacts({far_peak}, cloud, k, {});
        CHECK_FALSE(out.contacts[0].valid);

        affordance::Peak near_peak{3, k.cy, k.cx, 1.0f};
        ContactSet deg = select_contacts({near_peak}, cloud, k, {});
        CHECK(deg.contacts[0].degraded);

        PointCloud empty;
        CHECK_THROWS_AS(select_contacts({near_peak}, empty, k, {}), Error);
    }
}

TEST_CASE("estimate_normal: plane, sphere, degenerate") {
    SUBCASE("axis-aligned plane faces the camera") {
        Rng rng(5);
        std::vector<Eigen::Vector3d> pts;
        for (int i = 0; i < 100; ++i)
            pts.emplace_back(rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01), 0.5);
        PointCloud cloud = cloud_from(std::move(pts));
        auto n = estimate_normal(cloud, {0, 0, 0.5}, 0.05);
        REQUIRE(n.has_value());
        CHECK(n->isApprox(Eigen::Vector3d(0, 0, -1), 1e-9));
        CHECK(std::abs(n->norm() - 1.0) <= 1e-9);
    }

    SUBCASE("tilted noiseless planes recovered within 0.1 degree") {
        Rng rng(6);
        for (int trial = 0; trial < 10; ++trial) {
            Eigen::Vector3d normal(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, -0.2));
            normal.normalize();
            const Eigen::Vector3d center(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                                         rng.uniform(0.4, 0.6));
            Eigen::Vector3d u = normal.unitOrthogonal();
            Eigen::Vector3d v = normal.cross(u);
            std::vector<Eigen::Vector3d> pts;
            for (int i = 0; i < 200; ++i)
                pts.push_back(center + rng.uniform(-0.02, 0.02) * u + rng.uniform(-0.02, 0.02) * v);
            PointCloud cloud = cloud_from(std::move(pts));
            auto n = estimate_normal(cloud, center, 0.03);
            REQUIRE(n.has_value());
            const double angle = std::acos(std::clamp(std::abs(n->dot(normal)), 0.0, 1.0));
            CHECK(angle < 0.1 * std::numbers::pi / 180.0);
            // Sign rule: toward the camera.
            CHECK(n->dot(-center) > 0.0);
        }
    }

    SUBCASE("noisy plane within 5 degrees at 1mm noise, 2cm radius") {
        Rng rng(7);
        const Eigen::Vector3d center(0, 0, 0.5);
        const Eigen::Vector3d normal(0, 0, -1);
        std::vector<Eigen::Vector3d> pts;
        for (int i = 0; i < 400; ++i) {
            Eigen::Vector3d p(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02), 0.5);
            p.z() += 0.001 * rng.normal();
            pts.push_back(p);
        }
        PointCloud cloud = cloud_from(std::move(pts));
        auto n = estimate_normal(cloud, center, 0.02);
        REQUIRE(n.has_value());
        const double angle = std::acos(std::clamp(std::abs(n->dot(normal)), 0.0, 1.0));
        CHECK(angle < 5.0 * std::numbers::pi / 180.0);
    }

    SUBCASE("sphere patch normal within 5 degrees of radial") {
        const Eigen::Vector3d center(0, 0, 0.5);
        const double radius = 0.05;
        Rng rng(9);
        std::vector<Eigen::Vector3d> pts;
        // Near-side patch around the point closest to the camera.
        for (int i = 0; i < 500; ++i) {
            Eigen::Vector3d dir(rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), -1.0);
            dir.normalize();
            pts.push_back(center + radius * dir);
        }
        PointCloud cloud = cloud_from(std::move(pts));
        const Eigen::Vector3d query = center + radius * Eigen::Vector3d(0, 0, -1);
        auto n = estimate_normal(cloud, query, 0.015);
        REQUIRE(n.has_value());
        const Eigen::Vector3d radial = (query - center).normalized();
        const double angle = std::acos(std::clamp(n->dot(radial), -1.0, 1.0));
        CHECK(angle < 5.0 * std::numbers::pi / 180.0);
    }

    SUBCASE("two neighbors or collinear neighborhoods are degenerate") {
        PointCloud two = cloud_from({{0, 0, 0.5}, {0.001, 0, 0.5}});
        CHECK_FALSE(estimate_normal(two, {0, 0, 0.5}, 0.01).has_value());

        std::vector<Eigen::Vector3d> line;
        for (int i = 0; i < 20; ++i) line.emplace_back(i * 0.001, 0.0, 0.5);
        PointCloud collinear = cloud_from(std::move(line));
        CHECK_FALSE(estimate_normal(collinear, {0.01, 0, 0.5}, 0.05).has_value());
    }
}

TEST_CASE("contact set json round trip") {
    ContactSet set;
    Contact c;
    c.finger_id = 0;
    c.valid = true;
    c.position = {0.01, -0.02, 0.5};
    c.normal = Eigen::Vector3d(0.0, 0.6, -0.8);
    c.candidates = {1, 2, 3};
    set.contacts.push_back(c);
    Contact invalid;
    invalid.finger_id = 3;
    set.contacts.push_back(invalid);

    auto j = contacts_to_json(set);
    ContactSet back = contacts_from_json(j);
    REQUIRE(back.contacts.size() == 2);
    CHECK(back.contacts[0].valid);
    CHECK(back.contacts[0].position.isApprox(c.position, 1e-12));
    CHECK(back.contacts[0].normal.isApprox(c.normal, 1e-12));
    CHECK_FALSE(back.contacts[1].valid);
    CHECK(back.find(3) == &back.contacts[1]);
    CHECK(back.valid_count() == 1);
}
