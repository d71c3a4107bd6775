#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fsag/io.hpp"
#include "fsag/rng.hpp"

using namespace fsag;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("fsag_io_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

}  // namespace

TEST_CASE("tensor round trip is bit identical") {
    TempDir dir;
    Rng rng(44);
    Tensor t({2, 3, 4});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(-5, 5));
    const fs::path p = dir.path / "t.tns";
    io::write_tensor(p, t);
    Tensor back = io::read_tensor(p);
    REQUIRE(back.dims() == t.dims());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);

    // Writing again produces identical bytes.
    const std::string bytes1 = io::read_text(p);
    io::write_tensor(p, t);
    CHECK(io::read_text(p) == bytes1);
}

TEST_CASE("tensor reader rejects malformed files") {
    TempDir dir;
    const fs::path p = dir.path / "bad.tns";

    {
        std::ofstream out(p, std::ios::binary);
        out << "NOPE";
    }
    CHECK_THROWS_AS(io::read_tensor(p), Error);

    Tensor t({2, 2});
    io::write_tensor(p, t);
    // Truncate payload.
    fs::resize_file(p, fs::file_size(p) - 4);
    CHECK_THROWS_AS(io::read_tensor(p), Error);

    // Extend with trailing bytes.
    io::write_tensor(p, t);
    {
        std::ofstream out(p, std::ios::binary | std::ios::app);
        out << "xx";
    }
    CHECK_THROWS_AS(io::read_tensor(p), Error);

    // Declared-but-absent payload must not allocate: huge extents, tiny file.
    {
        std::ofstream out(p, std::ios::binary);
        out << "FSAT";
        auto w32 = [&](std::uint32_t v) {
            char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                         char((v >> 24) & 0xff)};
            out.write(b, 4);
        };
        w32(1);
        w32(2);
        w32(60000);
        w32(60000);
    }
    CHECK_THROWS_AS(io::read_tensor(p), Error);

    CHECK_THROWS_AS(io::read_tensor(dir.path / "missing.tns"), Error);
}

TEST_CASE("tensor writer refuses non-finite data") {
    TempDir dir;
    Tensor t({2});
    t[0] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(io::write_tensor(dir.path / "inf.tns", t), Error);
}

TEST_CASE("ply round trip") {
    TempDir dir;
    io::PlyCloud cloud;
    cloud.points = {{0.125, -3.5, 2.0}, {1e-9, 0.3333333333333333, 7.25}, {-0.1, 0.0, 5.5}};
    cloud.normals = {{0, 0, -1}, {0.7071067811865476, 0, -0.7071067811865476}, {1, 0, 0}};
    const fs::path p = dir.path / "c.ply";
    io::write_ply(p, cloud);
    io::PlyCloud back = io::read_ply(p);
    REQUIRE(back.points.size() == 3);
    REQUIRE(back.normals.size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            CHECK(std::abs(back.points[i][j] - cloud.points[i][j]) <= 1e-9);
            CHECK(std::abs(back.normals[i][j] - cloud.normals[i][j]) <= 1e-9);
        }

    // Without normals.
    cloud.normals.clear();
    io::write_ply(p, cloud);
    back = io::read_ply(p);
    CHECK(back.normals.empty());
    CHECK(back.points.size() == 3);
}

TEST_CASE("ply reader is closed-world") {
    TempDir dir;
    const fs::path p = dir.path / "bad.ply";
    {
        std::ofstream out(p);
        out << "ply\nformat ascii 1.0\nelement vertex 2\n"
            << "property double x\nproperty double y\nproperty double z\n"
            << "end_header\n0 0 1\n";  // one vertex missing
    }
    CHECK_THROWS_AS(io::read_ply(p), Error);
    {
        std::ofstream out(p);
        out << "ply\nformat binary_little_endian 1.0\nend_header\n";
    }
    CHECK_THROWS_AS(io::read_ply(p), Error);
    {
        std::ofstream out(p);
        out << "ply\nformat ascii 1.0\nelement vertex 1\n"
            << "property double x\nproperty double y\nproperty double z\n"
            << "end_header\n0 0 1 9 9\n";  // trailing fields
    }
    CHECK_THROWS_AS(io::read_ply(p), Error);
}

TEST_CASE("json helpers report paths") {
    TempDir dir;
    const fs::path p = dir.path / "x.json";
    io::write_json(p, io::json{{"a", 1}, {"b", "s"}});
    io::json j = io::read_json(p);
    CHECK(io::require_int(j, "a", "") == 1);
    CHECK(io::require_string(j, "b", "") == "s");
    CHECK_THROWS_WITH_AS(io::require_number(j, "c", "/cfg"), doctest::Contains("/cfg/c"),
                         Error);
    CHECK_THROWS_AS(io::reject_unknown_keys(j, {"a"}, "/cfg"), Error);
    {
        std::ofstream out(p);
        out << "{not json";
    }
    CHECK_THROWS_AS(io::read_json(p), Error);
}

TEST_CASE("format_double shortest round trip") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 0.0, 123456.789}) {
        const std::string s = io::format_double(v);
        CHECK(std::stod(s) == v);
    }
}
