#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsag/tensor.hpp"

namespace fsag::io {

using json = nlohmann::json;

// Binary tensor file ".tns": magic "FSAT", u32 LE version=1, u32 rank,
// rank x u32 extents, then f32 LE payload, row-major. No padding, no checksum.
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

// ASCII PLY point cloud, elements: vertex x y z [nx ny nz].
struct PlyCloud {
    std::vector<std::array<double, 3>> points;
    std::vector<std::array<double, 3>> normals;  // empty or same length as points
};
void write_ply(const std::filesystem::path& path, const PlyCloud& cloud);
PlyCloud read_ply(const std::filesystem::path& path);

// JSON with parse errors reported as bad_input.
json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& value);

// Schema access helpers; `where` is a JSON-pointer-style path used in errors.
const json& require_field(const json& obj, const std::string& key, const std::string& where);
double require_number(const json& obj, const std::string& key, const std::string& where);
int require_int(const json& obj, const std::string& key, const std::string& where);
std::string require_string(const json& obj, const std::string& key, const std::string& where);
void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                         const std::string& where);

// Shortest round-trip decimal formatting (used for PLY/CSV/SVG payloads).
std::string format_double(double value);

// Full-file text/CSV writes go through a temp file + rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

}  // namespace fsag::io
