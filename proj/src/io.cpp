#include "fsag/io.hpp"

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fsag/error.hpp"

namespace fsag::io {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'F', 'S', 'A', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxElements = 1ull << 30;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) raise_input("truncated tensor file while reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

class AtomicFile {
public:
    AtomicFile(const fs::path& target, std::ios::openmode mode)
        : target_(target), tmp_(target.string() + ".tmp") {
        if (target.has_parent_path()) fs::create_directories(target.parent_path());
        stream_.open(tmp_, mode);
        if (!stream_) raise_input("cannot open for writing: " + tmp_.string());
    }

    std::ofstream& stream() { return stream_; }

    void commit() {
        stream_.close();
        if (!stream_) raise(ErrorCode::internal, "write failed: " + tmp_.string());
        fs::rename(tmp_, target_);
        committed_ = true;
    }

    ~AtomicFile() {
        if (!committed_) {
            std::error_code ec;
            fs::remove(tmp_, ec);
        }
    }

private:
    fs::path target_;
    fs::path tmp_;
    std::ofstream stream_;
    bool committed_ = false;
};

}  // namespace

void write_tensor(const fs::path& path, const Tensor& tensor) {
    if (!tensor.all_finite()) raise_input("refusing to write non-finite tensor: " + path.string());
    AtomicFile file(path, std::ios::binary);
    auto& out = file.stream();
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (int d : tensor.dims()) put_u32(out, static_cast<std::uint32_t>(d));
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.size() * sizeof(float)));
    file.commit();
}

Tensor read_tensor(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise_input("cannot open tensor file: " + path.string());
    std::error_code ec;
    const std::uintmax_t file_size = fs::file_size(path, ec);
    if (ec) raise_input("cannot stat tensor file: " + path.string());

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        raise_input("bad tensor magic in " + path.string());
    const std::uint32_t version = get_u32(in, "version");
    if (version != kVersion)
        raise_input("unsupported tensor version " + std::to_string(version) + " in " + path.string());
    const std::uint32_t rank = get_u32(in, "rank");
    if (rank < 1 || rank > 4) raise_input("tensor rank out of range in " + path.string());

    std::vector<int> dims(rank);
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        const std::uint32_t d = get_u32(in, "extent");
        if (d < 1) raise_input("zero extent in " + path.string());
        dims[i] = static_cast<int>(d);
        count *= d;
        if (count > kMaxElements) raise_input("tensor too large in " + path.string());
    }
    // Size check before allocating: header + exact payload, nothing else.
    const std::uint64_t expected = 12 + 4ull * rank + 4ull * count;
    if (file_size != expected)
        raise_input("tensor payload size mismatch in " + path.string());

    std::vector<float> data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) raise_input("truncated tensor payload in " + path.string());
    Tensor t(dims, std::move(data));
    if (!t.all_finite()) raise_input("non-finite values in tensor file " + path.string());
    return t;
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, err] = std::to_chars(buf, buf + sizeof(buf), value);
    if (err != std::errc{}) raise(ErrorCode::internal, "float formatting failed");
    return std::string(buf, ptr);
}

void write_ply(const fs::path& path, const PlyCloud& cloud) {
    const bool with_normals = !cloud.normals.empty();
    if (with_normals && cloud.normals.size() != cloud.points.size())
        raise_input("PLY normals length mismatch");
    AtomicFile file(path, std::ios::out);
    auto& out = file.stream();
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << cloud.points.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (with_normals)
        out << "property double nx\nproperty double ny\nproperty double nz\n";
    out << "end_header\n";
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const auto& p = cloud.points[i];
        out << format_double(p[0]) << ' ' << format_double(p[1]) << ' ' << format_double(p[2]);
        if (with_normals) {
            const auto& n = cloud.normals[i];
            out << ' ' << format_double(n[0]) << ' ' << format_double(n[1]) << ' '
                << format_double(n[2]);
        }
        out << '\n';
    }
    file.commit();
}

PlyCloud read_ply(const fs::path& path) {
    std::ifstream in(path);
    if (!in) raise_input("cannot open PLY file: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "ply") raise_input("not a PLY file: " + path.string());
    if (!std::getline(in, line) || line != "format ascii 1.0")
        raise_input("unsupported PLY format in " + path.string());

    std::size_t vertex_count = 0;
    std::vector<std::string> properties;
    while (std::getline(in, line)) {
        if (line == "end_header") break;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "element") {
            std::string kind;
            ls >> kind >> vertex_count;
            if (kind != "vertex") raise_input("unsupported PLY element in " + path.string());
        } else if (word == "property") {
            std::string type, name;
            ls >> type >> name;
            if (type != "double" && type != "float")
                raise_input("unsupported PLY property type in " + path.string());
            properties.push_back(name);
        } else if (word != "comment") {
            raise_input("unexpected PLY header line in " + path.string());
        }
    }
    const std::vector<std::string> bare = {"x", "y", "z"};
    const std::vector<std::string> with_n = {"x", "y", "z", "nx", "ny", "nz"};
    const bool has_normals = properties == with_n;
    if (!has_normals && properties != bare)
        raise_input("unsupported PLY property layout in " + path.string());

    PlyCloud cloud;
    cloud.points.reserve(std::min<std::size_t>(vertex_count, 1u << 20));
    for (std::size_t i = 0; i < vertex_count; ++i) {
        if (!std::getline(in, line))
            raise_input("truncated PLY payload in " + path.string());
        std::istringstream ls(line);
        std::array<double, 3> p{}, n{};
        if (!(ls >> p[0] >> p[1] >> p[2])) raise_input("bad PLY vertex in " + path.string());
        if (has_normals && !(ls >> n[0] >> n[1] >> n[2]))
            raise_input("bad PLY normal in " + path.string());
        std::string extra;
        if (ls >> extra) raise_input("trailing PLY fields in " + path.string());
        cloud.points.push_back(p);
        if (has_normals) cloud.normals.push_back(n);
    }
    if (std::getline(in, line) && !line.empty())
        raise_input("trailing data after PLY payload in " + path.string());
    return cloud;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) raise_input("cannot open JSON file: " + path.string());
    json value = json::parse(in, nullptr, false);
    if (value.is_discarded()) raise_input("invalid JSON in " + path.string());
    return value;
}

void write_json(const fs::path& path, const json& value) {
    AtomicFile file(path, std::ios::out);
    file.stream() << value.dump(2) << '\n';
    file.commit();
}

const json& require_field(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key))
        raise_input("missing field " + where + "/" + key);
    return obj.at(key);
}

double require_number(const json& obj, const std::string& key, const std::string& where) {
    const json& v = require_field(obj, key, where);
    if (!v.is_number()) raise_input("expected number at " + where + "/" + key);
    return v.get<double>();
}

int require_int(const json& obj, const std::string& key, const std::string& where) {
    const json& v = require_field(obj, key, where);
    if (!v.is_number_integer()) raise_input("expected integer at " + where + "/" + key);
    return v.get<int>();
}

std::string require_string(const json& obj, const std::string& key, const std::string& where) {
    const json& v = require_field(obj, key, where);
    if (!v.is_string()) raise_input("expected string at " + where + "/" + key);
    return v.get<std::string>();
}

void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                         const std::string& where) {
    if (!obj.is_object()) raise_input("expected object at " + where);
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            raise_input("unknown field " + where + "/" + key);
    }
}

void write_text_atomic(const fs::path& path, const std::string& content) {
    AtomicFile file(path, std::ios::out);
    file.stream() << content;
    file.commit();
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) raise_input("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ostringstream out;
    for (std::size_t i = 0; i < header.size(); ++i)
        out << header[i] << (i + 1 < header.size() ? "," : "");
    out << '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size()) raise(ErrorCode::internal, "CSV row width mismatch");
        for (std::size_t i = 0; i < row.size(); ++i)
            out << format_double(row[i]) << (i + 1 < row.size() ? "," : "");
        out << '\n';
    }
    write_text_atomic(path, out.str());
}

}  // namespace fsag::io
