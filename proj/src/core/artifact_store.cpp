#include "digzsl/core/artifact_store.hpp"

#include "digzsl/core/errors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>

namespace digzsl {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 4> kMagic{'D', 'Z', 'S', 'A'};

template <class T>
void put_le(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& in, const fs::path& path) {
    std::array<unsigned char, sizeof(T)> bytes;
    if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
        throw IoError("truncated artifact " + path.string());
    }
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T v;
    std::memcpy(&v, bytes.data(), sizeof(T));
    return v;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

const Eigen::MatrixXd& Blob::tensor(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t.data;
    }
    throw StructuralError("artifact of kind '" + kind + "' has no tensor '" + name + "'");
}

nlohmann::json ArtifactHandle::to_json() const {
    return {{"stage", stage},          {"name", name}, {"version", version},        {"config_hash", config_hash},
            {"seed", seed},            {"timestamp", timestamp}, {"path", path.string()}};
}

ArtifactHandle ArtifactHandle::from_json(const nlohmann::json& j) {
    ArtifactHandle h;
    h.stage = j.at("stage").get<std::string>();
    h.name = j.at("name").get<std::string>();
    h.version = j.at("version").get<std::uint32_t>();
    h.config_hash = j.at("config_hash").get<std::string>();
    h.seed = j.at("seed").get<std::uint64_t>();
    h.timestamp = j.at("timestamp").get<std::string>();
    h.path = j.at("path").get<std::string>();
    return h;
}

void write_blob(const fs::path& path, const Blob& blob, const std::string& config_hash, std::uint64_t seed) {
    nlohmann::json header;
    header["kind"] = blob.kind;
    header["config_hash"] = config_hash;
    header["seed"] = seed;
    header["meta"] = blob.meta;
    header["dtype"] = "f64le";
    auto& shapes = header["tensors"] = nlohmann::json::array();
    for (const auto& t : blob.tensors) shapes.push_back({{"name", t.name}, {"rows", t.data.rows()}, {"cols", t.data.cols()}});
    const std::string text = header.dump();

    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write artifact " + path.string());
        out.write(kMagic.data(), kMagic.size());
        put_le<std::uint32_t>(out, kArtifactFormatVersion);
        put_le<std::uint64_t>(out, text.size());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& t : blob.tensors) {
            const double* p = t.data.data();
            for (Eigen::Index i = 0; i < t.data.size(); ++i) put_le<double>(out, p[i]);
        }
        if (!out) throw IoError("failed writing artifact " + path.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move artifact into place at " + path.string() + ": " + ec.message());
}

LoadedBlob read_blob(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("artifact not found: " + path.string());
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw VersionError("not an artifact container: " + path.string());
    }
    const auto version = get_le<std::uint32_t>(in, path);
    if (version != kArtifactFormatVersion) {
        throw VersionError("artifact " + path.string() + " has format version " + std::to_string(version) +
                           ", expected " + std::to_string(kArtifactFormatVersion));
    }
    const auto header_len = get_le<std::uint64_t>(in, path);
    std::string text(header_len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw IoError("truncated artifact " + path.string());
    const auto header = nlohmann::json::parse(text);

    LoadedBlob out;
    out.config_hash = header.at("config_hash").get<std::string>();
    out.seed = header.at("seed").get<std::uint64_t>();
    out.blob.kind = header.at("kind").get<std::string>();
    out.blob.meta = header.at("meta");
    for (const auto& shape : header.at("tensors")) {
        const auto rows = shape.at("rows").get<Eigen::Index>();
        const auto cols = shape.at("cols").get<Eigen::Index>();
        Eigen::MatrixXd m(rows, cols);
        double* p = m.data();
        for (Eigen::Index i = 0; i < m.size(); ++i) p[i] = get_le<double>(in, path);
        out.blob.tensors.push_back({shape.at("name").get<std::string>(), std::move(m)});
    }
    return out;
}

ArtifactStore::ArtifactStore(fs::path root) : root_(std::move(root)) {}

fs::path ArtifactStore::path_for(const std::string& stage, const std::string& name) const {
    return root_ / stage / (name + ".v" + std::to_string(kArtifactFormatVersion) + ".bin");
}

ArtifactHandle ArtifactStore::save(const std::string& stage, const std::string& name, const Blob& blob,
                                   const std::string& config_hash, std::uint64_t seed) {
    std::error_code ec;
    fs::create_directories(root_ / stage, ec);
    if (ec) throw IoError("cannot create " + (root_ / stage).string() + ": " + ec.message());
    ArtifactHandle h;
    h.stage = stage;
    h.name = name;
    h.config_hash = config_hash;
    h.seed = seed;
    h.timestamp = utc_timestamp();
    h.path = path_for(stage, name);
    write_blob(h.path, blob, config_hash, seed);
    record(h);
    return h;
}

bool ArtifactStore::exists(const std::string& stage, const std::string& name) const {
    return fs::exists(path_for(stage, name));
}

LoadedBlob ArtifactStore::load_with_header(const std::string& stage, const std::string& name) const {
    return read_blob(path_for(stage, name));
}

Blob ArtifactStore::load(const std::string& stage, const std::string& name, const std::string& expected_hash) const {
    LoadedBlob lb = load_with_header(stage, name);
    if (!expected_hash.empty() && lb.config_hash != expected_hash) {
        throw VersionError("artifact " + stage + "/" + name + " was produced under config " + lb.config_hash +
                           ", current config is " + expected_hash);
    }
    return std::move(lb.blob);
}

std::vector<ArtifactHandle> ArtifactStore::manifest() const {
    std::lock_guard lock(manifest_mutex_);
    std::vector<ArtifactHandle> out;
    std::ifstream in(root_ / "manifest.json");
    if (!in) return out;
    const auto j = nlohmann::json::parse(in);
    for (const auto& e : j.at("artifacts")) out.push_back(ArtifactHandle::from_json(e));
    return out;
}

void ArtifactStore::record(const ArtifactHandle& h) {
    std::lock_guard lock(manifest_mutex_);
    nlohmann::json j = {{"format_version", kArtifactFormatVersion}, {"artifacts", nlohmann::json::array()}};
    {
        std::ifstream in(root_ / "manifest.json");
        if (in) j = nlohmann::json::parse(in);
    }
    auto& list = j["artifacts"];
    for (auto it = list.begin(); it != list.end();) {
        if ((*it)["stage"] == h.stage && (*it)["name"] == h.name) {
            it = list.erase(it);
        } else {
            ++it;
        }
    }
    list.push_back(h.to_json());
    std::ofstream out(root_ / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write manifest in " + root_.string());
    out << j.dump(2) << "\n";
}

}  // namespace digzsl
