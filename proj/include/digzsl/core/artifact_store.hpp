#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

namespace digzsl {

inline constexpr std::uint32_t kArtifactFormatVersion = 1;

struct NamedTensor {
    std::string name;
    Eigen::MatrixXd data;

    bool operator==(const NamedTensor& o) const {
        return name == o.name && data.rows() == o.data.rows() && data.cols() == o.data.cols() && data == o.data;
    }
};

// In-memory form of one persisted artifact: a kind tag, free-form metadata
// and a list of dense tensors. Every library type that is persisted converts
// to and from a Blob.
struct Blob {
    std::string kind;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedTensor> tensors;

    void add(std::string name, Eigen::MatrixXd data) { tensors.push_back({std::move(name), std::move(data)}); }
    const Eigen::MatrixXd& tensor(const std::string& name) const;
    bool operator==(const Blob& o) const { return kind == o.kind && meta == o.meta && tensors == o.tensors; }
};

struct ArtifactHandle {
    std::string stage;
    std::string name;
    std::uint32_t version = kArtifactFormatVersion;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string timestamp;
    std::filesystem::path path;

    nlohmann::json to_json() const;
    static ArtifactHandle from_json(const nlohmann::json& j);
};

// Container layout: "DZSA" magic, u32 format version, u64 header length,
// JSON header (kind, config hash, seed, meta, tensor shapes), then every
// tensor as column-major little-endian float64.
void write_blob(const std::filesystem::path& path, const Blob& blob, const std::string& config_hash, std::uint64_t seed);

struct LoadedBlob {
    Blob blob;
    std::string config_hash;
    std::uint64_t seed = 0;
};
LoadedBlob read_blob(const std::filesystem::path& path);

// Files live at <root>/<stage>/<name>.v<version>.bin and are indexed in
// <root>/manifest.json. Writers are expected to be single per stage directory;
// the manifest itself is guarded so concurrent stage workers can share a store.
class ArtifactStore {
public:
    explicit ArtifactStore(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path path_for(const std::string& stage, const std::string& name) const;
    std::filesystem::path stage_dir(const std::string& stage) const { return root_ / stage; }

    ArtifactHandle save(const std::string& stage, const std::string& name, const Blob& blob,
                        const std::string& config_hash, std::uint64_t seed);

    bool exists(const std::string& stage, const std::string& name) const;

    // Throws IoError when missing and VersionError when the format version or
    // the recorded config hash differs from `expected_hash` (skipped if empty).
    Blob load(const std::string& stage, const std::string& name, const std::string& expected_hash) const;
    LoadedBlob load_with_header(const std::string& stage, const std::string& name) const;

    std::vector<ArtifactHandle> manifest() const;

private:
    void record(const ArtifactHandle& h);

    std::filesystem::path root_;
    mutable std::mutex manifest_mutex_;
};

}  // namespace digzsl
