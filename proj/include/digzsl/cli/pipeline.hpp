#pragma once

#include "digzsl/core/artifact_store.hpp"
#include "digzsl/core/config.hpp"
#include "digzsl/core/dataset.hpp"
#include "digzsl/diffusion/generator.hpp"
#include "digzsl/evaluator/report.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace digzsl {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitDependency = 2, kExitNumerical = 3 };

// Maps a library exception to the process exit status.
int exit_code_for(const std::exception& e);

inline constexpr const char* kArtifactRootEnv = "DIGZSL_ARTIFACT_ROOT";

// Explicit flag first, then the environment variable, then ./artifacts.
std::filesystem::path resolve_artifact_root(const std::optional<std::filesystem::path>& flag);

struct StagePlan {
    std::vector<Stage> stages;
    std::filesystem::path config_path;

    static StagePlan all(std::filesystem::path config_path = {});
    // Every stage from `resume` through evaluate (and export).
    static StagePlan from(Stage resume, std::filesystem::path config_path = {});
    static StagePlan single(Stage s, std::filesystem::path config_path = {});
};

const std::vector<Stage>& stage_dependencies(Stage s);

// Everything a run derives from the config alone: class space, image shape,
// the toy dataset (only for dataset = toy) and the seeded toy text encoder.
struct PipelineInputs {
    ClassSpace space;
    ImageShape shape;
    std::optional<ToyDataset> toy;
    std::shared_ptr<ToyTextEncoder> encoder;
};
PipelineInputs build_inputs(const RunConfig& config);

// Per-purpose seed derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

class Pipeline {
public:
    Pipeline(RunConfig config, std::filesystem::path root);
    ~Pipeline();
    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    const RunConfig& config() const noexcept { return config_; }
    // Progress lines go here when set.
    void set_log(std::ostream* log) noexcept { log_ = log; }
    ArtifactStore& store() noexcept { return store_; }

    // Throws DependencyError naming the upstream stage whose artifact is missing or stale.
    std::vector<ArtifactHandle> run_stage(Stage s);
    std::vector<ArtifactHandle> run(const StagePlan& plan);

    const PipelineInputs& inputs() { return context(); }
    // Toy generator for this config, trained and cached on first use.
    std::shared_ptr<ToyGenerator> generator(bool train_if_missing);

    // Reports written by the last evaluate stage (or loaded from the store).
    std::vector<MetricsReport> reports() const;
    std::filesystem::path metrics_file() const;

private:
    using Context = PipelineInputs;
    Context& context();

    std::vector<ArtifactHandle> stage_prototypes();
    std::vector<ArtifactHandle> stage_train_cdm();
    std::vector<ArtifactHandle> stage_learn_dct();
    std::vector<ArtifactHandle> stage_generate();
    std::vector<ArtifactHandle> stage_train_classifier();
    std::vector<ArtifactHandle> stage_evaluate();
    std::vector<ArtifactHandle> stage_export();

    RunConfig config_;
    ArtifactStore store_;
    std::unique_ptr<Context> ctx_;
    std::ostream* log_ = nullptr;
};

// One summary line per report (acc for CZSL, U/S/H/lambda for GZSL) on `out`.
void emit_report(const std::vector<MetricsReport>& reports, std::ostream& out);
std::vector<MetricsReport> read_metrics_file(const std::filesystem::path& path);

}  // namespace digzsl
