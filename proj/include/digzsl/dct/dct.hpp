#pragma once

#include "digzsl/cdm/cdm.hpp"
#include "digzsl/core/artifact_store.hpp"
#include "digzsl/core/class_space.hpp"
#include "digzsl/core/config.hpp"
#include "digzsl/diffusion/generator.hpp"
#include "digzsl/prototypes/prototype_bank.hpp"
#include "digzsl/prototypes/text_encoder.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace digzsl {

inline constexpr const char* kTokenPlaceholder = "S_*";
inline constexpr const char* kInitToken = "a";

enum class StopReason { Running, ThresholdMet, EarlyStop, MaxSteps };

std::string to_string(StopReason r);
StopReason stop_reason_from_string(const std::string& s);

struct DctStep {
    double loss = 0.0;
    double accuracy = 0.0;            // fraction of the batch whose unseen-argmax is the target
    double target_probability = 0.0;  // mean softmax(s / tau) mass on the target
};

struct TokenEmbeddingState {
    std::string class_id;
    std::string symbol = kTokenPlaceholder;
    TokenId token_id = -1;
    Eigen::VectorXd embedding;
    Eigen::VectorXd initial;
    std::vector<DctStep> history;
    StopReason stop = StopReason::Running;
    std::size_t updates = 0;

    Blob to_blob() const;
    static TokenEmbeddingState from_blob(const Blob& blob);
    bool operator==(const TokenEmbeddingState& o) const;
};

// New token id vocab_size + slot; callers give each class its own slot.
TokenEmbeddingState init_dct(const std::string& class_id, const TextEncoder& encoder, std::size_t slot);

struct PromptAssembly {
    std::string prompt_template;
    std::string class_name;
    std::vector<TokenId> tokens;
    std::size_t token_slot = 0;  // position of the learned token in `tokens`

    // Token embeddings (embed_dim x tokens.size()) with `embedding` at the slot.
    Eigen::MatrixXd embeddings(const TextEncoder& encoder, const Eigen::VectorXd& embedding) const;
    ad::Var embeddings(ad::Tape& tape, const TextEncoder& encoder, const ad::Var& embedding) const;
    std::string text() const;
};

// Template needs exactly one S_* and one [name]. The learned token keeps the id in `state`.
PromptAssembly assemble_prompt(const TokenEmbeddingState& state, const TextEncoder& encoder,
                               const std::string& prompt_template, const std::string& class_name);

struct DctRun {
    double gamma = 0.5;
    std::uint64_t seed = 0;
    SamplerSettings sampler;
};

// Guided token optimization for one unseen class. Only the state's embedding
// changes; generator and CDM enter the tape frozen.
void optimize_dct(TokenEmbeddingState& state, GeneratorAdapter& generator, CdmModel& cdm, const PrototypeBank& bank,
                  const ClassSpace& space, const DctConfig& cfg, const DctRun& run);

// Per-batch loss over the unseen classes as a function of the embedding; the
// same quantity optimize_dct differentiates. Exposed for gradient checks.
struct DctObjective {
    double loss = 0.0;
    Eigen::VectorXd grad;
    DctStep step;
    std::size_t score_rows = 0;  // classes entering the softmax denominator
};
DctObjective dct_objective(const TokenEmbeddingState& state, GeneratorAdapter& generator, CdmModel& cdm,
                           const PrototypeBank& bank, const ClassSpace& space, const DctConfig& cfg,
                           const SamplerSettings& sampler, const std::vector<std::uint64_t>& seeds, bool with_grad);

// Seeds for optimization step `step`; fixed_noise reuses the step-0 seeds.
std::vector<std::uint64_t> dct_batch_seeds(const DctConfig& cfg, std::uint64_t seed, std::size_t step);

struct GeneratedRecord {
    std::string prompt;
    std::uint64_t seed = 0;
};

struct GeneratedSampleSet {
    std::string class_id;
    ImageShape shape;
    StopReason token_stop = StopReason::Running;
    Eigen::MatrixXd images;  // one column per record
    std::vector<GeneratedRecord> records;
    std::vector<std::uint64_t> skipped_seeds;

    std::size_t size() const noexcept { return records.size(); }
    Blob to_blob() const;
    static GeneratedSampleSet from_blob(const Blob& blob);
};

// n_gen images with seeds seed_base + i, prompts cycling through cfg.templates.
// Images whose trajectory fails numerically are skipped and recorded; more
// than 5% skipped aborts with the NumericalFailure.
GeneratedSampleSet synthesize_class_set(const TokenEmbeddingState& state, const GeneratorAdapter& generator,
                                        const ClassSpace& space, const DctConfig& cfg, const SamplerSettings& sampler,
                                        std::size_t n_gen, std::uint64_t seed_base);

// Binary PPM per image plus index.json with prompt and seed per file.
void write_image_directory(const GeneratedSampleSet& set, const std::filesystem::path& dir);

}  // namespace digzsl
