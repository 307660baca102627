#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace digzsl {

// Pipeline stages in dependency order.
enum class Stage { Prototypes, TrainCdm, LearnDct, Generate, TrainClassifier, Evaluate, Export };

const char* stage_name(Stage s);
std::optional<Stage> parse_stage(const std::string& name);
const std::vector<Stage>& all_stages();

enum class EvalMode { Czsl, Gzsl, Both };

struct OptimizerConfig {
    double lr = 1e-3;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::size_t batch_size = 64;
};

struct CdmConfig {
    OptimizerConfig opt;
    std::size_t epochs = 40;
    double tau = 0.05;
    std::size_t input_size = 224;
    double holdout_fraction = 0.1;
    bool finetune = false;
    double finetune_lr = 1e-4;
};

struct DctConfig {
    OptimizerConfig opt{1.25e-3, 0.9, 0.999, 1e-8, 0.01, 5};
    std::size_t early_stop = 15;
    std::size_t max_steps = 15;
    std::vector<std::string> templates{"A photo of S_* [name]", "A photo of a S_* [name]",
                                       "A cropped photo of S_* [name]"};
    // Reuse the same per-image noise seeds at every optimization step.
    bool fixed_noise = true;
};

struct GeneratorConfig {
    std::size_t image_size = 32;
    std::size_t channels = 3;
    std::size_t train_timesteps = 1000;
    std::size_t sampling_steps = 50;
    double guidance_scale = 7.0;
    // Number of trailing reverse steps gradients flow through; 0 means the whole chain.
    std::size_t grad_depth = 0;
    std::size_t hidden = 256;
    std::size_t time_dim = 32;
    std::size_t train_steps = 3000;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    double cond_dropout = 0.1;
    std::vector<std::string> templates{"a photo of a [name]", "a cropped photo of a [name]", "a photo of the [name]"};
};

struct ClassifierConfig {
    OptimizerConfig opt;
    std::size_t epochs = 60;
    // Cap on real seen records per class in GZSL assembly; 0 keeps all.
    std::size_t seen_cap = 0;
};

struct ToyDatasetConfig {
    std::vector<std::string> seen{"blue_square", "green_circle", "red_circle"};
    std::vector<std::string> unseen{"green_square", "red_square"};
    std::size_t train_per_class = 120;
    std::size_t test_seen_per_class = 30;
    std::size_t test_unseen_per_class = 60;
    double pixel_noise = 0.02;
};

struct EncoderConfig {
    std::size_t embed_dim = 32;
    std::size_t proto_dim = 32;
    double embed_scale = 0.5;
};

struct BackboneConfig {
    std::size_t feature_dim = 64;
};

struct DatasetBlock {
    std::string name;
    std::optional<double> gamma;
    std::optional<double> lambda;

    bool operator==(const DatasetBlock&) const = default;
};

struct RunConfig {
    std::string dataset = "toy";
    std::string split_file;
    std::string class_file;
    EvalMode mode = EvalMode::Both;
    std::uint64_t seed = 7;
    double gamma = 0.5;
    double lambda = 0.5;
    std::size_t n_gen = 100;
    std::string prototype_template = "A photo of a [name]";
    std::string backend = "toy";
    std::string external_url;
    std::size_t workers = 2;
    bool fid_baseline = true;
    std::vector<double> lambda_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0};

    CdmConfig cdm;
    DctConfig dct;
    GeneratorConfig generator;
    ClassifierConfig classifier;
    ToyDatasetConfig toy;
    EncoderConfig encoder;
    BackboneConfig backbone;
    std::map<std::string, DatasetBlock> datasets;

    // Throws ConfigError when an invariant fails (gamma/lambda range, counts >= 1).
    void validate() const;

    // Hash over every key that influences `stage` or any stage upstream of it.
    std::string hash_for(Stage stage) const;

    // Canonical `key = value` rendering of every setting, dataset blocks last.
    std::string to_text() const;
};

// Defaults published for the four benchmarks: {gamma, lambda} per dataset.
std::map<std::string, DatasetBlock> benchmark_dataset_blocks();

// Flat `key = value` document, `#` comments, `[dataset NAME]` blocks holding
// gamma/lambda. Unknown keys are rejected with the offending line and key.
// Values from the block matching `dataset` override top-level gamma/lambda.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Applies a single `key = value` override (e.g. from the command line).
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace digzsl
