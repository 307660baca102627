#include "digzsl/cli/pipeline.hpp"

#include "digzsl/cdm/cdm.hpp"
#include "digzsl/classifier/classifier.hpp"
#include "digzsl/cli/worker_pool.hpp"
#include "digzsl/core/dataset.hpp"
#include "digzsl/core/errors.hpp"
#include "digzsl/core/text.hpp"
#include "digzsl/dct/dct.hpp"
#include "digzsl/diffusion/generator.hpp"
#include "digzsl/evaluator/metrics.hpp"
#include "digzsl/prototypes/prototype_bank.hpp"
#include "digzsl/prototypes/text_encoder.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace digzsl {

namespace fs = std::filesystem;

namespace {

constexpr const char* kGeneratorDir = "generator";

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) { return fnv1a64(tag, seed); }

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
    if (dynamic_cast<const DependencyError*>(&e)) return kExitDependency;
    if (dynamic_cast<const NumericalFailure*>(&e)) return kExitNumerical;
    return 4;
}

fs::path resolve_artifact_root(const std::optional<fs::path>& flag) {
    if (flag && !flag->empty()) return *flag;
    if (const char* env = std::getenv(kArtifactRootEnv); env && *env) return env;
    return "artifacts";
}

StagePlan StagePlan::all(fs::path config_path) { return {all_stages(), std::move(config_path)}; }

StagePlan StagePlan::from(Stage resume, fs::path config_path) {
    StagePlan p;
    p.config_path = std::move(config_path);
    for (Stage s : all_stages()) {
        if (static_cast<int>(s) >= static_cast<int>(resume)) p.stages.push_back(s);
    }
    return p;
}

StagePlan StagePlan::single(Stage s, fs::path config_path) { return {{s}, std::move(config_path)}; }

const std::vector<Stage>& stage_dependencies(Stage s) {
    static const std::vector<Stage> none;
    static const std::vector<Stage> cdm{Stage::Prototypes};
    static const std::vector<Stage> dct{Stage::Prototypes, Stage::TrainCdm};
    static const std::vector<Stage> gen{Stage::LearnDct};
    static const std::vector<Stage> clf{Stage::TrainCdm, Stage::Generate};
    static const std::vector<Stage> eval{Stage::Prototypes, Stage::TrainCdm, Stage::Generate, Stage::TrainClassifier};
    static const std::vector<Stage> exp{Stage::LearnDct};
    switch (s) {
        case Stage::Prototypes: return none;
        case Stage::TrainCdm: return cdm;
        case Stage::LearnDct: return dct;
        case Stage::Generate: return gen;
        case Stage::TrainClassifier: return clf;
        case Stage::Evaluate: return eval;
        case Stage::Export: return exp;
    }
    return none;
}

Pipeline::Pipeline(RunConfig config, fs::path root) : config_(std::move(config)), store_(std::move(root)) {
    config_.validate();
}

Pipeline::~Pipeline() = default;

PipelineInputs build_inputs(const RunConfig& config) {
    PipelineInputs in;
    const auto& g = config.generator;
    in.shape = {g.channels, g.image_size, g.image_size};
    if (config.dataset == "toy") {
        in.toy = make_toy_dataset(config.toy, in.shape, config.seed);
        in.space = in.toy->space;
    } else {
        if (config.class_file.empty()) {
            throw ConfigError("dataset '" + config.dataset + "' needs class_file", 0, "class_file");
        }
        in.space = load_class_csv(config.class_file);
    }
    std::vector<std::string> names;
    for (const auto& c : in.space.classes()) names.push_back(c.display_name);
    auto templates = g.templates;
    templates.insert(templates.end(), config.dct.templates.begin(), config.dct.templates.end());
    templates.push_back(config.prototype_template);
    in.encoder = std::make_shared<ToyTextEncoder>(build_vocabulary(names, templates), config.encoder,
                                                  derive_seed(config.seed, "encoder"));
    return in;
}

Pipeline::Context& Pipeline::context() {
    if (!ctx_) ctx_ = std::make_unique<Context>(build_inputs(config_));
    return *ctx_;
}

namespace {

struct StageIo {
    const RunConfig& cfg;
    ArtifactStore& store;
    Stage consumer;

    Blob require(Stage upstream, const std::string& name) const {
        const std::string up = stage_name(upstream);
        const std::string me = stage_name(consumer);
        if (!store.exists(up, name)) {
            throw DependencyError(me + " needs artifact " + up + "/" + name + ", which is missing; run stage " + up + " first",
                                  up);
        }
        try {
            return store.load(up, name, cfg.hash_for(upstream));
        } catch (const VersionError& e) {
            throw DependencyError(me + " needs artifact " + up + "/" + name + ", which is stale (" + e.what() +
                                      "); rerun stage " + up,
                                  up);
        }
    }

    ArtifactHandle save(const std::string& name, const Blob& blob) const {
        return store.save(stage_name(consumer), name, blob, cfg.hash_for(consumer), cfg.seed);
    }
};

void require_images(const RunConfig& cfg) {
    if (cfg.dataset != "toy") {
        throw ConfigError("dataset '" + cfg.dataset + "' has no bundled images; image stages run on the toy dataset only",
                          0, "dataset");
    }
}

void require_toy_backend(const RunConfig& cfg) {
    if (cfg.backend != "toy") {
        throw ConfigError("backend '" + cfg.backend + "' is not built into this binary; use backend = toy", 0, "backend");
    }
}

// The generator depends on the data, the encoder and its own training keys,
// but not on gamma or the token-learning settings.
std::string generator_hash(const RunConfig& cfg) {
    std::istringstream in(cfg.to_text());
    std::string line, blob = cfg.hash_for(Stage::Prototypes) + "\n";
    while (std::getline(in, line)) {
        if (line.rfind("generator.", 0) == 0 && line.rfind("generator.grad_depth", 0) != 0 &&
            line.rfind("generator.sampling_steps", 0) != 0 && line.rfind("generator.guidance_scale", 0) != 0) {
            blob += line + "\n";
        }
    }
    return hex64(fnv1a64(blob));
}

}  // namespace

std::vector<ArtifactHandle> Pipeline::run_stage(Stage s) {
    switch (s) {
        case Stage::Prototypes: return stage_prototypes();
        case Stage::TrainCdm: return stage_train_cdm();
        case Stage::LearnDct: return stage_learn_dct();
        case Stage::Generate: return stage_generate();
        case Stage::TrainClassifier: return stage_train_classifier();
        case Stage::Evaluate: return stage_evaluate();
        case Stage::Export: return stage_export();
    }
    throw StructuralError("unknown stage");
}

std::vector<ArtifactHandle> Pipeline::run(const StagePlan& plan) {
    for (std::size_t i = 1; i < plan.stages.size(); ++i) {
        if (static_cast<int>(plan.stages[i]) <= static_cast<int>(plan.stages[i - 1])) {
            throw ConfigError("stage plan out of dependency order at '" + std::string(stage_name(plan.stages[i])) + "'", 0,
                              "stage");
        }
    }
    std::vector<ArtifactHandle> out;
    for (Stage s : plan.stages) {
        if (log_) *log_ << "[" << stage_name(s) << "] running\n";
        auto h = run_stage(s);
        out.insert(out.end(), h.begin(), h.end());
    }
    return out;
}

std::vector<ArtifactHandle> Pipeline::stage_prototypes() {
    auto& ctx = context();
    StageIo io{config_, store_, Stage::Prototypes};
    const auto bank = build_prototypes(ctx.space, *ctx.encoder, config_.prototype_template);
    return {io.save("bank", bank.to_blob())};
}

std::vector<ArtifactHandle> Pipeline::stage_train_cdm() {
    auto& ctx = context();
    StageIo io{config_, store_, Stage::TrainCdm};
    const auto bank = PrototypeBank::from_blob(io.require(Stage::Prototypes, "bank"));
    require_images(config_);
    auto backbone = std::make_shared<ToyBackbone>(ctx.shape, config_.backbone.feature_dim, derive_seed(config_.seed, "backbone"));
    auto cdm = train_cdm_images(ctx.toy->train_seen, backbone, ctx.space, bank, config_.cdm, derive_seed(config_.seed, "cdm"));
    if (log_) {
        *log_ << "[train-cdm] seen accuracy " << percent(cdm.meta().final_seen_accuracy) << ", holdout "
              << percent(cdm.meta().holdout_accuracy) << "\n";
    }
    return {io.save("cdm", cdm.to_blob())};
}

std::shared_ptr<ToyGenerator> Pipeline::generator(bool train_if_missing) {
    auto& ctx = context();
    require_images(config_);
    require_toy_backend(config_);
    const std::string hash = generator_hash(config_);
    if (store_.exists(kGeneratorDir, "toy")) {
        const auto loaded = store_.load_with_header(kGeneratorDir, "toy");
        if (loaded.config_hash == hash) return std::make_shared<ToyGenerator>(ToyGenerator::from_blob(loaded.blob, ctx.encoder));
    }
    if (!train_if_missing) {
        throw DependencyError("generator checkpoint missing or stale; rerun stage learn-dct", stage_name(Stage::LearnDct));
    }
    GeneratorTrainingReport report;
    auto gen = std::make_shared<ToyGenerator>(train_toy_generator(ctx.toy->train_seen, ctx.space, ctx.encoder,
                                                                  config_.generator, ctx.shape,
                                                                  derive_seed(config_.seed, "generator"), &report));
    if (log_) {
        for (const auto& w : report.warnings) *log_ << "[learn-dct] warning: " << w << "\n";
        if (!report.losses.empty()) *log_ << "[learn-dct] generator final loss " << report.losses.back() << "\n";
    }
    store_.save(kGeneratorDir, "toy", gen->to_blob(), hash, config_.seed);
    return gen;
}

std::vector<ArtifactHandle> Pipeline::stage_learn_dct() {
    auto& ctx = context();
    StageIo io{config_, store_, Stage::LearnDct};
    const auto bank = PrototypeBank::from_blob(io.require(Stage::Prototypes, "bank"));
    const Blob cdm_blob = io.require(Stage::TrainCdm, "cdm");
    const auto gen = generator(true);
    const Blob gen_blob = gen->to_blob();

    const auto& unseen = ctx.space.unseen();
    std::vector<TokenEmbeddingState> states(unseen.size());
    parallel_for(unseen.size(), config_.workers, [&](std::size_t i) {
        // Each worker owns its generator and CDM so tape bookkeeping never crosses threads.
        ToyGenerator g = ToyGenerator::from_blob(gen_blob, ctx.encoder);
        CdmModel cdm = CdmModel::from_blob(cdm_blob);
        const std::string& id = ctx.space.id(unseen[i]);
        auto state = init_dct(id, *ctx.encoder, i);
        DctRun run{config_.gamma, derive_seed(config_.seed, "dct/" + id), sampler_settings(config_.generator)};
        optimize_dct(state, g, cdm, bank, ctx.space, config_.dct, run);
        states[i] = std::move(state);
    });

    std::vector<ArtifactHandle> out;
    for (const auto& s : states) {
        if (log_) {
            *log_ << "[learn-dct] " << s.class_id << ": " << s.updates << " updates, " << to_string(s.stop) << "\n";
        }
        out.push_back(io.save(s.class_id, s.to_blob()));
    }
    return out;
}

std::vector<ArtifactHandle> Pipeline::stage_generate() {
    auto& ctx = context();
    StageIo io{config_, store_, Stage::Generate};
    std::vector<TokenEmbeddingState> states;
    for (std::size_t c : ctx.space.unseen()) {
        states.push_back(TokenEmbeddingState::from_blob(io.require(Stage::LearnDct, ctx.space.id(c))));
    }
    const auto gen = generator(false);
    const auto sampler = sampler_settings(config_.generator);

    std::vector<GeneratedSampleSet> sets(states.size());
    parallel_for(states.size(), config_.workers, [&](std::size_t i) {
        const std::uint64_t base = derive_seed(config_.seed, "generate/" + states[i].class_id);
        sets[i] = synthesize_class_set(states[i], *gen, ctx.space, config_.dct, sampler, config_.n_gen, base);
    });

    std::vector<ArtifactHandle> out;
    for (const auto& set : sets) {
        write_image_directory(set, store_.stage_dir(stage_name(Stage::Generate)) / "images" / set.class_id);
        if (log_ && !set.skipped_seeds.empty()) {
            *log_ << "[generate] " << set.class_id << ": skipped " << set.skipped_seeds.size() << " images\n";
        }
        out.push_back(io.save(set.class_id, set.to_blob()));
    }
    return out;
}

namespace {

std::vector<ZslMode> modes_of(EvalMode m) {
    switch (m) {
        case EvalMode::Czsl: return {ZslMode::Czsl};
        case EvalMode::Gzsl: return {ZslMode::Gzsl};
        case EvalMode::Both: return {ZslMode::Czsl, ZslMode::Gzsl};
    }
    return {};
}

LabeledSet to_features(const CdmModel& cdm, const LabeledSet& images) {
    return {cdm.features(images.data), images.labels, images.ids};
}

}  // namespace

std::vector<ArtifactHandle> Pipeline::stage_train_classifier() {
    auto& ctx = context();
    StageIo io{config_, store_, Stage::TrainClassifier};
    const auto cdm = CdmModel::from_blob(io.require(Stage::TrainCdm, "cdm"));
    std::vector<GeneratedSampleSet> sets;
    for (std::size_t c : ctx.space.unseen()) {
        sets.push_back(GeneratedSampleSet::from_blob(io.require(Stage::Generate, ctx.space.id(c))));
    }
    require_images(config_);
    const auto seen = to_features(cdm, ctx.toy->train_seen);

    std::vector<ArtifactHandle> out;
    for (ZslMode mode : modes_of(config_.mode)) {
        const auto assembly =
            assemble_training_set(mode, seen, sets, cdm.backbone(), ctx.space, BalancePolicy{config_.classifier.seen_cap});
        const auto clf = train_classifier(assembly, config_.classifier, 2 * config_.encoder.proto_dim,
                                          derive_seed(config_.seed, "classifier/" + to_string(mode)));
        if (log_) {
            *log_ << "[train-classifier] " << to_string(mode) << ": " << assembly.features.size()
                  << " records, train accuracy " << percent(clf.meta().train_accuracy) << "\n";
        }
        out.push_back(io.save(to_string(mode), clf.to_blob(ctx.space)));
    }
    return out;
}

std::vector<ArtifactHandle> Pipeline::stage_evaluate() {
    auto& ctx = context();
    StageIo io{config_, store_, Stage::Evaluate};
    const auto bank = PrototypeBank::from_blob(io.require(Stage::Prototypes, "bank"));
    const auto cdm = CdmModel::from_blob(io.require(Stage::TrainCdm, "cdm"));
    std::vector<GeneratedSampleSet> sets;
    for (std::size_t c : ctx.space.unseen()) {
        sets.push_back(GeneratedSampleSet::from_blob(io.require(Stage::Generate, ctx.space.id(c))));
    }
    std::vector<ZslClassifier> classifiers;
    for (ZslMode mode : modes_of(config_.mode)) {
        classifiers.push_back(ZslClassifier::from_blob(io.require(Stage::TrainClassifier, to_string(mode)), ctx.space));
    }
    require_images(config_);
    const auto test_seen = to_features(cdm, ctx.toy->test_seen);
    const auto test_unseen = to_features(cdm, ctx.toy->test_unseen);

    // FID between generated and real unseen test images, in backbone feature space.
    nlohmann::json fid_json = {{"extractor", cdm.backbone().tag()}};
    {
        Eigen::Index total = 0;
        for (const auto& s : sets) total += s.images.cols();
        Eigen::MatrixXd generated(test_unseen.data.rows(), total);
        Eigen::Index at = 0;
        for (const auto& s : sets) {
            generated.middleCols(at, s.images.cols()) = cdm.features(s.images);
            at += s.images.cols();
        }
        const auto real = summarize(test_unseen.data);
        fid_json["digzsl"] = fid(summarize(generated), real);
        if (config_.fid_baseline) {
            // Same seeds, plain class-name prompt without the learned token.
            const auto gen = generator(false);
            const auto sampler = sampler_settings(config_.generator);
            Eigen::MatrixXd baseline(test_unseen.data.rows(), total);
            at = 0;
            for (const auto& s : sets) {
                const auto& info = ctx.space.at(ctx.space.index_of(s.class_id));
                const Eigen::VectorXd cond =
                    gen->encode_text(fill_name(config_.generator.templates.front(), normalize_class_name(info.display_name)));
                std::vector<std::uint64_t> seeds;
                for (const auto& r : s.records) seeds.push_back(r.seed);
                for (std::size_t k = 0; k < seeds.size(); k += 25) {
                    const std::size_t n = std::min<std::size_t>(25, seeds.size() - k);
                    std::vector<std::uint64_t> chunk(seeds.begin() + static_cast<std::ptrdiff_t>(k),
                                                     seeds.begin() + static_cast<std::ptrdiff_t>(k + n));
                    const auto batch = gen->sample(cond.replicate(1, static_cast<Eigen::Index>(n)), chunk, sampler);
                    baseline.middleCols(at, static_cast<Eigen::Index>(n)) = cdm.features(batch.images);
                    at += static_cast<Eigen::Index>(n);
                }
            }
            fid_json["baseline"] = fid(summarize(baseline), real);
        }
    }
    nlohmann::json dct_json = nlohmann::json::array();
    for (const auto& s : sets) {
        dct_json.push_back({{"class_id", s.class_id}, {"token_stop", to_string(s.token_stop)},
                            {"generated", s.size()}, {"skipped", s.skipped_seeds.size()}});
    }

    std::vector<MetricsReport> reports;
    const std::string hash = config_.hash_for(Stage::Evaluate);
    for (const auto& clf : classifiers) {
        MetricsReport r;
        if (clf.mode() == ZslMode::Czsl) {
            r = evaluate_czsl(clf, test_unseen, ctx.space);
        } else {
            r = evaluate_gzsl(clf, test_seen, test_unseen, ctx.space, config_.lambda);
            const auto curve = calibration_sweep(clf, test_seen, test_unseen, ctx.space, config_.lambda_grid);
            r.sweep = curve.points;
            const auto& best = curve.best_point();
            r.extras["sweep_best"] = {{"lambda", best.lambda}, {"U", best.unseen}, {"S", best.seen}, {"H", best.harmonic}};
        }
        r.config_hash = hash;
        r.extras["fid"] = fid_json;
        r.extras["generated"] = dct_json;
        r.extras["cdm_unseen_acc"] = cdm_accuracy(cdm, test_unseen, bank, ctx.space.unseen());
        r.extras["gamma"] = config_.gamma;
        r.extras["dataset"] = config_.dataset;
        reports.push_back(std::move(r));
    }

    nlohmann::json doc;
    doc["config_hash"] = hash;
    doc["seed"] = config_.seed;
    doc["reports"] = nlohmann::json::array();
    for (const auto& r : reports) doc["reports"].push_back(r.to_json());
    Blob blob;
    blob.kind = "metrics";
    blob.meta = doc;
    auto handle = io.save("metrics", blob);

    const fs::path file = metrics_file();
    fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("cannot write " + file.string());
    return {handle};
}

std::vector<ArtifactHandle> Pipeline::stage_export() {
    auto& ctx = context();
    StageIo io{config_, store_, Stage::Export};
    std::vector<TokenEmbeddingState> states;
    for (std::size_t c : ctx.space.unseen()) {
        states.push_back(TokenEmbeddingState::from_blob(io.require(Stage::LearnDct, ctx.space.id(c))));
    }
    const std::string text = export_embeddings(states, ctx.space);
    const fs::path file = store_.stage_dir(stage_name(Stage::Export)) / "embeddings.tsv";
    fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw IoError("cannot write " + file.string());

    Blob blob;
    blob.kind = "embedding-export";
    Eigen::MatrixXd table(states.front().embedding.size(), static_cast<Eigen::Index>(states.size()));
    nlohmann::json ids = nlohmann::json::array();
    for (std::size_t i = 0; i < states.size(); ++i) {
        table.col(static_cast<Eigen::Index>(i)) = states[i].embedding;
        ids.push_back(states[i].class_id);
    }
    blob.meta = {{"class_ids", ids}, {"file", file.filename().string()}};
    blob.add("embeddings", table);
    return {io.save("embeddings", blob)};
}

fs::path Pipeline::metrics_file() const { return store_.stage_dir(stage_name(Stage::Evaluate)) / "metrics.json"; }

std::vector<MetricsReport> Pipeline::reports() const { return read_metrics_file(metrics_file()); }

std::vector<MetricsReport> read_metrics_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed metrics file " + path.string() + ": " + e.what());
    }
    std::vector<MetricsReport> out;
    for (const auto& r : doc.at("reports")) out.push_back(MetricsReport::from_json(r));
    return out;
}

void emit_report(const std::vector<MetricsReport>& reports, std::ostream& out) {
    for (const auto& r : reports) {
        if (r.mode == ZslMode::Czsl) {
            out << "CZSL acc=" << percent(r.acc) << "\n";
        } else {
            out << "GZSL U=" << percent(r.unseen) << " S=" << percent(r.seen) << " H=" << percent(r.harmonic)
                << " lambda=" << (r.lambda ? format_double(*r.lambda) : std::string("-")) << "\n";
        }
    }
}

}  // namespace digzsl
