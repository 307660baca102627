#include "digzsl/dct/dct.hpp"

#include "digzsl/autodiff/optim.hpp"
#include "digzsl/core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

namespace digzsl {

namespace {

const std::string kSlotWord = "s_*";
const std::string kNameWord = "[name]";

std::size_t unseen_position(const ClassSpace& space, const std::string& class_id) {
    const std::size_t idx = space.index_of(class_id);
    if (space.is_seen(idx)) {
        throw ProtocolViolation("class token optimization requested for seen class '" + class_id + "'");
    }
    const auto& u = space.unseen();
    return static_cast<std::size_t>(std::find(u.begin(), u.end(), idx) - u.begin());
}

DctStep batch_statistics(const Eigen::MatrixXd& scores, std::size_t target, double tau, double loss) {
    DctStep st;
    st.loss = loss;
    const Eigen::Index b = scores.cols();
    std::size_t hits = 0;
    double prob = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
        Eigen::Index best = 0;
        for (Eigen::Index r = 1; r < scores.rows(); ++r) {
            if (scores(r, j) > scores(best, j)) best = r;
        }
        if (static_cast<std::size_t>(best) == target) ++hits;
        const Eigen::VectorXd z = scores.col(j) / tau;
        const double m = z.maxCoeff();
        const double denom = (z.array() - m).exp().sum();
        prob += std::exp(z[static_cast<Eigen::Index>(target)] - m) / denom;
    }
    st.accuracy = static_cast<double>(hits) / static_cast<double>(b);
    st.target_probability = prob / static_cast<double>(b);
    return st;
}

// Runs the batch forward; `want_grad` sees the batch statistics and decides
// whether the backward pass is needed.
DctObjective run_objective(const TokenEmbeddingState& state, GeneratorAdapter& generator, CdmModel& cdm,
                           const PrototypeBank& bank, const ClassSpace& space, const DctConfig& cfg,
                           const SamplerSettings& sampler, const std::vector<std::uint64_t>& seeds,
                           const std::function<bool(const DctStep&)>& want_grad) {
    const std::size_t target = unseen_position(space, state.class_id);
    if (cfg.templates.empty()) throw ConfigError("dct: no prompt templates", 0, "dct.templates");
    if (seeds.empty()) throw StructuralError("dct: empty batch");
    const auto& enc = generator.text_encoder();
    const std::string name = space.at(space.index_of(state.class_id)).display_name;

    ad::Tape tape;
    tape.set_parameters_frozen(true);
    ad::Var e = tape.leaf(state.embedding);

    std::vector<ad::Var> per_template;
    for (const auto& tpl : cfg.templates) {
        const auto pa = assemble_prompt(state, enc, tpl, name);
        per_template.push_back(generator.encode_prompt(tape, pa.embeddings(tape, enc, e)));
    }
    std::vector<ad::Var> cols;
    for (std::size_t j = 0; j < seeds.size(); ++j) cols.push_back(per_template[j % per_template.size()]);
    ad::Var cond = ad::concat_cols(cols);

    ad::Var images = generator.sample(tape, cond, seeds, sampler);
    ad::Var scores = cdm.score_images(tape, images, bank.normalized(space.unseen()));
    const std::vector<std::size_t> targets(seeds.size(), target);
    ad::Var loss = ad::cross_entropy(scores, targets, 1.0 / cdm.tau());

    DctObjective out;
    out.loss = loss.scalar();
    out.score_rows = static_cast<std::size_t>(scores.rows());
    out.step = batch_statistics(scores.value(), target, cdm.tau(), out.loss);
    if (!std::isfinite(out.loss)) return out;
    if (want_grad(out.step)) {
        tape.backward(loss);
        out.grad = tape.grad(e);
    }
    return out;
}

void write_ppm(const std::filesystem::path& path, const Eigen::VectorXd& image, const ImageShape& shape) {
    if (shape.channels != 1 && shape.channels != 3) throw StructuralError("ppm export needs 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << (shape.channels == 3 ? "P6\n" : "P5\n") << shape.width << ' ' << shape.height << "\n255\n";
    const std::size_t plane = shape.height * shape.width;
    for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t c = 0; c < shape.channels; ++c) {
            const double v = std::clamp(image[static_cast<Eigen::Index>(c * plane + p)], 0.0, 1.0);
            out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
    }
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::Running: return "running";
        case StopReason::ThresholdMet: return "threshold-met";
        case StopReason::EarlyStop: return "early-stop";
        case StopReason::MaxSteps: return "max-steps";
    }
    return "running";
}

StopReason stop_reason_from_string(const std::string& s) {
    for (auto r : {StopReason::Running, StopReason::ThresholdMet, StopReason::EarlyStop, StopReason::MaxSteps}) {
        if (to_string(r) == s) return r;
    }
    throw StructuralError("unknown stop reason '" + s + "'");
}

bool TokenEmbeddingState::operator==(const TokenEmbeddingState& o) const {
    if (class_id != o.class_id || symbol != o.symbol || token_id != o.token_id || stop != o.stop ||
        updates != o.updates || history.size() != o.history.size()) {
        return false;
    }
    if (embedding.size() != o.embedding.size() || embedding != o.embedding) return false;
    if (initial.size() != o.initial.size() || initial != o.initial) return false;
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto &a = history[i], &b = o.history[i];
        if (a.loss != b.loss || a.accuracy != b.accuracy || a.target_probability != b.target_probability) return false;
    }
    return true;
}

Blob TokenEmbeddingState::to_blob() const {
    Blob b;
    b.kind = "dct-state";
    b.meta["class_id"] = class_id;
    b.meta["symbol"] = symbol;
    b.meta["token_id"] = token_id;
    b.meta["stop"] = to_string(stop);
    b.meta["updates"] = updates;
    Eigen::MatrixXd hist(3, static_cast<Eigen::Index>(history.size()));
    for (std::size_t i = 0; i < history.size(); ++i) {
        hist.col(static_cast<Eigen::Index>(i)) << history[i].loss, history[i].accuracy, history[i].target_probability;
    }
    b.add("embedding", embedding);
    b.add("initial", initial);
    b.add("history", hist);
    return b;
}

TokenEmbeddingState TokenEmbeddingState::from_blob(const Blob& blob) {
    if (blob.kind != "dct-state") throw StructuralError("expected a dct-state artifact, got '" + blob.kind + "'");
    TokenEmbeddingState s;
    s.class_id = blob.meta.at("class_id").get<std::string>();
    s.symbol = blob.meta.at("symbol").get<std::string>();
    s.token_id = blob.meta.at("token_id").get<TokenId>();
    s.stop = stop_reason_from_string(blob.meta.at("stop").get<std::string>());
    s.updates = blob.meta.at("updates").get<std::size_t>();
    s.embedding = blob.tensor("embedding");
    s.initial = blob.tensor("initial");
    const auto& h = blob.tensor("history");
    for (Eigen::Index i = 0; i < h.cols(); ++i) s.history.push_back({h(0, i), h(1, i), h(2, i)});
    return s;
}

TokenEmbeddingState init_dct(const std::string& class_id, const TextEncoder& encoder, std::size_t slot) {
    const auto a = encoder.token_id(kInitToken);
    if (!a) throw StructuralError("text encoder has no token '" + std::string(kInitToken) + "' to initialize from");
    TokenEmbeddingState s;
    s.class_id = class_id;
    s.token_id = static_cast<TokenId>(encoder.vocab_size() + slot);
    s.embedding = encoder.token_embedding(*a);
    s.initial = s.embedding;
    return s;
}

PromptAssembly assemble_prompt(const TokenEmbeddingState& state, const TextEncoder& encoder,
                               const std::string& prompt_template, const std::string& class_name) {
    const auto words = normalize_words(prompt_template);
    const auto slots = std::count(words.begin(), words.end(), kSlotWord);
    const auto names = std::count(words.begin(), words.end(), kNameWord);
    if (slots != 1 || names != 1) {
        throw StructuralError("prompt template '" + prompt_template + "' needs exactly one " + kTokenPlaceholder +
                              " and one [name]");
    }
    if (state.token_id < static_cast<TokenId>(encoder.vocab_size())) {
        throw StructuralError("learned token id collides with the encoder vocabulary");
    }
    PromptAssembly pa;
    pa.prompt_template = prompt_template;
    pa.class_name = class_name;
    for (const auto& w : words) {
        if (w == kSlotWord) {
            pa.token_slot = pa.tokens.size();
            pa.tokens.push_back(state.token_id);
        } else if (w == kNameWord) {
            for (const auto& n : normalize_words(normalize_class_name(class_name))) {
                const auto id = encoder.token_id(n);
                if (!id) throw StructuralError("cannot tokenize '" + n + "': not in the encoder vocabulary");
                pa.tokens.push_back(*id);
            }
        } else {
            const auto id = encoder.token_id(w);
            if (!id) throw StructuralError("cannot tokenize '" + w + "': not in the encoder vocabulary");
            pa.tokens.push_back(*id);
        }
    }
    return pa;
}

std::string PromptAssembly::text() const { return fill_name(prompt_template, class_name); }

Eigen::MatrixXd PromptAssembly::embeddings(const TextEncoder& encoder, const Eigen::VectorXd& embedding) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(encoder.embed_dim()), static_cast<Eigen::Index>(tokens.size()));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        m.col(static_cast<Eigen::Index>(i)) = i == token_slot ? embedding : encoder.token_embedding(tokens[i]);
    }
    return m;
}

ad::Var PromptAssembly::embeddings(ad::Tape& tape, const TextEncoder& encoder, const ad::Var& embedding) const {
    const Eigen::MatrixXd all = embeddings(encoder, embedding.value());
    const auto slot = static_cast<Eigen::Index>(token_slot);
    std::vector<ad::Var> parts;
    if (slot > 0) parts.push_back(tape.constant(all.leftCols(slot)));
    parts.push_back(embedding);
    if (slot + 1 < all.cols()) parts.push_back(tape.constant(all.rightCols(all.cols() - slot - 1)));
    return ad::concat_cols(parts);
}

std::vector<std::uint64_t> dct_batch_seeds(const DctConfig& cfg, std::uint64_t seed, std::size_t step) {
    const std::size_t b = cfg.opt.batch_size;
    const std::uint64_t base = seed + (cfg.fixed_noise ? 0 : static_cast<std::uint64_t>(step * b));
    std::vector<std::uint64_t> seeds(b);
    for (std::size_t j = 0; j < b; ++j) seeds[j] = base + j;
    return seeds;
}

DctObjective dct_objective(const TokenEmbeddingState& state, GeneratorAdapter& generator, CdmModel& cdm,
                           const PrototypeBank& bank, const ClassSpace& space, const DctConfig& cfg,
                           const SamplerSettings& sampler, const std::vector<std::uint64_t>& seeds, bool with_grad) {
    return run_objective(state, generator, cdm, bank, space, cfg, sampler, seeds,
                         [with_grad](const DctStep&) { return with_grad; });
}

void optimize_dct(TokenEmbeddingState& state, GeneratorAdapter& generator, CdmModel& cdm, const PrototypeBank& bank,
                  const ClassSpace& space, const DctConfig& cfg, const DctRun& run) {
    unseen_position(space, state.class_id);
    if (!generator.differentiable()) throw StructuralError("dct: generator '" + generator.tag() + "' is not differentiable");
    if (cfg.opt.batch_size == 0) throw ConfigError("dct: batch size must be positive", 0, "dct.batch_size");

    ad::Parameter e("dct." + state.class_id, state.embedding);
    ad::AdamW opt({&e}, {cfg.opt.lr, cfg.opt.beta1, cfg.opt.beta2, cfg.opt.eps, cfg.opt.weight_decay});
    const std::size_t budget = std::min(cfg.early_stop, cfg.max_steps);
    state.history.clear();
    state.updates = 0;
    state.stop = StopReason::Running;

    for (std::size_t step = 0; step < budget; ++step) {
        const auto seeds = dct_batch_seeds(cfg, run.seed, step);
        auto obj = run_objective(state, generator, cdm, bank, space, cfg, run.sampler, seeds,
                                 [&](const DctStep& s) { return s.accuracy < run.gamma; });
        if (!std::isfinite(obj.loss)) {
            throw NumericalFailure("dct: non-finite loss for class '" + state.class_id + "' at step " +
                                       std::to_string(step),
                                   static_cast<long>(step));
        }
        state.history.push_back(obj.step);
        if (obj.step.accuracy >= run.gamma) {
            state.stop = StopReason::ThresholdMet;
            return;
        }
        e.grad = obj.grad;
        opt.step();
        state.embedding = e.value;
        ++state.updates;
    }
    state.stop = cfg.early_stop <= cfg.max_steps ? StopReason::EarlyStop : StopReason::MaxSteps;
}

GeneratedSampleSet synthesize_class_set(const TokenEmbeddingState& state, const GeneratorAdapter& generator,
                                        const ClassSpace& space, const DctConfig& cfg, const SamplerSettings& sampler,
                                        std::size_t n_gen, std::uint64_t seed_base) {
    if (n_gen == 0) throw ConfigError("n_gen must be at least 1", 0, "n_gen");
    if (cfg.templates.empty()) throw ConfigError("dct: no prompt templates", 0, "dct.templates");
    const auto& enc = generator.text_encoder();
    const std::string name = space.at(space.index_of(state.class_id)).display_name;

    std::vector<PromptAssembly> prompts;
    Eigen::MatrixXd conds(static_cast<Eigen::Index>(generator.cond_dim()), static_cast<Eigen::Index>(cfg.templates.size()));
    for (std::size_t k = 0; k < cfg.templates.size(); ++k) {
        prompts.push_back(assemble_prompt(state, enc, cfg.templates[k], name));
        conds.col(static_cast<Eigen::Index>(k)) = generator.encode_prompt(prompts.back().embeddings(enc, state.embedding));
    }

    GeneratedSampleSet set;
    set.class_id = state.class_id;
    set.shape = generator.image_shape();
    set.token_stop = state.stop;
    std::vector<Eigen::VectorXd> kept;

    auto run_chunk = [&](std::size_t begin, std::size_t end) {
        std::vector<std::uint64_t> seeds;
        Eigen::MatrixXd cond(conds.rows(), static_cast<Eigen::Index>(end - begin));
        for (std::size_t i = begin; i < end; ++i) {
            seeds.push_back(seed_base + i);
            cond.col(static_cast<Eigen::Index>(i - begin)) = conds.col(static_cast<Eigen::Index>(i % prompts.size()));
        }
        return generator.sample(cond, seeds, sampler).images;
    };

    const std::size_t chunk = 25;
    NumericalFailure last("", -1);
    for (std::size_t begin = 0; begin < n_gen; begin += chunk) {
        const std::size_t end = std::min(n_gen, begin + chunk);
        std::vector<std::pair<std::size_t, Eigen::VectorXd>> got;
        try {
            const Eigen::MatrixXd imgs = run_chunk(begin, end);
            for (std::size_t i = begin; i < end; ++i) got.emplace_back(i, imgs.col(static_cast<Eigen::Index>(i - begin)));
        } catch (const NumericalFailure&) {
            // Isolate the failing trajectories one at a time.
            for (std::size_t i = begin; i < end; ++i) {
                try {
                    got.emplace_back(i, run_chunk(i, i + 1).col(0));
                } catch (const NumericalFailure& f) {
                    set.skipped_seeds.push_back(seed_base + i);
                    last = f;
                }
            }
        }
        for (auto& [i, img] : got) {
            set.records.push_back({prompts[i % prompts.size()].text(), seed_base + i});
            kept.push_back(std::move(img));
        }
    }
    if (set.skipped_seeds.size() * 20 > n_gen) {
        throw NumericalFailure("synthesis for '" + state.class_id + "' skipped " + std::to_string(set.skipped_seeds.size()) +
                                   " of " + std::to_string(n_gen) + " images (cap 5%): " + last.what(),
                               last.step());
    }
    set.images.resize(static_cast<Eigen::Index>(set.shape.size()), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j) set.images.col(static_cast<Eigen::Index>(j)) = kept[j];
    return set;
}

Blob GeneratedSampleSet::to_blob() const {
    Blob b;
    b.kind = "generated-set";
    b.meta["class_id"] = class_id;
    b.meta["shape"] = {shape.channels, shape.height, shape.width};
    b.meta["token_stop"] = to_string(token_stop);
    auto recs = nlohmann::json::array();
    for (const auto& r : records) recs.push_back({{"prompt", r.prompt}, {"seed", r.seed}});
    b.meta["records"] = recs;
    b.meta["skipped_seeds"] = skipped_seeds;
    b.add("images", images);
    return b;
}

GeneratedSampleSet GeneratedSampleSet::from_blob(const Blob& blob) {
    if (blob.kind != "generated-set") throw StructuralError("expected a generated-set artifact, got '" + blob.kind + "'");
    GeneratedSampleSet s;
    s.class_id = blob.meta.at("class_id").get<std::string>();
    const auto& sh = blob.meta.at("shape");
    s.shape = {sh.at(0).get<std::size_t>(), sh.at(1).get<std::size_t>(), sh.at(2).get<std::size_t>()};
    s.token_stop = stop_reason_from_string(blob.meta.at("token_stop").get<std::string>());
    for (const auto& r : blob.meta.at("records")) {
        s.records.push_back({r.at("prompt").get<std::string>(), r.at("seed").get<std::uint64_t>()});
    }
    s.skipped_seeds = blob.meta.at("skipped_seeds").get<std::vector<std::uint64_t>>();
    s.images = blob.tensor("images");
    if (static_cast<std::size_t>(s.images.cols()) != s.records.size()) {
        throw StructuralError("generated set: image count does not match its records");
    }
    return s;
}

void write_image_directory(const GeneratedSampleSet& set, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto index = nlohmann::json::array();
    for (std::size_t i = 0; i < set.records.size(); ++i) {
        const std::string file = set.class_id + "_" + std::to_string(set.records[i].seed) + ".ppm";
        write_ppm(dir / file, set.images.col(static_cast<Eigen::Index>(i)), set.shape);
        index.push_back({{"file", file},
                         {"class_id", set.class_id},
                         {"prompt", set.records[i].prompt},
                         {"seed", set.records[i].seed},
                         {"token_stop", to_string(set.token_stop)}});
    }
    nlohmann::json doc{{"class_id", set.class_id}, {"images", index}, {"skipped_seeds", set.skipped_seeds}};
    std::ofstream out(dir / "index.json");
    if (!out) throw IoError("cannot write " + (dir / "index.json").string());
    out << doc.dump(2) << '\n';
}

}  // namespace digzsl
