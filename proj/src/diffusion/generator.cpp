#include "digzsl/diffusion/generator.hpp"

#include "digzsl/autodiff/optim.hpp"
#include "digzsl/core/errors.hpp"
#include "digzsl/prototypes/prototype_bank.hpp"

#include <cmath>
#include <random>

namespace digzsl {

Eigen::VectorXd GeneratorAdapter::encode_text(const std::string& prompt) const {
    const auto& enc = text_encoder();
    const auto ids = enc.tokenize(prompt);
    Eigen::MatrixXd emb(static_cast<Eigen::Index>(enc.embed_dim()), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) emb.col(static_cast<Eigen::Index>(i)) = enc.token_embedding(ids[i]);
    return encode_prompt(emb);
}

Eigen::MatrixXd decode_latents(const Eigen::MatrixXd& latents) {
    return ((latents.array() + 1.0) * 0.5).cwiseMax(0.0).cwiseMin(1.0).matrix();
}

Eigen::MatrixXd encode_images(const Eigen::MatrixXd& images) { return (2.0 * images.array() - 1.0).matrix(); }

ToyGenerator::ToyGenerator(std::shared_ptr<const ToyTextEncoder> encoder, ToyDenoiser denoiser, ImageShape shape)
    : encoder_(std::move(encoder)), denoiser_(std::move(denoiser)), shape_(shape) {
    if (!encoder_) throw StructuralError("toy generator: no text encoder");
    if (denoiser_.latent_dim() != shape_.size()) throw StructuralError("toy generator: denoiser does not match image shape");
    if (denoiser_.cond_dim() != encoder_->output_dim()) {
        throw StructuralError("toy generator: denoiser conditioning does not match the text encoder");
    }
    projection_ = encoder_->projection();
}

std::string ToyGenerator::tag() const {
    return "toy-generator/" + std::to_string(shape_.channels) + "x" + std::to_string(shape_.height) + "x" +
           std::to_string(shape_.width) + "/" + encoder_->tag();
}

Eigen::VectorXd ToyGenerator::encode_prompt(const Eigen::MatrixXd& token_embeddings) const {
    return encoder_->encode_embeddings(token_embeddings);
}

ad::Var ToyGenerator::encode_prompt(ad::Tape& tape, const ad::Var& token_embeddings) {
    const Eigen::Index len = token_embeddings.cols();
    if (len == 0) throw StructuralError("toy generator: empty prompt");
    if (static_cast<std::size_t>(token_embeddings.rows()) != encoder_->embed_dim()) {
        throw StructuralError("toy generator: token embedding width does not match the encoder");
    }
    ad::Var mean = ad::matmul(token_embeddings, tape.constant(Eigen::VectorXd::Constant(len, 1.0 / static_cast<double>(len))));
    return ad::matmul(tape.constant(projection_), mean);
}

GeneratedBatch ToyGenerator::sample(const Eigen::MatrixXd& cond, const std::vector<std::uint64_t>& seeds,
                                    const SamplerSettings& settings) const {
    GeneratedBatch out;
    out.latents = sample_latents(denoiser_, denoiser_.schedule(), cond, seeds, settings);
    out.images = decode_latents(out.latents);
    return out;
}

ad::Var ToyGenerator::sample(ad::Tape& tape, const ad::Var& cond, const std::vector<std::uint64_t>& seeds,
                             const SamplerSettings& settings) {
    ad::Var z = sample_latents(tape, denoiser_, denoiser_.schedule(), cond, seeds, settings);
    return ad::clamp(ad::axpy(tape.constant(Eigen::MatrixXd::Constant(z.rows(), z.cols(), 0.5)), 0.5, z), 0.0, 1.0);
}

Blob ToyGenerator::to_blob() const {
    Blob b;
    b.kind = "toy-generator";
    b.meta["encoder_tag"] = encoder_->tag();
    b.meta["shape"] = {shape_.channels, shape_.height, shape_.width};
    denoiser_.write(b);
    return b;
}

ToyGenerator ToyGenerator::from_blob(const Blob& blob, std::shared_ptr<const ToyTextEncoder> encoder) {
    if (blob.kind != "toy-generator") throw StructuralError("expected a toy-generator artifact, got '" + blob.kind + "'");
    if (!encoder || blob.meta.at("encoder_tag").get<std::string>() != encoder->tag()) {
        throw StructuralError("toy generator was trained with a different text encoder");
    }
    const auto& s = blob.meta.at("shape");
    ImageShape shape{s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>(), s.at(2).get<std::size_t>()};
    return ToyGenerator(std::move(encoder), ToyDenoiser::read(blob), shape);
}

SamplerSettings sampler_settings(const GeneratorConfig& cfg) {
    SamplerSettings s;
    s.steps = cfg.sampling_steps;
    s.guidance = cfg.guidance_scale;
    s.grad_depth = cfg.grad_depth;
    return s;
}

ToyGenerator train_toy_generator(const LabeledSet& seen_images, const ClassSpace& space,
                                 std::shared_ptr<const ToyTextEncoder> encoder, const GeneratorConfig& cfg,
                                 const ImageShape& shape, std::uint64_t seed, GeneratorTrainingReport* report) {
    if (seen_images.empty()) throw DegenerateInput("generator training: no images");
    if (static_cast<std::size_t>(seen_images.data.rows()) != shape.size()) {
        throw StructuralError("generator training: image size does not match the configured shape");
    }
    for (std::size_t label : seen_images.labels) {
        if (label >= space.size()) throw StructuralError("generator training: label outside the class space");
        if (!space.is_seen(label)) {
            throw ProtocolViolation("generator training received an image of unseen class '" + space.id(label) + "'");
        }
    }
    if (cfg.templates.empty()) throw ConfigError("generator training: no caption templates", 0, "generator.templates");
    if (cfg.batch_size == 0) throw ConfigError("generator training: batch size must be positive", 0, "generator.batch_size");

    GeneratorTrainingReport local;
    GeneratorTrainingReport& rep = report ? *report : local;
    rep.losses.clear();
    rep.warnings.clear();
    if (cfg.cond_dropout <= 0.0) {
        rep.warnings.push_back("cond_dropout is 0: the unconditional branch is never trained and guidance is unreliable");
    }

    auto schedule = NoiseSchedule::linear(cfg.train_timesteps);
    ToyDenoiser denoiser(schedule, shape.size(), encoder->output_dim(), cfg.time_dim, cfg.hidden, seed);

    // Caption embedding per (class, template).
    const std::size_t n_tpl = cfg.templates.size();
    Eigen::MatrixXd captions(static_cast<Eigen::Index>(encoder->output_dim()),
                             static_cast<Eigen::Index>(space.size() * n_tpl));
    captions.setZero();
    for (std::size_t c : space.seen()) {
        for (std::size_t k = 0; k < n_tpl; ++k) {
            captions.col(static_cast<Eigen::Index>(c * n_tpl + k)) =
                encoder->encode(fill_name(cfg.templates[k], space.at(c).display_name));
        }
    }

    // Per-timestep weight min(SNR, 5) / SNR on the noise-prediction error.
    std::vector<double> weight(cfg.train_timesteps + 1, 1.0);
    for (std::size_t t = 1; t <= cfg.train_timesteps; ++t) {
        const double ab = schedule.alpha_bar(t);
        const double snr = ab / (1.0 - ab);
        weight[t] = std::min(snr, 5.0) / snr;
    }

    ad::AdamW opt(denoiser.parameters(), {cfg.lr, 0.9, 0.999, 1e-8, 0.0});
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_int_distribution<std::size_t> pick(0, seen_images.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_tpl(0, n_tpl - 1);
    std::uniform_int_distribution<std::size_t> pick_t(1, cfg.train_timesteps);
    std::bernoulli_distribution drop(std::clamp(cfg.cond_dropout, 0.0, 1.0));
    std::normal_distribution<double> normal;

    const auto b = static_cast<Eigen::Index>(cfg.batch_size);
    const auto d = static_cast<Eigen::Index>(shape.size());
    Eigen::MatrixXd z0(d, b), eps(d, b), cond(captions.rows(), b);
    std::vector<std::size_t> t(cfg.batch_size);
    Eigen::RowVectorXd col_w(b);
    rep.losses.reserve(cfg.train_steps);

    for (std::size_t step = 0; step < cfg.train_steps; ++step) {
        for (Eigen::Index j = 0; j < b; ++j) {
            const std::size_t i = pick(rng);
            z0.col(j) = encode_images(seen_images.data.col(static_cast<Eigen::Index>(i)));
            const std::size_t k = pick_tpl(rng);
            if (drop(rng)) {
                cond.col(j).setZero();
            } else {
                cond.col(j) = captions.col(static_cast<Eigen::Index>(seen_images.labels[i] * n_tpl + k));
            }
            t[static_cast<std::size_t>(j)] = pick_t(rng);
            for (Eigen::Index r = 0; r < d; ++r) eps(r, j) = normal(rng);
            col_w[j] = std::sqrt(weight[t[static_cast<std::size_t>(j)]] / static_cast<double>(b));
        }
        Eigen::MatrixXd zt(d, b);
        for (Eigen::Index j = 0; j < b; ++j) {
            zt.col(j) = forward_noise(z0.col(j), t[static_cast<std::size_t>(j)], eps.col(j), schedule);
        }

        ad::Tape tape;
        ad::Var pred = denoiser.predict(tape, tape.constant(zt), t, tape.constant(cond));
        ad::Var loss = ad::sum_squares(ad::scale_cols(tape.constant(eps) - pred, col_w));
        const double value = loss.scalar();
        if (!std::isfinite(value)) {
            throw NumericalFailure("generator training: non-finite loss at step " + std::to_string(step),
                                   static_cast<long>(step));
        }
        opt.zero_grad();
        tape.backward(loss);
        opt.step();
        rep.losses.push_back(value);
    }
    return ToyGenerator(std::move(encoder), std::move(denoiser), shape);
}

}  // namespace digzsl
