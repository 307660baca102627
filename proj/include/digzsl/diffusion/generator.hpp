#pragma once

#include "digzsl/autodiff/tape.hpp"
#include "digzsl/core/artifact_store.hpp"
#include "digzsl/core/class_space.hpp"
#include "digzsl/core/config.hpp"
#include "digzsl/core/dataset.hpp"
#include "digzsl/diffusion/denoiser.hpp"
#include "digzsl/diffusion/sampler.hpp"
#include "digzsl/prototypes/text_encoder.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace digzsl {

struct GeneratedBatch {
    Eigen::MatrixXd images;   // decoded, values in [0, 1]
    Eigen::MatrixXd latents;  // final latents
};

// Text-to-image backend as seen by the token-learning stage. Prompts enter as
// token embedding sequences (embed_dim x length) so that a learned token can
// be spliced in next to rows looked up from text_encoder().embedding_table().
class GeneratorAdapter {
public:
    virtual ~GeneratorAdapter() = default;

    virtual std::string tag() const = 0;
    // True when sample() on a tape propagates gradients to the conditioning.
    virtual bool differentiable() const = 0;
    virtual ImageShape image_shape() const = 0;
    virtual std::size_t latent_dim() const = 0;
    virtual std::size_t cond_dim() const = 0;
    virtual const TextEncoder& text_encoder() const = 0;

    virtual Eigen::VectorXd encode_prompt(const Eigen::MatrixXd& token_embeddings) const = 0;
    virtual ad::Var encode_prompt(ad::Tape& tape, const ad::Var& token_embeddings) = 0;

    // One image per seed; cond has one column per seed.
    virtual GeneratedBatch sample(const Eigen::MatrixXd& cond, const std::vector<std::uint64_t>& seeds,
                                  const SamplerSettings& settings) const = 0;
    // Decoded images on the tape (only meaningful when differentiable()).
    virtual ad::Var sample(ad::Tape& tape, const ad::Var& cond, const std::vector<std::uint64_t>& seeds,
                           const SamplerSettings& settings) = 0;

    // Everything the backend owns that must stay fixed while a token is learned.
    virtual std::vector<ad::Parameter*> parameters() = 0;

    // Convenience: tokenizes `prompt` with text_encoder() and encodes it.
    Eigen::VectorXd encode_text(const std::string& prompt) const;
};

// Toy backend: the toy text encoder's mean-pool projection as the prompt
// encoder, a ToyDenoiser in image space, and decode x = clamp((z + 1) / 2).
class ToyGenerator final : public GeneratorAdapter {
public:
    ToyGenerator(std::shared_ptr<const ToyTextEncoder> encoder, ToyDenoiser denoiser, ImageShape shape);

    std::string tag() const override;
    bool differentiable() const override { return true; }
    ImageShape image_shape() const override { return shape_; }
    std::size_t latent_dim() const override { return shape_.size(); }
    std::size_t cond_dim() const override { return encoder_->output_dim(); }
    const TextEncoder& text_encoder() const override { return *encoder_; }

    Eigen::VectorXd encode_prompt(const Eigen::MatrixXd& token_embeddings) const override;
    ad::Var encode_prompt(ad::Tape& tape, const ad::Var& token_embeddings) override;

    GeneratedBatch sample(const Eigen::MatrixXd& cond, const std::vector<std::uint64_t>& seeds,
                          const SamplerSettings& settings) const override;
    ad::Var sample(ad::Tape& tape, const ad::Var& cond, const std::vector<std::uint64_t>& seeds,
                   const SamplerSettings& settings) override;

    std::vector<ad::Parameter*> parameters() override { return denoiser_.parameters(); }

    ToyDenoiser& denoiser() { return denoiser_; }
    const ToyDenoiser& denoiser() const { return denoiser_; }

    Blob to_blob() const;
    static ToyGenerator from_blob(const Blob& blob, std::shared_ptr<const ToyTextEncoder> encoder);

private:
    std::shared_ptr<const ToyTextEncoder> encoder_;
    ToyDenoiser denoiser_;
    ImageShape shape_;
    Eigen::MatrixXd projection_;
};

Eigen::MatrixXd decode_latents(const Eigen::MatrixXd& latents);
Eigen::MatrixXd encode_images(const Eigen::MatrixXd& images);

struct GeneratorTrainingReport {
    std::vector<double> losses;  // one per optimizer step
    std::vector<std::string> warnings;
};

// Fits a ToyDenoiser on seen-class images captioned with cfg.templates.
// With probability cfg.cond_dropout a caption is replaced by the empty
// condition so that the unconditional branch is trained as well.
ToyGenerator train_toy_generator(const LabeledSet& seen_images, const ClassSpace& space,
                                 std::shared_ptr<const ToyTextEncoder> encoder, const GeneratorConfig& cfg,
                                 const ImageShape& shape, std::uint64_t seed, GeneratorTrainingReport* report = nullptr);

SamplerSettings sampler_settings(const GeneratorConfig& cfg);

}  // namespace digzsl
