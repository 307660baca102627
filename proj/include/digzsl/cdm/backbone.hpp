#pragma once

#include "digzsl/autodiff/tape.hpp"
#include "digzsl/core/artifact_store.hpp"
#include "digzsl/core/dataset.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace digzsl {

// Image -> feature extractor. Images and features are columns.
class Backbone {
public:
    virtual ~Backbone() = default;

    virtual std::string tag() const = 0;
    virtual std::size_t input_dim() const = 0;
    virtual std::size_t feature_dim() const = 0;

    virtual Eigen::MatrixXd extract(const Eigen::MatrixXd& images) const = 0;
    // Differentiable path used when gradients must reach the input images.
    virtual ad::Var forward(ad::Tape& tape, const ad::Var& images) = 0;

    virtual std::vector<ad::Parameter*> parameters() = 0;
    virtual bool frozen() const = 0;
    void set_frozen(bool frozen);

    virtual std::unique_ptr<Backbone> clone() const = 0;
    virtual void write(Blob& blob) const = 0;
};

// Fixed random projection of raw pixels, rescaled from [0, 1] to [-1, 1].
class ToyBackbone final : public Backbone {
public:
    ToyBackbone(const ImageShape& shape, std::size_t feature_dim, std::uint64_t seed);

    std::string tag() const override;
    std::size_t input_dim() const override { return static_cast<std::size_t>(weight_.value.cols()); }
    std::size_t feature_dim() const override { return static_cast<std::size_t>(weight_.value.rows()); }
    Eigen::MatrixXd extract(const Eigen::MatrixXd& images) const override;
    ad::Var forward(ad::Tape& tape, const ad::Var& images) override;
    std::vector<ad::Parameter*> parameters() override { return {&weight_}; }
    bool frozen() const override { return !weight_.trainable; }
    std::unique_ptr<Backbone> clone() const override { return std::make_unique<ToyBackbone>(*this); }
    void write(Blob& blob) const override;

    static ToyBackbone read(const Blob& blob);
    const ad::Parameter& weight() const noexcept { return weight_; }

private:
    ToyBackbone() = default;
    ImageShape shape_;
    std::uint64_t seed_ = 0;
    ad::Parameter weight_;
};

// Passes precomputed features through unchanged.
class IdentityBackbone final : public Backbone {
public:
    explicit IdentityBackbone(std::size_t dim) : dim_(dim) {}

    std::string tag() const override { return "identity/d" + std::to_string(dim_); }
    std::size_t input_dim() const override { return dim_; }
    std::size_t feature_dim() const override { return dim_; }
    Eigen::MatrixXd extract(const Eigen::MatrixXd& images) const override;
    ad::Var forward(ad::Tape& tape, const ad::Var& images) override;
    std::vector<ad::Parameter*> parameters() override { return {}; }
    bool frozen() const override { return true; }
    std::unique_ptr<Backbone> clone() const override { return std::make_unique<IdentityBackbone>(*this); }
    void write(Blob& blob) const override;

private:
    std::size_t dim_;
};

std::unique_ptr<Backbone> read_backbone(const Blob& blob);

}  // namespace digzsl
