#include "digzsl/cdm/backbone.hpp"

#include "digzsl/core/errors.hpp"

#include <cmath>
#include <random>

namespace digzsl {

void Backbone::set_frozen(bool frozen) {
    for (auto* p : parameters()) p->trainable = !frozen;
}

ToyBackbone::ToyBackbone(const ImageShape& shape, std::size_t feature_dim, std::uint64_t seed)
    : shape_(shape), seed_(seed) {
    const auto d = static_cast<Eigen::Index>(shape.size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    Eigen::MatrixXd w(static_cast<Eigen::Index>(feature_dim), d);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
    weight_ = ad::Parameter("backbone.w", std::move(w), false);
}

std::string ToyBackbone::tag() const {
    return "toy-backbone/" + std::to_string(shape_.channels) + "x" + std::to_string(shape_.height) + "x" +
           std::to_string(shape_.width) + "-d" + std::to_string(feature_dim()) + "/seed" + std::to_string(seed_);
}

Eigen::MatrixXd ToyBackbone::extract(const Eigen::MatrixXd& images) const {
    if (static_cast<std::size_t>(images.rows()) != input_dim()) {
        throw StructuralError("backbone: image has " + std::to_string(images.rows()) + " values, expected " +
                              std::to_string(input_dim()));
    }
    return weight_.value * (2.0 * images.array() - 1.0).matrix();
}

ad::Var ToyBackbone::forward(ad::Tape& tape, const ad::Var& images) {
    if (static_cast<std::size_t>(images.rows()) != input_dim()) {
        throw StructuralError("backbone: image has " + std::to_string(images.rows()) + " values, expected " +
                              std::to_string(input_dim()));
    }
    ad::Var centered = ad::axpy(tape.constant(-Eigen::MatrixXd::Ones(images.rows(), images.cols())), 2.0, images);
    return ad::matmul(tape.parameter(weight_), centered);
}

void ToyBackbone::write(Blob& blob) const {
    blob.meta["backbone"] = {{"type", "toy"},
                             {"tag", tag()},
                             {"seed", seed_},
                             {"shape", {shape_.channels, shape_.height, shape_.width}}};
    blob.add("backbone.w", weight_.value);
}

ToyBackbone ToyBackbone::read(const Blob& blob) {
    const auto& m = blob.meta.at("backbone");
    ToyBackbone b;
    const auto shape = m.at("shape").get<std::vector<std::size_t>>();
    b.shape_ = {shape.at(0), shape.at(1), shape.at(2)};
    b.seed_ = m.at("seed").get<std::uint64_t>();
    b.weight_ = ad::Parameter("backbone.w", blob.tensor("backbone.w"), false);
    return b;
}

Eigen::MatrixXd IdentityBackbone::extract(const Eigen::MatrixXd& images) const {
    if (static_cast<std::size_t>(images.rows()) != dim_) throw StructuralError("identity backbone: dimension mismatch");
    return images;
}

ad::Var IdentityBackbone::forward(ad::Tape&, const ad::Var& images) {
    if (static_cast<std::size_t>(images.rows()) != dim_) throw StructuralError("identity backbone: dimension mismatch");
    return images;
}

void IdentityBackbone::write(Blob& blob) const {
    blob.meta["backbone"] = {{"type", "identity"}, {"tag", tag()}, {"dim", dim_}};
}

std::unique_ptr<Backbone> read_backbone(const Blob& blob) {
    const auto type = blob.meta.at("backbone").at("type").get<std::string>();
    if (type == "toy") return std::make_unique<ToyBackbone>(ToyBackbone::read(blob));
    if (type == "identity") {
        return std::make_unique<IdentityBackbone>(blob.meta.at("backbone").at("dim").get<std::size_t>());
    }
    throw StructuralError("unknown backbone type '" + type + "'");
}

}  // namespace digzsl
