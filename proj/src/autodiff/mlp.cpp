#include "digzsl/autodiff/mlp.hpp"

#include "digzsl/core/errors.hpp"

#include <cmath>
#include <random>

namespace digzsl::ad {

Mlp::Mlp(std::string name, const std::vector<std::size_t>& sizes, std::uint64_t seed, Activation activation)
    : name_(std::move(name)), activation_(activation) {
    if (sizes.size() < 2) throw StructuralError("mlp '" + name_ + "': need at least input and output sizes");
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(sizes[l]), out = static_cast<Eigen::Index>(sizes[l + 1]);
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        Matrix w(out, in), b(out, 1);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
        for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = u(rng);
        weights_.emplace_back(name_ + ".w" + std::to_string(l), std::move(w));
        biases_.emplace_back(name_ + ".b" + std::to_string(l), std::move(b));
    }
}

std::size_t Mlp::input_dim() const { return static_cast<std::size_t>(weights_.front().value.cols()); }
std::size_t Mlp::output_dim() const { return static_cast<std::size_t>(weights_.back().value.rows()); }

Var Mlp::forward(Tape& tape, const Var& x) {
    if (static_cast<std::size_t>(x.rows()) != input_dim()) {
        throw StructuralError("mlp '" + name_ + "': input has " + std::to_string(x.rows()) + " rows, expected " +
                              std::to_string(input_dim()));
    }
    Var h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        h = add_col(matmul(tape.parameter(weights_[l]), h), tape.parameter(biases_[l]));
        if (l + 1 < weights_.size()) h = activation_ == Activation::Relu ? relu(h) : silu(h);
    }
    return h;
}

Matrix Mlp::infer(const Matrix& x) const {
    if (static_cast<std::size_t>(x.rows()) != input_dim()) {
        throw StructuralError("mlp '" + name_ + "': input has " + std::to_string(x.rows()) + " rows, expected " +
                              std::to_string(input_dim()));
    }
    Matrix h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Matrix z = weights_[l].value * h;
        z.colwise() += biases_[l].value.col(0);
        if (l + 1 < weights_.size()) {
            if (activation_ == Activation::Relu) {
                z = z.cwiseMax(0.0);
            } else {
                z = (z.array() / (1.0 + (-z.array()).exp())).matrix();
            }
        }
        h = std::move(z);
    }
    return h;
}

std::vector<Parameter*> Mlp::parameters() {
    std::vector<Parameter*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

void Mlp::set_trainable(bool trainable) {
    for (auto* p : parameters()) p->trainable = trainable;
}

void Mlp::write(Blob& blob, const std::string& prefix) const {
    blob.meta[prefix + ".layers"] = weights_.size();
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        blob.add(prefix + ".w" + std::to_string(l), weights_[l].value);
        blob.add(prefix + ".b" + std::to_string(l), biases_[l].value);
    }
}

Mlp Mlp::read(const Blob& blob, const std::string& prefix, std::string name, Activation activation) {
    Mlp m;
    m.name_ = std::move(name);
    m.activation_ = activation;
    const auto layers = blob.meta.at(prefix + ".layers").get<std::size_t>();
    for (std::size_t l = 0; l < layers; ++l) {
        m.weights_.emplace_back(m.name_ + ".w" + std::to_string(l), blob.tensor(prefix + ".w" + std::to_string(l)));
        m.biases_.emplace_back(m.name_ + ".b" + std::to_string(l), blob.tensor(prefix + ".b" + std::to_string(l)));
    }
    return m;
}

bool Mlp::operator==(const Mlp& o) const {
    if (weights_.size() != o.weights_.size() || activation_ != o.activation_) return false;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        const auto& a = weights_[l].value;
        const auto& b = o.weights_[l].value;
        const auto& c = biases_[l].value;
        const auto& d = o.biases_[l].value;
        if (a.rows() != b.rows() || a.cols() != b.cols() || a != b) return false;
        if (c.rows() != d.rows() || c != d) return false;
    }
    return true;
}

}  // namespace digzsl::ad
