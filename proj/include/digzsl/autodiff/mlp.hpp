#pragma once

#include "digzsl/autodiff/tape.hpp"
#include "digzsl/core/artifact_store.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace digzsl::ad {

enum class Activation { Relu, Silu };

// Dense layers with `activation` between them and a linear output layer.
class Mlp {
public:
    Mlp() = default;
    // sizes = {in, hidden..., out}; weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    Mlp(std::string name, const std::vector<std::size_t>& sizes, std::uint64_t seed,
        Activation activation = Activation::Relu);

    Var forward(Tape& tape, const Var& x);
    // Same computation as forward() without recording anything.
    Matrix infer(const Matrix& x) const;

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t layers() const noexcept { return weights_.size(); }
    Parameter& weight(std::size_t i) { return weights_.at(i); }
    Parameter& bias(std::size_t i) { return biases_.at(i); }
    const Parameter& weight(std::size_t i) const { return weights_.at(i); }
    const Parameter& bias(std::size_t i) const { return biases_.at(i); }

    std::vector<Parameter*> parameters();
    void set_trainable(bool trainable);

    void write(Blob& blob, const std::string& prefix) const;
    static Mlp read(const Blob& blob, const std::string& prefix, std::string name, Activation activation);

    bool operator==(const Mlp& o) const;

private:
    std::string name_;
    Activation activation_ = Activation::Relu;
    std::vector<Parameter> weights_;
    std::vector<Parameter> biases_;
};

}  // namespace digzsl::ad
