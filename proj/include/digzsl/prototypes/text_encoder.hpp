#pragma once

#include "digzsl/core/config.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace digzsl {

using TokenId = std::int64_t;

// Text side of the pipeline: prompt -> token ids -> token embeddings -> d_t vector.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;

    virtual std::string tag() const = 0;
    virtual std::size_t embed_dim() const = 0;
    virtual std::size_t output_dim() const = 0;
    virtual std::size_t vocab_size() const = 0;
    virtual std::optional<TokenId> token_id(const std::string& word) const = 0;
    // Throws StructuralError naming the first word that has no token.
    virtual std::vector<TokenId> tokenize(const std::string& prompt) const = 0;
    // embed_dim x vocab_size, column per token id.
    virtual const Eigen::MatrixXd& embedding_table() const = 0;
    virtual Eigen::VectorXd encode(const std::string& prompt) const = 0;
    virtual bool reentrant() const { return true; }

    Eigen::VectorXd token_embedding(TokenId id) const;
};

// Lowercases, drops sentence punctuation and splits on whitespace.
std::vector<std::string> normalize_words(const std::string& text);

// Deterministic stand-in for a pretrained text encoder: every vocabulary word
// gets a seeded Gaussian embedding derived from its hash, and a prompt
// encodes to a fixed random projection of the mean token embedding.
class ToyTextEncoder final : public TextEncoder {
public:
    ToyTextEncoder(std::vector<std::string> vocabulary, const EncoderConfig& cfg, std::uint64_t seed);

    std::string tag() const override;
    std::size_t embed_dim() const override { return static_cast<std::size_t>(table_.rows()); }
    std::size_t output_dim() const override { return static_cast<std::size_t>(projection_.rows()); }
    std::size_t vocab_size() const override { return words_.size(); }
    std::optional<TokenId> token_id(const std::string& word) const override;
    std::vector<TokenId> tokenize(const std::string& prompt) const override;
    const Eigen::MatrixXd& embedding_table() const override { return table_; }
    Eigen::VectorXd encode(const std::string& prompt) const override;

    // Mean-pool + projection applied to already looked-up token embeddings.
    Eigen::VectorXd encode_embeddings(const Eigen::MatrixXd& token_embeddings) const;

    const std::vector<std::string>& words() const noexcept { return words_; }
    const Eigen::MatrixXd& projection() const noexcept { return projection_; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, TokenId> index_;
    Eigen::MatrixXd table_;
    Eigen::MatrixXd projection_;
    std::uint64_t seed_;
};

// Every word of the templates (placeholders removed) and class names, plus "a".
std::vector<std::string> build_vocabulary(const std::vector<std::string>& class_names,
                                          const std::vector<std::string>& templates);

}  // namespace digzsl
