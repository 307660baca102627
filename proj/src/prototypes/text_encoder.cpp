#include "digzsl/prototypes/text_encoder.hpp"

#include "digzsl/core/errors.hpp"
#include "digzsl/core/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <set>

namespace digzsl {

Eigen::VectorXd TextEncoder::token_embedding(TokenId id) const {
    const auto& t = embedding_table();
    if (id < 0 || id >= t.cols()) throw StructuralError("token id " + std::to_string(id) + " outside vocabulary");
    return t.col(static_cast<Eigen::Index>(id));
}

std::vector<std::string> normalize_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) words.push_back(std::move(cur));
        cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (ch == '.' || ch == ',' || ch == '!' || ch == '?' || ch == ';' || ch == ':') {
            flush();
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return words;
}

ToyTextEncoder::ToyTextEncoder(std::vector<std::string> vocabulary, const EncoderConfig& cfg, std::uint64_t seed)
    : seed_(seed) {
    std::set<std::string> unique;
    for (auto& w : vocabulary) {
        for (auto& n : normalize_words(w)) unique.insert(n);
    }
    words_.assign(unique.begin(), unique.end());
    const auto d_e = static_cast<Eigen::Index>(cfg.embed_dim);
    const auto d_t = static_cast<Eigen::Index>(cfg.proto_dim);
    if (d_e == 0 || d_t == 0) throw StructuralError("toy text encoder: dimensions must be positive");

    table_.resize(d_e, static_cast<Eigen::Index>(words_.size()));
    for (std::size_t i = 0; i < words_.size(); ++i) {
        index_[words_[i]] = static_cast<TokenId>(i);
        std::mt19937_64 rng(fnv1a64(words_[i], seed));
        std::normal_distribution<double> n(0.0, cfg.embed_scale);
        for (Eigen::Index r = 0; r < d_e; ++r) table_(r, static_cast<Eigen::Index>(i)) = n(rng);
    }

    std::mt19937_64 rng(fnv1a64("projection", seed));
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(d_e)));
    projection_.resize(d_t, d_e);
    for (Eigen::Index i = 0; i < projection_.size(); ++i) projection_.data()[i] = n(rng);
}

std::string ToyTextEncoder::tag() const {
    return "toy-text/d" + std::to_string(embed_dim()) + "-t" + std::to_string(output_dim()) + "/seed" +
           std::to_string(seed_);
}

std::optional<TokenId> ToyTextEncoder::token_id(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<TokenId> ToyTextEncoder::tokenize(const std::string& prompt) const {
    std::vector<TokenId> ids;
    for (const auto& w : normalize_words(prompt)) {
        auto id = token_id(w);
        if (!id) throw StructuralError("cannot tokenize '" + w + "': not in the encoder vocabulary");
        ids.push_back(*id);
    }
    if (ids.empty()) throw StructuralError("cannot tokenize an empty prompt");
    return ids;
}

Eigen::VectorXd ToyTextEncoder::encode_embeddings(const Eigen::MatrixXd& token_embeddings) const {
    if (token_embeddings.rows() != table_.rows() || token_embeddings.cols() == 0) {
        throw StructuralError("toy text encoder: token embeddings have the wrong shape");
    }
    return projection_ * token_embeddings.rowwise().mean();
}

Eigen::VectorXd ToyTextEncoder::encode(const std::string& prompt) const {
    const auto ids = tokenize(prompt);
    Eigen::MatrixXd emb(table_.rows(), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) emb.col(static_cast<Eigen::Index>(i)) = table_.col(ids[i]);
    return encode_embeddings(emb);
}

std::vector<std::string> build_vocabulary(const std::vector<std::string>& class_names,
                                          const std::vector<std::string>& templates) {
    std::set<std::string> words{"a"};
    auto add = [&](const std::string& text) {
        for (auto& w : normalize_words(text)) {
            if (w == "s_*" || w == "[name]") continue;
            words.insert(w);
        }
    };
    for (const auto& t : templates) add(t);
    for (const auto& n : class_names) add(n);
    return {words.begin(), words.end()};
}

}  // namespace digzsl
