#include "digzsl/prototypes/prototype_bank.hpp"

#include "digzsl/core/errors.hpp"
#include "digzsl/core/text.hpp"

#include <algorithm>

namespace digzsl {

Eigen::MatrixXd PrototypeBank::normalized(const std::vector<std::size_t>& subset) const {
    Eigen::MatrixXd out(vectors.rows(), static_cast<Eigen::Index>(subset.size()));
    for (std::size_t j = 0; j < subset.size(); ++j) {
        if (subset[j] >= size()) throw StructuralError("prototype bank: class index out of range");
        const auto col = vectors.col(static_cast<Eigen::Index>(subset[j]));
        const double n = col.norm();
        if (!(n > 0.0)) throw DegenerateInput("prototype of class '" + class_ids[subset[j]] + "' has zero norm");
        out.col(static_cast<Eigen::Index>(j)) = col / n;
    }
    return out;
}

Blob PrototypeBank::to_blob() const {
    Blob b;
    b.kind = "prototype-bank";
    b.meta["class_ids"] = class_ids;
    b.meta["template"] = prompt_template;
    b.meta["encoder"] = encoder_tag;
    b.add("vectors", vectors);
    return b;
}

PrototypeBank PrototypeBank::from_blob(const Blob& blob) {
    if (blob.kind != "prototype-bank") throw StructuralError("expected a prototype-bank artifact, got " + blob.kind);
    PrototypeBank bank;
    bank.class_ids = blob.meta.at("class_ids").get<std::vector<std::string>>();
    bank.prompt_template = blob.meta.at("template").get<std::string>();
    bank.encoder_tag = blob.meta.at("encoder").get<std::string>();
    bank.vectors = blob.tensor("vectors");
    return bank;
}

bool PrototypeBank::operator==(const PrototypeBank& o) const {
    return class_ids == o.class_ids && prompt_template == o.prompt_template && encoder_tag == o.encoder_tag &&
           vectors.rows() == o.vectors.rows() && vectors.cols() == o.vectors.cols() && vectors == o.vectors;
}

std::string normalize_class_name(const std::string& name) { return to_lower(display_name_from_id(name)); }

std::string fill_name(const std::string& prompt_template, const std::string& class_name) {
    const std::string key = kNamePlaceholder;
    const auto pos = prompt_template.find(key);
    if (pos == std::string::npos || prompt_template.find(key, pos + 1) != std::string::npos) {
        throw StructuralError("template '" + prompt_template + "' must contain exactly one [name]");
    }
    std::string out = prompt_template;
    out.replace(pos, key.size(), class_name);
    return out;
}

PrototypeBank build_prototypes(const ClassSpace& space, const TextEncoder& encoder, const std::string& prompt_template) {
    PrototypeBank bank;
    bank.prompt_template = prompt_template;
    bank.encoder_tag = encoder.tag();
    bank.vectors.resize(static_cast<Eigen::Index>(encoder.output_dim()), static_cast<Eigen::Index>(space.size()));
    for (std::size_t c = 0; c < space.size(); ++c) {
        const auto& info = space.at(c);
        const std::string prompt = fill_name(prompt_template, normalize_class_name(info.display_name));
        Eigen::VectorXd v;
        try {
            v = encoder.encode(prompt);
        } catch (const StructuralError& e) {
            throw StructuralError("class '" + info.id + "': " + e.what());
        }
        if (static_cast<std::size_t>(v.size()) != encoder.output_dim()) {
            throw StructuralError("class '" + info.id + "': encoder returned a vector of the wrong dimension");
        }
        bank.vectors.col(static_cast<Eigen::Index>(c)) = v;
        bank.class_ids.push_back(info.id);
    }
    return bank;
}

double cosine(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    if (u.size() != v.size()) throw StructuralError("cosine: vectors have different dimensions");
    const double nu = u.norm(), nv = v.norm();
    if (!(nu > 0.0) || !(nv > 0.0)) throw DegenerateInput("cosine: zero-norm input");
    return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

}  // namespace digzsl
