#pragma once

#include "digzsl/core/artifact_store.hpp"
#include "digzsl/core/class_space.hpp"
#include "digzsl/prototypes/text_encoder.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace digzsl {

inline constexpr const char* kDefaultPrototypeTemplate = "A photo of a [name]";
inline constexpr const char* kNamePlaceholder = "[name]";

// One un-normalized prototype per class, columns in ClassSpace order.
struct PrototypeBank {
    std::vector<std::string> class_ids;
    Eigen::MatrixXd vectors;  // d_t x C
    std::string prompt_template;
    std::string encoder_tag;

    std::size_t size() const noexcept { return class_ids.size(); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(vectors.rows()); }
    Eigen::VectorXd prototype(std::size_t class_index) const { return vectors.col(static_cast<Eigen::Index>(class_index)); }
    // Unit-norm columns for the given class indices, in that order.
    Eigen::MatrixXd normalized(const std::vector<std::size_t>& subset) const;

    Blob to_blob() const;
    static PrototypeBank from_blob(const Blob& blob);
    bool operator==(const PrototypeBank& o) const;
};

// Lowercase display name with underscores turned into spaces.
std::string normalize_class_name(const std::string& name);

// Substitutes the class name into `prompt_template`; requires exactly one [name].
std::string fill_name(const std::string& prompt_template, const std::string& class_name);

PrototypeBank build_prototypes(const ClassSpace& space, const TextEncoder& encoder,
                               const std::string& prompt_template = kDefaultPrototypeTemplate);

// u.v / (|u||v|); DegenerateInput on a zero vector, StructuralError on a size mismatch.
double cosine(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

}  // namespace digzsl
