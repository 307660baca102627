#include "digzsl/core/class_space.hpp"

#include "digzsl/core/errors.hpp"

#include <algorithm>
#include <numeric>

namespace digzsl {

ClassSpace::ClassSpace(std::vector<ClassInfo> classes) : classes_(std::move(classes)) {
    std::sort(classes_.begin(), classes_.end(), [](const ClassInfo& a, const ClassInfo& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        if (classes_[i].id.empty()) throw StructuralError("class space: empty class id");
        if (i > 0 && classes_[i].id == classes_[i - 1].id) {
            throw StructuralError("class space: duplicate class id '" + classes_[i].id + "'");
        }
        (classes_[i].seen ? seen_ : unseen_).push_back(i);
    }
}

std::optional<std::size_t> ClassSpace::find(const std::string& id) const {
    auto it = std::lower_bound(classes_.begin(), classes_.end(), id,
                               [](const ClassInfo& c, const std::string& key) { return c.id < key; });
    if (it == classes_.end() || it->id != id) return std::nullopt;
    return static_cast<std::size_t>(it - classes_.begin());
}

std::size_t ClassSpace::index_of(const std::string& id) const {
    auto idx = find(id);
    if (!idx) throw StructuralError("class '" + id + "' is not in the class space");
    return *idx;
}

std::vector<std::size_t> ClassSpace::all() const {
    std::vector<std::size_t> out(classes_.size());
    std::iota(out.begin(), out.end(), 0);
    return out;
}

std::string display_name_from_id(const std::string& id) {
    std::string out = id;
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

}  // namespace digzsl
