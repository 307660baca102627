#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace digzsl {

struct ClassInfo {
    std::string id;
    std::string display_name;
    bool seen = true;

    bool operator==(const ClassInfo&) const = default;
};

// All classes of a benchmark with their seen/unseen partition.
//
// Classes are ordered lexicographically by id once at construction; every
// label in the library is an index into that order, and argmax ties resolve
// to the lowest index.
class ClassSpace {
public:
    ClassSpace() = default;
    explicit ClassSpace(std::vector<ClassInfo> classes);

    std::size_t size() const noexcept { return classes_.size(); }
    const std::vector<ClassInfo>& classes() const noexcept { return classes_; }
    const ClassInfo& at(std::size_t index) const { return classes_.at(index); }
    const std::string& id(std::size_t index) const { return classes_.at(index).id; }
    bool is_seen(std::size_t index) const { return classes_.at(index).seen; }

    std::optional<std::size_t> find(const std::string& id) const;
    // Throws StructuralError naming the id when absent.
    std::size_t index_of(const std::string& id) const;

    const std::vector<std::size_t>& seen() const noexcept { return seen_; }
    const std::vector<std::size_t>& unseen() const noexcept { return unseen_; }
    std::vector<std::size_t> all() const;

    bool operator==(const ClassSpace& other) const { return classes_ == other.classes_; }

private:
    std::vector<ClassInfo> classes_;
    std::vector<std::size_t> seen_;
    std::vector<std::size_t> unseen_;
};

// "brown_creeper" -> "brown creeper"
std::string display_name_from_id(const std::string& id);

}  // namespace digzsl
