#pragma once

#include "digzsl/core/class_space.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace digzsl {

enum class Partition { TrainSeen, TestSeen, TestUnseen };

const char* partition_name(Partition p);
Partition parse_partition(const std::string& text);

struct ImageRecord {
    std::string image_id;
    std::string class_id;
    Partition partition = Partition::TrainSeen;

    bool operator==(const ImageRecord&) const = default;
};

// Declared totals for a benchmark split; absent fields are not checked.
struct ExpectedCounts {
    std::optional<std::size_t> images;
    std::optional<std::size_t> classes;
    std::optional<std::size_t> seen_classes;
    std::optional<std::size_t> unseen_classes;
    std::optional<std::size_t> train_seen;
    std::optional<std::size_t> test_seen;
    std::optional<std::size_t> test_unseen;

    bool operator==(const ExpectedCounts&) const = default;
};

struct SplitSpec {
    std::string dataset;
    std::vector<ImageRecord> records;
    ExpectedCounts expected;
};

struct Violation {
    enum class Kind { PartitionOverlap, DuplicateRecord, WrongClassKind, CountMismatch };
    Kind kind;
    std::string subject;  // image id, or the name of the mismatched count
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    std::size_t train_seen = 0;
    std::size_t test_seen = 0;
    std::size_t test_unseen = 0;

    bool valid() const noexcept { return violations.empty(); }
};

// Checks partition disjointness, class membership per partition and declared
// totals. A record whose class is not in `space` is a structural error, not a
// violation, because the two inputs then describe different universes.
ValidationReport validate_split(const SplitSpec& spec, const ClassSpace& space);

// Benchmark declaration file: `key = value` lines (dataset, images, classes,
// seen_classes, unseen_classes, train_seen, test_seen, test_unseen).
SplitSpec load_split_declaration(const std::filesystem::path& path);

// Per-image manifest CSV with header `image_id,class_id,partition`.
std::vector<ImageRecord> load_manifest_csv(const std::filesystem::path& path);
void save_manifest_csv(const std::filesystem::path& path, const std::vector<ImageRecord>& records);

// Class list CSV with header `class_id,kind` where kind is `seen` or `unseen`.
ClassSpace load_class_csv(const std::filesystem::path& path);

}  // namespace digzsl
