#include "digzsl/core/split.hpp"

#include "digzsl/core/errors.hpp"
#include "digzsl/core/text.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

namespace digzsl {

const char* partition_name(Partition p) {
    switch (p) {
        case Partition::TrainSeen: return "train-seen";
        case Partition::TestSeen: return "test-seen";
        case Partition::TestUnseen: return "test-unseen";
    }
    return "?";
}

Partition parse_partition(const std::string& text) {
    if (text == "train-seen") return Partition::TrainSeen;
    if (text == "test-seen") return Partition::TestSeen;
    if (text == "test-unseen") return Partition::TestUnseen;
    throw StructuralError("unknown partition '" + text + "'");
}

ValidationReport validate_split(const SplitSpec& spec, const ClassSpace& space) {
    ValidationReport report;
    std::unordered_map<std::string, Partition> first_partition;
    std::vector<bool> class_present(space.size(), false);

    for (const ImageRecord& r : spec.records) {
        const std::size_t c = space.index_of(r.class_id);
        class_present[c] = true;

        auto [it, inserted] = first_partition.emplace(r.image_id, r.partition);
        if (!inserted) {
            if (it->second != r.partition) {
                report.violations.push_back({Violation::Kind::PartitionOverlap, r.image_id,
                                             "image '" + r.image_id + "' appears in both " +
                                                 partition_name(it->second) + " and " + partition_name(r.partition)});
            } else {
                report.violations.push_back({Violation::Kind::DuplicateRecord, r.image_id,
                                             "image '" + r.image_id + "' listed twice in " + partition_name(r.partition)});
            }
            continue;
        }

        const bool wants_seen = r.partition != Partition::TestUnseen;
        if (space.is_seen(c) != wants_seen) {
            report.violations.push_back({Violation::Kind::WrongClassKind, r.image_id,
                                         "image '" + r.image_id + "' in " + partition_name(r.partition) +
                                             " has " + (space.is_seen(c) ? "seen" : "unseen") + " class '" +
                                             r.class_id + "'"});
        }
        switch (r.partition) {
            case Partition::TrainSeen: ++report.train_seen; break;
            case Partition::TestSeen: ++report.test_seen; break;
            case Partition::TestUnseen: ++report.test_unseen; break;
        }
    }

    auto check = [&](const char* name, const std::optional<std::size_t>& expected, std::size_t actual) {
        if (expected && *expected != actual) {
            std::ostringstream msg;
            msg << name << ": declared " << *expected << ", found " << actual;
            report.violations.push_back({Violation::Kind::CountMismatch, name, msg.str()});
        }
    };
    check("images", spec.expected.images, first_partition.size());
    check("classes", spec.expected.classes, space.size());
    check("seen_classes", spec.expected.seen_classes, space.seen().size());
    check("unseen_classes", spec.expected.unseen_classes, space.unseen().size());
    check("train_seen", spec.expected.train_seen, report.train_seen);
    check("test_seen", spec.expected.test_seen, report.test_seen);
    check("test_unseen", spec.expected.test_unseen, report.test_unseen);
    return report;
}

SplitSpec load_split_declaration(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open split declaration " + path.string());
    SplitSpec spec;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value", lineno);
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto count = [&] { return static_cast<std::size_t>(parse_unsigned(value, key, lineno)); };
        if (key == "dataset") spec.dataset = value;
        else if (key == "images") spec.expected.images = count();
        else if (key == "classes") spec.expected.classes = count();
        else if (key == "seen_classes") spec.expected.seen_classes = count();
        else if (key == "unseen_classes") spec.expected.unseen_classes = count();
        else if (key == "train_seen") spec.expected.train_seen = count();
        else if (key == "test_seen") spec.expected.test_seen = count();
        else if (key == "test_unseen") spec.expected.test_unseen = count();
        else throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "'", lineno, key);
    }
    return spec;
}

std::vector<ImageRecord> load_manifest_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::vector<ImageRecord> out;
    std::string line;
    std::getline(in, line);
    if (trim(line) != "image_id,class_id,partition") {
        throw StructuralError(path.string() + ": expected header image_id,class_id,partition");
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != 3) {
            throw StructuralError(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
        }
        out.push_back({trim(fields[0]), trim(fields[1]), parse_partition(trim(fields[2]))});
    }
    return out;
}

void save_manifest_csv(const std::filesystem::path& path, const std::vector<ImageRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << "image_id,class_id,partition\n";
    for (const auto& r : records) out << r.image_id << ',' << r.class_id << ',' << partition_name(r.partition) << '\n';
}

ClassSpace load_class_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open class list " + path.string());
    std::string line;
    std::getline(in, line);
    if (trim(line) != "class_id,kind") throw StructuralError(path.string() + ": expected header class_id,kind");
    std::vector<ClassInfo> classes;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != 2) throw StructuralError(path.string() + ": expected 2 fields in '" + line + "'");
        const std::string id = trim(fields[0]), kind = trim(fields[1]);
        if (kind != "seen" && kind != "unseen") throw StructuralError(path.string() + ": bad kind '" + kind + "'");
        classes.push_back({id, display_name_from_id(id), kind == "seen"});
    }
    return ClassSpace(std::move(classes));
}

}  // namespace digzsl
