#include "digzsl/core/dataset.hpp"

#include "digzsl/core/errors.hpp"
#include "digzsl/core/text.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace digzsl {

LabeledSet LabeledSet::subset(const std::vector<std::size_t>& columns) const {
    LabeledSet out;
    out.data.resize(data.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
        out.data.col(static_cast<Eigen::Index>(j)) = data.col(static_cast<Eigen::Index>(columns[j]));
        out.labels.push_back(labels.at(columns[j]));
        if (!ids.empty()) out.ids.push_back(ids.at(columns[j]));
    }
    return out;
}

namespace {

struct Rgb {
    double r, g, b;
};

const std::vector<std::pair<std::string, Rgb>>& color_table() {
    static const std::vector<std::pair<std::string, Rgb>> t{
        {"red", {0.90, 0.12, 0.10}},  {"green", {0.12, 0.85, 0.18}}, {"blue", {0.12, 0.22, 0.92}},
        {"yellow", {0.92, 0.88, 0.12}}, {"purple", {0.62, 0.15, 0.80}}, {"cyan", {0.12, 0.85, 0.88}},
        {"white", {0.95, 0.95, 0.95}}, {"orange", {0.95, 0.55, 0.10}}};
    return t;
}

Rgb lookup_color(const std::string& name, const std::string& class_id) {
    for (const auto& [n, c] : color_table()) {
        if (n == name) return c;
    }
    throw StructuralError("toy class '" + class_id + "': unknown color '" + name + "'");
}

bool inside(const std::string& shape, double dx, double dy, double r) {
    if (shape == "circle") return dx * dx + dy * dy <= r * r;
    if (shape == "square") return std::abs(dx) <= 0.85 * r && std::abs(dy) <= 0.85 * r;
    if (shape == "triangle") {
        // apex up; dy grows downward
        if (dy < -r || dy > 0.8 * r) return false;
        const double half_width = (dy + r) / (1.8 * r) * r;
        return std::abs(dx) <= half_width;
    }
    if (shape == "ring") {
        const double d2 = dx * dx + dy * dy;
        return d2 <= r * r && d2 >= 0.36 * r * r;
    }
    if (shape == "cross") return (std::abs(dx) <= 0.3 * r && std::abs(dy) <= r) || (std::abs(dy) <= 0.3 * r && std::abs(dx) <= r);
    return false;
}

}  // namespace

const std::vector<std::string>& toy_colors() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& [n, c] : color_table()) v.push_back(n);
        return v;
    }();
    return names;
}

const std::vector<std::string>& toy_shapes() {
    static const std::vector<std::string> names{"circle", "square", "triangle", "ring", "cross"};
    return names;
}

Eigen::VectorXd render_toy_image(const std::string& class_id, const ImageShape& shape, double pixel_noise,
                                 std::uint64_t rng_seed) {
    auto parts = split(class_id, '_');
    if (parts.size() != 2) throw StructuralError("toy class id '" + class_id + "' must look like <color>_<shape>");
    const Rgb color = lookup_color(parts[0], class_id);
    const std::string& form = parts[1];
    bool known = false;
    for (const auto& s : toy_shapes()) known = known || s == form;
    if (!known) throw StructuralError("toy class '" + class_id + "': unknown shape '" + form + "'");

    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double w = static_cast<double>(shape.width), h = static_cast<double>(shape.height);
    const double cx = 0.5 * (w - 1.0) + 0.08 * w * jitter(rng);
    const double cy = 0.5 * (h - 1.0) + 0.08 * h * jitter(rng);
    const double radius = 0.28 * std::min(w, h) * (1.0 + 0.12 * jitter(rng));
    const double brightness = 0.9 + 0.1 * jitter(rng);
    const std::array<double, 3> rgb{color.r, color.g, color.b};
    constexpr double background = 0.05;

    Eigen::VectorXd img(static_cast<Eigen::Index>(shape.size()));
    const std::size_t plane = shape.height * shape.width;
    for (std::size_t y = 0; y < shape.height; ++y) {
        for (std::size_t x = 0; x < shape.width; ++x) {
            const bool in = inside(form, static_cast<double>(x) - cx, static_cast<double>(y) - cy, radius);
            for (std::size_t c = 0; c < shape.channels; ++c) {
                double v = in ? brightness * rgb[c % 3] : background;
                v += pixel_noise * noise(rng);
                img[static_cast<Eigen::Index>(c * plane + y * shape.width + x)] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return img;
}

ToyDataset make_toy_dataset(const ToyDatasetConfig& cfg, const ImageShape& shape, std::uint64_t seed) {
    std::vector<ClassInfo> infos;
    for (const auto& id : cfg.seen) infos.push_back({id, display_name_from_id(id), true});
    for (const auto& id : cfg.unseen) infos.push_back({id, display_name_from_id(id), false});

    ToyDataset ds;
    ds.space = ClassSpace(std::move(infos));
    ds.shape = shape;
    ds.split.dataset = "toy";

    auto fill = [&](LabeledSet& set, Partition part, const std::vector<std::size_t>& classes, std::size_t per_class,
                    std::uint64_t stream) {
        set.data.resize(static_cast<Eigen::Index>(shape.size()), static_cast<Eigen::Index>(classes.size() * per_class));
        Eigen::Index col = 0;
        for (std::size_t c : classes) {
            for (std::size_t i = 0; i < per_class; ++i) {
                const std::string& cid = ds.space.id(c);
                const std::uint64_t s = fnv1a64(cid + "/" + std::to_string(i), seed * 0x9e3779b97f4a7c15ULL + stream);
                set.data.col(col++) = render_toy_image(cid, shape, cfg.pixel_noise, s);
                set.labels.push_back(c);
                set.ids.push_back(std::string(partition_name(part)) + "/" + cid + "/" + std::to_string(i));
                ds.split.records.push_back({set.ids.back(), cid, part});
            }
        }
    };
    fill(ds.train_seen, Partition::TrainSeen, ds.space.seen(), cfg.train_per_class, 1);
    fill(ds.test_seen, Partition::TestSeen, ds.space.seen(), cfg.test_seen_per_class, 2);
    fill(ds.test_unseen, Partition::TestUnseen, ds.space.unseen(), cfg.test_unseen_per_class, 3);

    ExpectedCounts& e = ds.split.expected;
    e.classes = ds.space.size();
    e.seen_classes = ds.space.seen().size();
    e.unseen_classes = ds.space.unseen().size();
    e.train_seen = ds.train_seen.size();
    e.test_seen = ds.test_seen.size();
    e.test_unseen = ds.test_unseen.size();
    e.images = ds.train_seen.size() + ds.test_seen.size() + ds.test_unseen.size();
    return ds;
}

}  // namespace digzsl
