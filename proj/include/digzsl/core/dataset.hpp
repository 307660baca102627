#pragma once

#include "digzsl/core/class_space.hpp"
#include "digzsl/core/config.hpp"
#include "digzsl/core/split.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace digzsl {

// Images (or features) stored one per column with class-index labels.
struct LabeledSet {
    Eigen::MatrixXd data;
    std::vector<std::size_t> labels;
    std::vector<std::string> ids;

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }
    LabeledSet subset(const std::vector<std::size_t>& columns) const;
};

struct ImageShape {
    std::size_t channels = 3;
    std::size_t height = 32;
    std::size_t width = 32;

    std::size_t size() const noexcept { return channels * height * width; }
    bool operator==(const ImageShape&) const = default;
};

// Parametric colored-shape classes. A class id is `<color>_<shape>`, e.g.
// `red_circle`; images are channel-major with values in [0, 1].
struct ToyDataset {
    ClassSpace space;
    SplitSpec split;
    ImageShape shape;
    LabeledSet train_seen;
    LabeledSet test_seen;
    LabeledSet test_unseen;
};

const std::vector<std::string>& toy_colors();
const std::vector<std::string>& toy_shapes();

// Renders one image of `class_id`; `rng_seed` drives the jitter and pixel noise.
Eigen::VectorXd render_toy_image(const std::string& class_id, const ImageShape& shape, double pixel_noise,
                                 std::uint64_t rng_seed);

ToyDataset make_toy_dataset(const ToyDatasetConfig& cfg, const ImageShape& shape, std::uint64_t seed);

}  // namespace digzsl
