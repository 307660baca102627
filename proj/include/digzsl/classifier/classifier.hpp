#pragma once

#include "digzsl/autodiff/mlp.hpp"
#include "digzsl/cdm/backbone.hpp"
#include "digzsl/core/artifact_store.hpp"
#include "digzsl/core/class_space.hpp"
#include "digzsl/core/config.hpp"
#include "digzsl/core/dataset.hpp"
#include "digzsl/dct/dct.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace digzsl {

enum class ZslMode { Czsl, Gzsl };

std::string to_string(ZslMode m);
ZslMode zsl_mode_from_string(const std::string& s);

enum class RecordSource { RealSeen, GeneratedUnseen };

struct TrainingAssembly {
    ZslMode mode = ZslMode::Czsl;
    LabeledSet features;
    std::vector<RecordSource> sources;
    std::vector<std::size_t> label_space;  // sorted class indices

    std::size_t count(RecordSource s) const;
};

struct BalancePolicy {
    // Real seen records kept per class in GZSL; 0 keeps all.
    std::size_t seen_cap = 0;
};

// Generated images go through `backbone`, the same one the CDM uses. Real
// seen records are already features from that backbone.
TrainingAssembly assemble_training_set(ZslMode mode, const LabeledSet& seen_features,
                                       const std::vector<GeneratedSampleSet>& generated, const Backbone& backbone,
                                       const ClassSpace& space, const BalancePolicy& policy = {});

struct ClassifierMeta {
    std::size_t epochs = 0;
    double train_accuracy = 0.0;
};

class ZslClassifier {
public:
    ZslClassifier() = default;
    ZslClassifier(ZslMode mode, std::vector<std::size_t> label_space, ad::Mlp net);

    ZslMode mode() const noexcept { return mode_; }
    const std::vector<std::size_t>& label_space() const noexcept { return labels_; }
    const ad::Mlp& net() const noexcept { return net_; }
    ad::Mlp& net() noexcept { return net_; }
    ClassifierMeta& meta() noexcept { return meta_; }
    const ClassifierMeta& meta() const noexcept { return meta_; }

    Eigen::MatrixXd logits(const Eigen::MatrixXd& features) const;
    // Softmax over the label space, one column per feature.
    Eigen::MatrixXd probabilities(const Eigen::MatrixXd& features) const;

    Blob to_blob(const ClassSpace& space) const;
    static ZslClassifier from_blob(const Blob& blob, const ClassSpace& space);

private:
    ZslMode mode_ = ZslMode::Czsl;
    std::vector<std::size_t> labels_;
    ad::Mlp net_;
    ClassifierMeta meta_;
};

// Hidden width follows the CDM projector (2 * proto_dim).
ZslClassifier train_classifier(const TrainingAssembly& assembly, const ClassifierConfig& cfg, std::size_t hidden,
                               std::uint64_t seed);

// argmax_c (o_c - lambda * [c seen]) over `label_space`; ties go to the lowest class index.
std::vector<std::size_t> calibrated_argmax(const Eigen::MatrixXd& probabilities,
                                           const std::vector<std::size_t>& label_space, double lambda,
                                           const ClassSpace& space);

std::vector<std::size_t> predict_calibrated(const ZslClassifier& classifier, const Eigen::MatrixXd& features,
                                            double lambda, const ClassSpace& space);

}  // namespace digzsl
