#pragma once

#include "digzsl/autodiff/mlp.hpp"
#include "digzsl/cdm/backbone.hpp"
#include "digzsl/core/artifact_store.hpp"
#include "digzsl/core/class_space.hpp"
#include "digzsl/core/config.hpp"
#include "digzsl/core/dataset.hpp"
#include "digzsl/prototypes/prototype_bank.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

namespace digzsl {

// Cosine scores of one projected vector against a subset of the bank, in
// subset order.
struct ClassScores {
    std::vector<std::size_t> classes;
    Eigen::VectorXd scores;

    std::size_t size() const noexcept { return classes.size(); }
    // Class index with the highest score; ties go to the lowest class index.
    std::size_t argmax() const;
    double score_of(std::size_t class_index) const;
};

struct CdmTrainingMeta {
    std::size_t epochs = 0;
    std::size_t best_epoch = 0;
    double final_seen_accuracy = 0.0;
    double holdout_accuracy = 0.0;
    bool finetuned = false;
    // Records read during training, per class index.
    std::vector<std::size_t> touched_labels;
};

class CdmModel {
public:
    CdmModel() = default;
    CdmModel(std::shared_ptr<Backbone> backbone, ad::Mlp projector, double tau);

    // Projector with one hidden layer of width 2 * proto_dim.
    static CdmModel with_default_projector(std::shared_ptr<Backbone> backbone, std::size_t proto_dim, double tau,
                                           std::uint64_t seed);

    Backbone& backbone() const { return *backbone_; }
    std::shared_ptr<Backbone> backbone_ptr() const { return backbone_; }
    ad::Mlp& projector() { return projector_; }
    const ad::Mlp& projector() const { return projector_; }
    double tau() const noexcept { return tau_; }
    CdmTrainingMeta& meta() { return meta_; }
    const CdmTrainingMeta& meta() const { return meta_; }

    Eigen::VectorXd project(const Eigen::VectorXd& feature) const;
    Eigen::MatrixXd project_batch(const Eigen::MatrixXd& features) const;
    Eigen::MatrixXd features(const Eigen::MatrixXd& images) const { return backbone_->extract(images); }

    // Images -> cosine scores (rows follow `normalized_prototypes` columns) on the tape.
    ad::Var score_images(ad::Tape& tape, const ad::Var& images, const Eigen::MatrixXd& normalized_prototypes);

    // Predicted class index per feature column, restricted to `subset`.
    std::vector<std::size_t> predict(const Eigen::MatrixXd& features, const PrototypeBank& bank,
                                     const std::vector<std::size_t>& subset) const;

    Blob to_blob() const;
    static CdmModel from_blob(const Blob& blob);

private:
    std::shared_ptr<Backbone> backbone_;
    ad::Mlp projector_;
    double tau_ = 0.05;
    CdmTrainingMeta meta_;
};

ClassScores class_scores(const Eigen::VectorXd& projected, const PrototypeBank& bank,
                         const std::vector<std::size_t>& subset);

// -log softmax(scores / tau)[target].
double ce_loss(const ClassScores& scores, std::size_t target, double tau);
// Mean over a batch.
double ce_loss(const std::vector<ClassScores>& scores, const std::vector<std::size_t>& targets, double tau);

// Trains the projector on seen-class feature records. Any record whose label
// is an unseen class aborts with ProtocolViolation before anything is read.
CdmModel train_cdm(const LabeledSet& features, std::shared_ptr<Backbone> backbone, const ClassSpace& space,
                   const PrototypeBank& bank, const CdmConfig& cfg, std::uint64_t seed);

// Same, starting from images; in fine-tune mode the backbone is trained too.
CdmModel train_cdm_images(const LabeledSet& images, std::shared_ptr<Backbone> backbone, const ClassSpace& space,
                          const PrototypeBank& bank, const CdmConfig& cfg, std::uint64_t seed);

// Top-1 over `subset` per class, macro-averaged over the classes present in `features`.
double cdm_accuracy(const CdmModel& model, const LabeledSet& features, const PrototypeBank& bank,
                    const std::vector<std::size_t>& subset);

}  // namespace digzsl
