#include "digzsl/cdm/cdm.hpp"

#include "digzsl/autodiff/optim.hpp"
#include "digzsl/core/errors.hpp"
#include "digzsl/evaluator/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace digzsl {

std::size_t ClassScores::argmax() const {
    if (classes.empty()) throw StructuralError("argmax of an empty score map");
    std::size_t best = 0;
    for (std::size_t i = 1; i < classes.size(); ++i) {
        const auto si = scores[static_cast<Eigen::Index>(i)], sb = scores[static_cast<Eigen::Index>(best)];
        if (si > sb || (si == sb && classes[i] < classes[best])) best = i;
    }
    return classes[best];
}

double ClassScores::score_of(std::size_t class_index) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] == class_index) return scores[static_cast<Eigen::Index>(i)];
    }
    throw StructuralError("class " + std::to_string(class_index) + " has no score");
}

CdmModel::CdmModel(std::shared_ptr<Backbone> backbone, ad::Mlp projector, double tau)
    : backbone_(std::move(backbone)), projector_(std::move(projector)), tau_(tau) {
    if (!(tau_ > 0.0)) throw StructuralError("cdm: temperature must be positive");
    if (!backbone_) throw StructuralError("cdm: backbone required");
    if (projector_.input_dim() != backbone_->feature_dim()) {
        throw StructuralError("cdm: projector input does not match the backbone feature dimension");
    }
}

CdmModel CdmModel::with_default_projector(std::shared_ptr<Backbone> backbone, std::size_t proto_dim, double tau,
                                          std::uint64_t seed) {
    const std::size_t d_v = backbone->feature_dim();
    ad::Mlp mlp("projector", {d_v, 2 * proto_dim, proto_dim}, seed, ad::Activation::Relu);
    return CdmModel(std::move(backbone), std::move(mlp), tau);
}

Eigen::VectorXd CdmModel::project(const Eigen::VectorXd& feature) const {
    if (static_cast<std::size_t>(feature.size()) != projector_.input_dim()) {
        throw StructuralError("project: feature has dimension " + std::to_string(feature.size()) + ", expected " +
                              std::to_string(projector_.input_dim()));
    }
    return projector_.infer(feature);
}

Eigen::MatrixXd CdmModel::project_batch(const Eigen::MatrixXd& features) const { return projector_.infer(features); }

ad::Var CdmModel::score_images(ad::Tape& tape, const ad::Var& images, const Eigen::MatrixXd& normalized_prototypes) {
    ad::Var f = backbone_->forward(tape, images);
    ad::Var a = ad::normalize_cols(projector_.forward(tape, f));
    return ad::matmul(tape.constant(normalized_prototypes.transpose()), a);
}

std::vector<std::size_t> CdmModel::predict(const Eigen::MatrixXd& features, const PrototypeBank& bank,
                                           const std::vector<std::size_t>& subset) const {
    const Eigen::MatrixXd proj = project_batch(features);
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(proj.cols()));
    for (Eigen::Index j = 0; j < proj.cols(); ++j) out.push_back(class_scores(proj.col(j), bank, subset).argmax());
    return out;
}

Blob CdmModel::to_blob() const {
    Blob b;
    b.kind = "cdm";
    b.meta["tau"] = tau_;
    b.meta["backbone_tag"] = backbone_->tag();
    b.meta["epochs"] = meta_.epochs;
    b.meta["best_epoch"] = meta_.best_epoch;
    b.meta["final_seen_accuracy"] = meta_.final_seen_accuracy;
    b.meta["holdout_accuracy"] = meta_.holdout_accuracy;
    b.meta["finetuned"] = meta_.finetuned;
    b.meta["touched_labels"] = meta_.touched_labels;
    backbone_->write(b);
    projector_.write(b, "projector");
    return b;
}

CdmModel CdmModel::from_blob(const Blob& blob) {
    if (blob.kind != "cdm") throw StructuralError("expected a cdm artifact, got " + blob.kind);
    std::shared_ptr<Backbone> backbone = read_backbone(blob);
    backbone->set_frozen(true);
    CdmModel m(std::move(backbone), ad::Mlp::read(blob, "projector", "projector", ad::Activation::Relu),
               blob.meta.at("tau").get<double>());
    m.meta_.epochs = blob.meta.at("epochs").get<std::size_t>();
    m.meta_.best_epoch = blob.meta.at("best_epoch").get<std::size_t>();
    m.meta_.final_seen_accuracy = blob.meta.at("final_seen_accuracy").get<double>();
    m.meta_.holdout_accuracy = blob.meta.at("holdout_accuracy").get<double>();
    m.meta_.finetuned = blob.meta.at("finetuned").get<bool>();
    m.meta_.touched_labels = blob.meta.at("touched_labels").get<std::vector<std::size_t>>();
    return m;
}

ClassScores class_scores(const Eigen::VectorXd& projected, const PrototypeBank& bank,
                         const std::vector<std::size_t>& subset) {
    if (subset.empty()) throw StructuralError("class scores: empty class subset");
    if (static_cast<std::size_t>(projected.size()) != bank.dim()) {
        throw StructuralError("class scores: projected vector does not match the prototype dimension");
    }
    if (!(projected.norm() > 0.0)) throw DegenerateInput("class scores: projected vector has zero norm");
    ClassScores out;
    out.classes = subset;
    out.scores.resize(static_cast<Eigen::Index>(subset.size()));
    for (std::size_t i = 0; i < subset.size(); ++i) {
        if (subset[i] >= bank.size()) throw StructuralError("class scores: class index outside the bank");
        out.scores[static_cast<Eigen::Index>(i)] = cosine(projected, bank.prototype(subset[i]));
    }
    return out;
}

double ce_loss(const ClassScores& scores, std::size_t target, double tau) {
    if (!(tau > 0.0)) throw StructuralError("ce_loss: temperature must be positive");
    std::size_t pos = scores.classes.size();
    for (std::size_t i = 0; i < scores.classes.size(); ++i) {
        if (scores.classes[i] == target) pos = i;
    }
    if (pos == scores.classes.size()) throw StructuralError("ce_loss: target class has no score");
    const Eigen::VectorXd z = scores.scores / tau;
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    return lse - z[static_cast<Eigen::Index>(pos)];
}

double ce_loss(const std::vector<ClassScores>& scores, const std::vector<std::size_t>& targets, double tau) {
    if (scores.size() != targets.size() || scores.empty()) throw StructuralError("ce_loss: batch size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) total += ce_loss(scores[i], targets[i], tau);
    return total / static_cast<double>(scores.size());
}

namespace {

void enforce_seen_only(const LabeledSet& records, const ClassSpace& space, const char* who) {
    if (records.labels.size() != static_cast<std::size_t>(records.data.cols())) {
        throw StructuralError(std::string(who) + ": label count does not match the number of records");
    }
    for (std::size_t i = 0; i < records.labels.size(); ++i) {
        const std::size_t c = records.labels[i];
        if (c >= space.size()) throw StructuralError(std::string(who) + ": label outside the class space");
        if (!space.is_seen(c)) {
            const std::string rec = i < records.ids.size() ? records.ids[i] : std::to_string(i);
            throw ProtocolViolation(std::string(who) + ": record '" + rec + "' is labeled with unseen class '" +
                                    space.id(c) + "'");
        }
    }
    if (records.empty()) throw DegenerateInput(std::string(who) + ": no training records");
}

struct HoldoutSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> holdout;
};

// Per class, the first floor(n * fraction) records of a seeded shuffle are held out; one is always kept for training.
HoldoutSplit split_holdout(const std::vector<std::size_t>& labels, double fraction, std::mt19937_64& rng) {
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    HoldoutSplit out;
    for (auto& [c, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        auto n_hold = static_cast<std::size_t>(std::floor(static_cast<double>(idx.size()) * fraction));
        n_hold = std::min(n_hold, idx.size() - 1);
        out.holdout.insert(out.holdout.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_hold));
        out.train.insert(out.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_hold), idx.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.holdout.begin(), out.holdout.end());
    return out;
}

ad::AdamWSettings adamw_from(const OptimizerConfig& o, double lr) {
    return {lr, o.beta1, o.beta2, o.eps, o.weight_decay};
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& data, const std::vector<std::size_t>& cols, std::size_t begin,
                       std::size_t end) {
    Eigen::MatrixXd out(data.rows(), static_cast<Eigen::Index>(end - begin));
    for (std::size_t j = begin; j < end; ++j) out.col(static_cast<Eigen::Index>(j - begin)) = data.col(static_cast<Eigen::Index>(cols[j]));
    return out;
}

double subset_accuracy(const CdmModel& model, const Eigen::MatrixXd& features, const std::vector<std::size_t>& labels,
                       const std::vector<std::size_t>& rows, const PrototypeBank& bank,
                       const std::vector<std::size_t>& subset) {
    if (rows.empty()) return 0.0;
    const Eigen::MatrixXd f = gather(features, rows, 0, rows.size());
    std::vector<std::size_t> y;
    for (std::size_t r : rows) y.push_back(labels[r]);
    return per_class_top1(model.predict(f, bank, subset), y, subset);
}

// Shared loop; `inputs` are features, or images when the backbone is being fine-tuned.
CdmModel fit(const Eigen::MatrixXd& inputs, const LabeledSet& records, std::shared_ptr<Backbone> backbone,
             const ClassSpace& space, const PrototypeBank& bank, const CdmConfig& cfg, std::uint64_t seed,
             bool finetune) {
    if (bank.size() != space.size()) throw StructuralError("train_cdm: prototype bank does not cover the class space");
    const auto& seen = space.seen();
    std::vector<std::size_t> position(space.size(), 0);
    for (std::size_t i = 0; i < seen.size(); ++i) position[seen[i]] = i;
    const Eigen::MatrixXd protos = bank.normalized(seen);
    const Eigen::MatrixXd protos_t = protos.transpose();

    CdmModel model = CdmModel::with_default_projector(backbone, bank.dim(), cfg.tau, seed);
    model.meta().touched_labels.assign(space.size(), 0);
    model.meta().finetuned = finetune;

    std::mt19937_64 rng(seed ^ 0x5eedcd3ULL);
    const HoldoutSplit parts = split_holdout(records.labels, cfg.holdout_fraction, rng);

    ad::AdamW opt(model.projector().parameters(), adamw_from(cfg.opt, cfg.opt.lr));
    std::unique_ptr<ad::AdamW> backbone_opt;
    if (finetune) {
        backbone->set_frozen(false);
        backbone_opt = std::make_unique<ad::AdamW>(backbone->parameters(), adamw_from(cfg.opt, cfg.finetune_lr));
    }

    auto features_of = [&](const std::vector<std::size_t>& rows) -> Eigen::MatrixXd {
        Eigen::MatrixXd x = gather(inputs, rows, 0, rows.size());
        return finetune ? backbone->extract(x) : x;
    };

    ad::Mlp best = model.projector();
    std::unique_ptr<Backbone> best_backbone = finetune ? backbone->clone() : nullptr;
    double best_acc = -1.0;
    std::size_t best_epoch = 0;
    std::vector<std::size_t> order = parts.train;
    const std::size_t batch = std::max<std::size_t>(1, cfg.opt.batch_size);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            std::vector<std::size_t> targets;
            for (std::size_t j = start; j < end; ++j) {
                const std::size_t c = records.labels[order[j]];
                ++model.meta().touched_labels[c];
                targets.push_back(position[c]);
            }
            ad::Tape tape;
            ad::Var x = tape.constant(gather(inputs, order, start, end));
            if (finetune) x = backbone->forward(tape, x);
            ad::Var a = ad::normalize_cols(model.projector().forward(tape, x));
            ad::Var scores = ad::matmul(tape.constant(protos_t), a);
            ad::Var loss = ad::cross_entropy(scores, targets, 1.0 / cfg.tau);
            if (!std::isfinite(loss.scalar())) {
                throw NumericalFailure("train_cdm: non-finite loss in epoch " + std::to_string(epoch));
            }
            tape.backward(loss);
            opt.step();
            opt.zero_grad();
            if (backbone_opt) {
                backbone_opt->step();
                backbone_opt->zero_grad();
            }
        }
        if (!parts.holdout.empty()) {
            const Eigen::MatrixXd hf = features_of(parts.holdout);
            std::vector<std::size_t> hy;
            for (std::size_t r : parts.holdout) hy.push_back(records.labels[r]);
            const double acc = per_class_top1(model.predict(hf, bank, seen), hy, seen);
            if (acc > best_acc) {
                best_acc = acc;
                best_epoch = epoch;
                best = model.projector();
                if (finetune) best_backbone = backbone->clone();
            }
        }
    }

    if (!parts.holdout.empty()) {
        model.projector() = best;
        if (finetune) {
            auto params = backbone->parameters();
            auto saved = best_backbone->parameters();
            for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = saved[i]->value;
        }
        model.meta().holdout_accuracy = best_acc;
        model.meta().best_epoch = best_epoch;
    } else {
        model.meta().best_epoch = cfg.epochs;
    }
    if (finetune) backbone->set_frozen(true);
    model.meta().epochs = cfg.epochs;

    std::vector<std::size_t> all(records.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const Eigen::MatrixXd f = finetune ? backbone->extract(inputs) : inputs;
    model.meta().final_seen_accuracy = subset_accuracy(model, f, records.labels, all, bank, seen);
    return model;
}

}  // namespace

CdmModel train_cdm(const LabeledSet& features, std::shared_ptr<Backbone> backbone, const ClassSpace& space,
                   const PrototypeBank& bank, const CdmConfig& cfg, std::uint64_t seed) {
    enforce_seen_only(features, space, "train_cdm");
    if (static_cast<std::size_t>(features.data.rows()) != backbone->feature_dim()) {
        throw StructuralError("train_cdm: feature dimension does not match the backbone");
    }
    return fit(features.data, features, std::move(backbone), space, bank, cfg, seed, false);
}

CdmModel train_cdm_images(const LabeledSet& images, std::shared_ptr<Backbone> backbone, const ClassSpace& space,
                          const PrototypeBank& bank, const CdmConfig& cfg, std::uint64_t seed) {
    enforce_seen_only(images, space, "train_cdm");
    if (cfg.finetune) {
        std::shared_ptr<Backbone> own = backbone->clone();
        return fit(images.data, images, std::move(own), space, bank, cfg, seed, true);
    }
    const Eigen::MatrixXd features = backbone->extract(images.data);
    return fit(features, images, std::move(backbone), space, bank, cfg, seed, false);
}

double cdm_accuracy(const CdmModel& model, const LabeledSet& features, const PrototypeBank& bank,
                    const std::vector<std::size_t>& subset) {
    if (features.empty()) throw DegenerateInput("cdm_accuracy: no records");
    return per_class_top1(model.predict(features.data, bank, subset), features.labels, subset);
}

}  // namespace digzsl
