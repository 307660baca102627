#include "digzsl/classifier/classifier.hpp"

#include "digzsl/autodiff/optim.hpp"
#include "digzsl/core/errors.hpp"
#include "digzsl/evaluator/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace digzsl {

std::string to_string(ZslMode m) { return m == ZslMode::Czsl ? "czsl" : "gzsl"; }

ZslMode zsl_mode_from_string(const std::string& s) {
    if (s == "czsl") return ZslMode::Czsl;
    if (s == "gzsl") return ZslMode::Gzsl;
    throw StructuralError("unknown zsl mode '" + s + "'");
}

std::size_t TrainingAssembly::count(RecordSource s) const {
    return static_cast<std::size_t>(std::count(sources.begin(), sources.end(), s));
}

TrainingAssembly assemble_training_set(ZslMode mode, const LabeledSet& seen_features,
                                       const std::vector<GeneratedSampleSet>& generated, const Backbone& backbone,
                                       const ClassSpace& space, const BalancePolicy& policy) {
    std::map<std::size_t, const GeneratedSampleSet*> by_class;
    for (const auto& g : generated) {
        const std::size_t c = space.index_of(g.class_id);
        if (space.is_seen(c)) throw ProtocolViolation("generated set for seen class '" + g.class_id + "'");
        if (by_class.count(c)) throw StructuralError("two generated sets for class '" + g.class_id + "'");
        by_class[c] = &g;
    }
    for (std::size_t c : space.unseen()) {
        if (!by_class.count(c) || by_class[c]->size() == 0) {
            throw StructuralError("no generated images for unseen class '" + space.id(c) + "'");
        }
    }

    TrainingAssembly a;
    a.mode = mode;
    const auto d = static_cast<Eigen::Index>(backbone.feature_dim());
    std::vector<Eigen::Index> real_cols;
    if (mode == ZslMode::Gzsl) {
        if (seen_features.data.rows() != d && !seen_features.empty()) {
            throw StructuralError("seen features do not match the backbone feature size");
        }
        std::map<std::size_t, std::size_t> taken;
        for (std::size_t j = 0; j < seen_features.size(); ++j) {
            const std::size_t c = seen_features.labels[j];
            if (c >= space.size()) throw StructuralError("seen record label outside the class space");
            if (!space.is_seen(c)) {
                throw ProtocolViolation("real record of unseen class '" + space.id(c) + "' in classifier training data");
            }
            if (policy.seen_cap != 0 && taken[c] >= policy.seen_cap) continue;
            ++taken[c];
            real_cols.push_back(static_cast<Eigen::Index>(j));
        }
    }

    std::size_t n_gen = 0;
    for (const auto& [c, g] : by_class) n_gen += g->size();
    a.features.data.resize(d, static_cast<Eigen::Index>(real_cols.size() + n_gen));
    Eigen::Index col = 0;
    for (Eigen::Index j : real_cols) {
        a.features.data.col(col++) = seen_features.data.col(j);
        const auto u = static_cast<std::size_t>(j);
        a.features.labels.push_back(seen_features.labels[u]);
        a.features.ids.push_back(u < seen_features.ids.size() ? seen_features.ids[u] : "real/" + std::to_string(u));
        a.sources.push_back(RecordSource::RealSeen);
    }
    for (const auto& [c, g] : by_class) {
        const Eigen::MatrixXd f = backbone.extract(g->images);
        for (Eigen::Index j = 0; j < f.cols(); ++j) {
            a.features.data.col(col++) = f.col(j);
            a.features.labels.push_back(c);
            a.features.ids.push_back(g->class_id + "/gen/" + std::to_string(g->records[static_cast<std::size_t>(j)].seed));
            a.sources.push_back(RecordSource::GeneratedUnseen);
        }
    }

    std::set<std::size_t> labels(space.unseen().begin(), space.unseen().end());
    if (mode == ZslMode::Gzsl) labels.insert(space.seen().begin(), space.seen().end());
    a.label_space.assign(labels.begin(), labels.end());
    return a;
}

ZslClassifier::ZslClassifier(ZslMode mode, std::vector<std::size_t> label_space, ad::Mlp net)
    : mode_(mode), labels_(std::move(label_space)), net_(std::move(net)) {
    if (labels_.empty()) throw StructuralError("classifier: empty label space");
    if (!std::is_sorted(labels_.begin(), labels_.end())) throw StructuralError("classifier: label space must be sorted");
    if (net_.output_dim() != labels_.size()) throw StructuralError("classifier: output layer does not match the label space");
}

Eigen::MatrixXd ZslClassifier::logits(const Eigen::MatrixXd& features) const {
    if (static_cast<std::size_t>(features.rows()) != net_.input_dim()) {
        throw StructuralError("classifier: feature dimension " + std::to_string(features.rows()) + ", expected " +
                              std::to_string(net_.input_dim()));
    }
    return net_.infer(features);
}

Eigen::MatrixXd ZslClassifier::probabilities(const Eigen::MatrixXd& features) const {
    Eigen::MatrixXd z = logits(features);
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const double m = z.col(j).maxCoeff();
        z.col(j) = (z.col(j).array() - m).exp().matrix();
        z.col(j) /= z.col(j).sum();
    }
    return z;
}

Blob ZslClassifier::to_blob(const ClassSpace& space) const {
    Blob b;
    b.kind = "zsl-classifier";
    b.meta["mode"] = to_string(mode_);
    auto ids = nlohmann::json::array();
    for (std::size_t c : labels_) ids.push_back(space.id(c));
    b.meta["label_space"] = ids;
    b.meta["epochs"] = meta_.epochs;
    b.meta["train_accuracy"] = meta_.train_accuracy;
    net_.write(b, "classifier");
    return b;
}

ZslClassifier ZslClassifier::from_blob(const Blob& blob, const ClassSpace& space) {
    if (blob.kind != "zsl-classifier") throw StructuralError("expected a zsl-classifier artifact, got '" + blob.kind + "'");
    std::vector<std::size_t> labels;
    for (const auto& id : blob.meta.at("label_space")) labels.push_back(space.index_of(id.get<std::string>()));
    ZslClassifier c(zsl_mode_from_string(blob.meta.at("mode").get<std::string>()), std::move(labels),
                    ad::Mlp::read(blob, "classifier", "classifier", ad::Activation::Relu));
    c.meta_.epochs = blob.meta.at("epochs").get<std::size_t>();
    c.meta_.train_accuracy = blob.meta.at("train_accuracy").get<double>();
    return c;
}

ZslClassifier train_classifier(const TrainingAssembly& assembly, const ClassifierConfig& cfg, std::size_t hidden,
                               std::uint64_t seed) {
    const auto& f = assembly.features;
    if (f.empty()) throw DegenerateInput("classifier training: empty assembly");
    if (assembly.mode == ZslMode::Gzsl && assembly.label_space.size() < 2) {
        throw DegenerateInput("classifier training: GZSL needs at least two classes");
    }
    if (cfg.opt.batch_size == 0) throw ConfigError("classifier: batch size must be positive", 0, "classifier.batch_size");

    std::map<std::size_t, std::size_t> position;
    for (std::size_t i = 0; i < assembly.label_space.size(); ++i) position[assembly.label_space[i]] = i;
    std::vector<std::size_t> targets;
    for (std::size_t c : f.labels) {
        auto it = position.find(c);
        if (it == position.end()) throw StructuralError("classifier training: record label outside the label space");
        targets.push_back(it->second);
    }

    ad::Mlp net("classifier", {static_cast<std::size_t>(f.data.rows()), hidden, assembly.label_space.size()}, seed);
    ad::AdamW opt(net.parameters(), {cfg.opt.lr, cfg.opt.beta1, cfg.opt.beta2, cfg.opt.eps, cfg.opt.weight_decay});
    std::mt19937_64 rng(seed ^ 0xc1a55ULL);
    std::vector<std::size_t> order(f.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.opt.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.opt.batch_size);
            Eigen::MatrixXd x(f.data.rows(), static_cast<Eigen::Index>(end - begin));
            std::vector<std::size_t> y;
            for (std::size_t j = begin; j < end; ++j) {
                x.col(static_cast<Eigen::Index>(j - begin)) = f.data.col(static_cast<Eigen::Index>(order[j]));
                y.push_back(targets[order[j]]);
            }
            ad::Tape tape;
            ad::Var loss = ad::cross_entropy(net.forward(tape, tape.constant(std::move(x))), y);
            if (!std::isfinite(loss.scalar())) {
                throw NumericalFailure("classifier training: non-finite loss in epoch " + std::to_string(epoch),
                                       static_cast<long>(epoch));
            }
            opt.zero_grad();
            tape.backward(loss);
            opt.step();
        }
    }

    ZslClassifier clf(assembly.mode, assembly.label_space, std::move(net));
    clf.meta().epochs = cfg.epochs;
    clf.meta().train_accuracy =
        per_class_top1(calibrated_argmax(clf.probabilities(f.data), assembly.label_space, 0.0, ClassSpace{}), f.labels,
                       assembly.label_space);
    return clf;
}

std::vector<std::size_t> calibrated_argmax(const Eigen::MatrixXd& probabilities,
                                           const std::vector<std::size_t>& label_space, double lambda,
                                           const ClassSpace& space) {
    if (static_cast<std::size_t>(probabilities.rows()) != label_space.size()) {
        throw StructuralError("calibrated_argmax: probability rows do not match the label space");
    }
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must lie in [0, 1]", 0, "lambda");
    // An empty space means no class is treated as seen.
    std::vector<double> penalty(label_space.size(), 0.0);
    if (space.size() != 0) {
        for (std::size_t i = 0; i < label_space.size(); ++i) penalty[i] = space.is_seen(label_space[i]) ? lambda : 0.0;
    }
    std::vector<std::size_t> order(label_space.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return label_space[a] < label_space[b]; });

    std::vector<std::size_t> out(static_cast<std::size_t>(probabilities.cols()));
    for (Eigen::Index j = 0; j < probabilities.cols(); ++j) {
        std::size_t best = order[0];
        double best_v = probabilities(static_cast<Eigen::Index>(best), j) - penalty[best];
        for (std::size_t k = 1; k < order.size(); ++k) {
            const std::size_t i = order[k];
            const double v = probabilities(static_cast<Eigen::Index>(i), j) - penalty[i];
            if (v > best_v) {
                best = i;
                best_v = v;
            }
        }
        out[static_cast<std::size_t>(j)] = label_space[best];
    }
    return out;
}

std::vector<std::size_t> predict_calibrated(const ZslClassifier& classifier, const Eigen::MatrixXd& features,
                                            double lambda, const ClassSpace& space) {
    return calibrated_argmax(classifier.probabilities(features), classifier.label_space(), lambda, space);
}

}  // namespace digzsl
