#pragma once

#include "digzsl/classifier/classifier.hpp"
#include "digzsl/core/class_space.hpp"
#include "digzsl/core/dataset.hpp"
#include "digzsl/dct/dct.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace digzsl {

struct ClassAccuracy {
    std::string class_id;
    std::size_t count = 0;
    double accuracy = 0.0;
};

// Accuracy of every class in `subset` that has at least one record.
std::vector<ClassAccuracy> per_class_breakdown(const std::vector<std::size_t>& predictions,
                                               const std::vector<std::size_t>& labels,
                                               const std::vector<std::size_t>& subset, const ClassSpace& space);

struct CalibrationPoint {
    double lambda = 0.0;
    double unseen = 0.0;
    double seen = 0.0;
    double harmonic = 0.0;
};

struct CalibrationCurve {
    std::vector<CalibrationPoint> points;
    std::size_t best = 0;  // index of the highest H; first one on ties

    const CalibrationPoint& best_point() const { return points.at(best); }
};

// Probabilities are over `label_space`, one column per test record.
CalibrationCurve calibration_sweep(const Eigen::MatrixXd& seen_probs, const std::vector<std::size_t>& seen_labels,
                                   const Eigen::MatrixXd& unseen_probs, const std::vector<std::size_t>& unseen_labels,
                                   const std::vector<std::size_t>& label_space, const ClassSpace& space,
                                   const std::vector<double>& lambda_grid);

CalibrationCurve calibration_sweep(const ZslClassifier& classifier, const LabeledSet& test_seen,
                                   const LabeledSet& test_unseen, const ClassSpace& space,
                                   const std::vector<double>& lambda_grid);

struct MetricsReport {
    ZslMode mode = ZslMode::Czsl;
    double acc = 0.0;  // CZSL
    double unseen = 0.0, seen = 0.0, harmonic = 0.0;  // GZSL
    std::optional<double> lambda;
    std::string lambda_source;  // "config" or "sweep-best"
    std::string config_hash;
    std::vector<ClassAccuracy> per_class;
    std::vector<CalibrationPoint> sweep;
    nlohmann::json extras = nlohmann::json::object();

    // Fractions plus percent strings with one decimal.
    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
};

// Percent with one decimal, e.g. 0.4853 -> "48.5".
std::string percent(double fraction);

MetricsReport evaluate_czsl(const ZslClassifier& classifier, const LabeledSet& test_unseen, const ClassSpace& space);
MetricsReport evaluate_gzsl(const ZslClassifier& classifier, const LabeledSet& test_seen, const LabeledSet& test_unseen,
                            const ClassSpace& space, double lambda);

struct EmbeddingRow {
    std::string class_id;
    std::string display_name;
    std::size_t steps = 0;
    bool untrained = false;
    std::string stop;
    std::vector<double> values;
};

// Tab-separated table, one row per state, header first.
std::string export_embeddings(const std::vector<TokenEmbeddingState>& states, const ClassSpace& space);
std::vector<EmbeddingRow> parse_embedding_export(const std::string& text);

}  // namespace digzsl
