#include "digzsl/evaluator/report.hpp"

#include "digzsl/core/errors.hpp"
#include "digzsl/evaluator/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>

namespace digzsl {

namespace {

std::string shortest(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw StructuralError("embedding export: bad number '" + s + "'");
    return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

nlohmann::json point_json(const CalibrationPoint& p) {
    return {{"lambda", p.lambda}, {"U", p.unseen}, {"S", p.seen}, {"H", p.harmonic}};
}

}  // namespace

std::vector<ClassAccuracy> per_class_breakdown(const std::vector<std::size_t>& predictions,
                                               const std::vector<std::size_t>& labels,
                                               const std::vector<std::size_t>& subset, const ClassSpace& space) {
    if (predictions.size() != labels.size()) throw StructuralError("per_class_breakdown: count mismatch");
    std::map<std::size_t, std::pair<std::size_t, std::size_t>> tally;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& t = tally[labels[i]];
        ++t.first;
        if (predictions[i] == labels[i]) ++t.second;
    }
    std::vector<ClassAccuracy> out;
    for (std::size_t c : subset) {
        auto it = tally.find(c);
        if (it == tally.end()) continue;
        out.push_back({space.id(c), it->second.first,
                       static_cast<double>(it->second.second) / static_cast<double>(it->second.first)});
    }
    return out;
}

CalibrationCurve calibration_sweep(const Eigen::MatrixXd& seen_probs, const std::vector<std::size_t>& seen_labels,
                                   const Eigen::MatrixXd& unseen_probs, const std::vector<std::size_t>& unseen_labels,
                                   const std::vector<std::size_t>& label_space, const ClassSpace& space,
                                   const std::vector<double>& lambda_grid) {
    if (lambda_grid.empty()) throw ConfigError("calibration sweep: empty lambda grid", 0, "lambda_grid");
    CalibrationCurve curve;
    for (double lambda : lambda_grid) {
        CalibrationPoint p;
        p.lambda = lambda;
        p.unseen = per_class_top1(calibrated_argmax(unseen_probs, label_space, lambda, space), unseen_labels, space.unseen());
        p.seen = per_class_top1(calibrated_argmax(seen_probs, label_space, lambda, space), seen_labels, space.seen());
        p.harmonic = harmonic_mean(p.unseen, p.seen);
        if (curve.points.empty() || p.harmonic > curve.points[curve.best].harmonic) curve.best = curve.points.size();
        curve.points.push_back(p);
    }
    return curve;
}

CalibrationCurve calibration_sweep(const ZslClassifier& classifier, const LabeledSet& test_seen,
                                   const LabeledSet& test_unseen, const ClassSpace& space,
                                   const std::vector<double>& lambda_grid) {
    if (classifier.mode() != ZslMode::Gzsl) throw StructuralError("calibration sweep needs a GZSL classifier");
    return calibration_sweep(classifier.probabilities(test_seen.data), test_seen.labels,
                             classifier.probabilities(test_unseen.data), test_unseen.labels, classifier.label_space(),
                             space, lambda_grid);
}

std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * fraction);
    return buf;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["mode"] = to_string(mode);
    j["config_hash"] = config_hash;
    if (mode == ZslMode::Czsl) {
        j["acc"] = acc;
        j["display"] = {{"acc", percent(acc)}};
    } else {
        j["U"] = unseen;
        j["S"] = seen;
        j["H"] = harmonic;
        j["display"] = {{"U", percent(unseen)}, {"S", percent(seen)}, {"H", percent(harmonic)}};
    }
    j["lambda"] = lambda ? nlohmann::json(*lambda) : nlohmann::json(nullptr);
    if (!lambda_source.empty()) j["lambda_source"] = lambda_source;
    auto pc = nlohmann::json::array();
    for (const auto& c : per_class) pc.push_back({{"class_id", c.class_id}, {"count", c.count}, {"accuracy", c.accuracy}});
    j["per_class"] = pc;
    if (!sweep.empty()) {
        auto s = nlohmann::json::array();
        for (const auto& p : sweep) s.push_back(point_json(p));
        j["sweep"] = s;
    }
    for (const auto& [k, v] : extras.items()) j[k] = v;
    return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.mode = zsl_mode_from_string(j.at("mode").get<std::string>());
    r.config_hash = j.value("config_hash", "");
    if (r.mode == ZslMode::Czsl) {
        r.acc = j.at("acc").get<double>();
    } else {
        r.unseen = j.at("U").get<double>();
        r.seen = j.at("S").get<double>();
        r.harmonic = j.at("H").get<double>();
    }
    if (j.contains("lambda") && !j.at("lambda").is_null()) r.lambda = j.at("lambda").get<double>();
    r.lambda_source = j.value("lambda_source", "");
    for (const auto& c : j.at("per_class")) {
        r.per_class.push_back({c.at("class_id").get<std::string>(), c.at("count").get<std::size_t>(),
                               c.at("accuracy").get<double>()});
    }
    if (j.contains("sweep")) {
        for (const auto& p : j.at("sweep")) {
            r.sweep.push_back({p.at("lambda").get<double>(), p.at("U").get<double>(), p.at("S").get<double>(),
                               p.at("H").get<double>()});
        }
    }
    static const char* known[] = {"mode", "config_hash", "acc", "U", "S", "H", "display",
                                  "lambda", "lambda_source", "per_class", "sweep"};
    for (const auto& [k, v] : j.items()) {
        if (std::find(std::begin(known), std::end(known), k) == std::end(known)) r.extras[k] = v;
    }
    return r;
}

MetricsReport evaluate_czsl(const ZslClassifier& classifier, const LabeledSet& test_unseen, const ClassSpace& space) {
    if (classifier.mode() != ZslMode::Czsl) throw StructuralError("evaluate_czsl needs a CZSL classifier");
    MetricsReport r;
    r.mode = ZslMode::Czsl;
    const auto pred = predict_calibrated(classifier, test_unseen.data, 0.0, space);
    r.acc = per_class_top1(pred, test_unseen.labels, space.unseen());
    r.per_class = per_class_breakdown(pred, test_unseen.labels, space.unseen(), space);
    return r;
}

MetricsReport evaluate_gzsl(const ZslClassifier& classifier, const LabeledSet& test_seen, const LabeledSet& test_unseen,
                            const ClassSpace& space, double lambda) {
    if (classifier.mode() != ZslMode::Gzsl) throw StructuralError("evaluate_gzsl needs a GZSL classifier");
    MetricsReport r;
    r.mode = ZslMode::Gzsl;
    r.lambda = lambda;
    r.lambda_source = "config";
    const auto pu = predict_calibrated(classifier, test_unseen.data, lambda, space);
    const auto ps = predict_calibrated(classifier, test_seen.data, lambda, space);
    r.unseen = per_class_top1(pu, test_unseen.labels, space.unseen());
    r.seen = per_class_top1(ps, test_seen.labels, space.seen());
    r.harmonic = harmonic_mean(r.unseen, r.seen);
    r.per_class = per_class_breakdown(ps, test_seen.labels, space.seen(), space);
    auto u = per_class_breakdown(pu, test_unseen.labels, space.unseen(), space);
    r.per_class.insert(r.per_class.end(), u.begin(), u.end());
    return r;
}

std::string export_embeddings(const std::vector<TokenEmbeddingState>& states, const ClassSpace& space) {
    if (states.empty()) throw DegenerateInput("embedding export: no token states");
    const auto dim = states.front().embedding.size();
    std::ostringstream out;
    out << "class_id\tdisplay_name\tsteps\tuntrained\tstop";
    for (Eigen::Index k = 0; k < dim; ++k) out << "\te" << k;
    out << '\n';
    for (const auto& s : states) {
        if (s.embedding.size() != dim) throw StructuralError("embedding export: states differ in embedding size");
        const auto found = space.find(s.class_id);
        const std::string name = found ? space.at(*found).display_name : s.class_id;
        out << s.class_id << '\t' << name << '\t' << s.updates << '\t' << (s.updates == 0 ? 1 : 0) << '\t'
            << to_string(s.stop);
        for (Eigen::Index k = 0; k < dim; ++k) out << '\t' << shortest(s.embedding[k]);
        out << '\n';
    }
    return out.str();
}

std::vector<EmbeddingRow> parse_embedding_export(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw StructuralError("embedding export: empty");
    const auto header = split_tabs(line);
    if (header.size() < 5 || header[0] != "class_id") throw StructuralError("embedding export: bad header");
    std::vector<EmbeddingRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_tabs(line);
        if (f.size() != header.size()) throw StructuralError("embedding export: ragged row");
        EmbeddingRow r;
        r.class_id = f[0];
        r.display_name = f[1];
        r.steps = static_cast<std::size_t>(std::stoull(f[2]));
        r.untrained = f[3] == "1";
        r.stop = f[4];
        for (std::size_t k = 5; k < f.size(); ++k) r.values.push_back(parse_double(f[k]));
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace digzsl
