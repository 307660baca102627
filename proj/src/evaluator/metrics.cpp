#include "digzsl/evaluator/metrics.hpp"

#include "digzsl/core/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace digzsl {

double per_class_top1(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& labels,
                      const std::vector<std::size_t>& subset) {
    if (subset.empty()) throw StructuralError("per-class accuracy: empty class subset");
    if (predictions.size() != labels.size()) throw StructuralError("per-class accuracy: prediction/label count mismatch");
    if (labels.empty()) throw DegenerateInput("per-class accuracy: no records");
    std::unordered_map<std::size_t, std::pair<std::size_t, std::size_t>> tally;  // class -> (correct, total)
    for (std::size_t c : subset) tally.emplace(c, std::pair<std::size_t, std::size_t>{0, 0});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = tally.find(labels[i]);
        if (it == tally.end()) {
            throw StructuralError("per-class accuracy: label " + std::to_string(labels[i]) + " is outside the subset");
        }
        ++it->second.second;
        if (predictions[i] == labels[i]) ++it->second.first;
    }
    double total = 0.0;
    std::size_t classes = 0;
    for (std::size_t c : subset) {
        const auto [correct, count] = tally.at(c);
        if (count == 0) continue;
        total += static_cast<double>(correct) / static_cast<double>(count);
        ++classes;
    }
    return total / static_cast<double>(classes);
}

double harmonic_mean(double unseen, double seen) {
    const double s = unseen + seen;
    if (s == 0.0) return 0.0;
    return 2.0 * unseen * seen / s;
}

FeatureSetSummary summarize(const Eigen::MatrixXd& features) {
    if (features.cols() < 2) throw DegenerateInput("feature summary needs at least two samples");
    FeatureSetSummary s;
    s.count = static_cast<std::size_t>(features.cols());
    s.mean = features.rowwise().mean();
    const Eigen::MatrixXd centered = features.colwise() - s.mean;
    s.covariance = centered * centered.transpose() / static_cast<double>(features.cols() - 1);
    s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
    return s;
}

namespace {

// Symmetric PSD square root; negative eigenvalues are zeroed and their magnitude added to `clipped`.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double& clipped) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
    Eigen::VectorXd ev = eig.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < 0.0) {
            clipped += -ev[i];
            ev[i] = 0.0;
        }
    }
    return eig.eigenvectors() * ev.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

FidResult fid_detailed(const FeatureSetSummary& a, const FeatureSetSummary& b) {
    if (a.dim() != b.dim() || a.covariance.rows() != b.covariance.rows()) {
        throw StructuralError("fid: feature dimensions differ (" + std::to_string(a.dim()) + " vs " +
                              std::to_string(b.dim()) + ")");
    }
    FidResult r;
    const Eigen::MatrixXd root_a = psd_sqrt(a.covariance, r.clipped);
    // Tr((Sa Sb)^1/2) = Tr((Sa^1/2 Sb Sa^1/2)^1/2), and the inner matrix is symmetric.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(root_a * b.covariance * root_a, Eigen::EigenvaluesOnly);
    double cross = 0.0;
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
        const double ev = eig.eigenvalues()[i];
        if (ev < 0.0) {
            r.clipped += -ev;
        } else {
            cross += std::sqrt(ev);
        }
    }
    const double shift = (a.mean - b.mean).squaredNorm();
    r.value = std::max(0.0, shift + a.covariance.trace() + b.covariance.trace() - 2.0 * cross);
    return r;
}

double fid(const FeatureSetSummary& a, const FeatureSetSummary& b) { return fid_detailed(a, b).value; }

}  // namespace digzsl
