#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace digzsl {

// Per-class top-1 accuracy averaged over the classes of `subset` that occur
// in `labels`. Every label must belong to `subset`.
double per_class_top1(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& labels,
                      const std::vector<std::size_t>& subset);

// 2US / (U + S), 0 when U + S = 0.
double harmonic_mean(double unseen, double seen);

struct FeatureSetSummary {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;  // unbiased, symmetric
    std::size_t count = 0;

    std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

// Columns are samples; needs at least two.
FeatureSetSummary summarize(const Eigen::MatrixXd& features);

struct FidResult {
    double value = 0.0;
    // Sum of |negative eigenvalues| zeroed while taking the square root.
    double clipped = 0.0;
};

FidResult fid_detailed(const FeatureSetSummary& a, const FeatureSetSummary& b);
double fid(const FeatureSetSummary& a, const FeatureSetSummary& b);

}  // namespace digzsl
