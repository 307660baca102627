#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace digzsl {

// Cumulative signal levels alpha_bar[t] for t = 1..T, with alpha_bar(0) = 1.
class NoiseSchedule {
public:
    NoiseSchedule() = default;
    // Values must lie in [0, 1] and be non-increasing.
    explicit NoiseSchedule(std::vector<double> alpha_bar);

    // beta_t linear from beta_start to beta_end over T steps.
    static NoiseSchedule linear(std::size_t steps, double beta_start = 1e-4, double beta_end = 0.02);

    std::size_t steps() const noexcept { return alpha_bar_.size(); }
    // 0 <= t <= T; t = 0 is the clean signal.
    double alpha_bar(std::size_t t) const;
    const std::vector<double>& values() const noexcept { return alpha_bar_; }

    // Reverse-process timesteps for `count` sampling steps: T, T - T/count, ..., T/count (rounded).
    std::vector<std::size_t> sampling_timesteps(std::size_t count) const;

    bool operator==(const NoiseSchedule&) const = default;

private:
    std::vector<double> alpha_bar_;
};

// sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps, columnwise; 1 <= t <= T.
Eigen::MatrixXd forward_noise(const Eigen::MatrixXd& z0, std::size_t t, const Eigen::MatrixXd& eps,
                              const NoiseSchedule& schedule);

// Standard normal column of length `dim` drawn from a generator seeded with `seed`.
Eigen::VectorXd initial_noise(std::size_t dim, std::uint64_t seed);

}  // namespace digzsl
