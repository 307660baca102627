#include "digzsl/diffusion/schedule.hpp"

#include "digzsl/core/errors.hpp"

#include <cmath>
#include <random>

namespace digzsl {

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
    if (alpha_bar_.empty()) throw StructuralError("noise schedule: at least one step required");
    double prev = 1.0;
    for (double a : alpha_bar_) {
        if (!(a >= 0.0 && a <= 1.0)) throw StructuralError("noise schedule: alpha_bar must lie in [0, 1]");
        if (a > prev) throw StructuralError("noise schedule: alpha_bar must be non-increasing");
        prev = a;
    }
}

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
    if (steps == 0) throw StructuralError("noise schedule: at least one step required");
    std::vector<double> ab(steps);
    double acc = 1.0;
    for (std::size_t i = 0; i < steps; ++i) {
        const double beta =
            steps == 1 ? beta_start
                       : beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(steps - 1);
        acc *= 1.0 - beta;
        ab[i] = acc;
    }
    return NoiseSchedule(std::move(ab));
}

double NoiseSchedule::alpha_bar(std::size_t t) const {
    if (t == 0) return 1.0;
    if (t > alpha_bar_.size()) {
        throw StructuralError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(alpha_bar_.size()) +
                              "]");
    }
    return alpha_bar_[t - 1];
}

std::vector<std::size_t> NoiseSchedule::sampling_timesteps(std::size_t count) const {
    if (count == 0 || count > steps()) throw StructuralError("sampling steps must lie in [1, T]");
    std::vector<std::size_t> ts;
    const double stride = static_cast<double>(steps()) / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
        ts.push_back(static_cast<std::size_t>(std::llround(static_cast<double>(steps()) - stride * static_cast<double>(i))));
    }
    return ts;
}

Eigen::MatrixXd forward_noise(const Eigen::MatrixXd& z0, std::size_t t, const Eigen::MatrixXd& eps,
                              const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.steps()) {
        throw StructuralError("forward_noise: timestep " + std::to_string(t) + " outside [1, " +
                              std::to_string(schedule.steps()) + "]");
    }
    if (z0.rows() != eps.rows() || z0.cols() != eps.cols()) throw StructuralError("forward_noise: eps shape differs from z0");
    const double a = schedule.alpha_bar(t);
    return std::sqrt(a) * z0 + std::sqrt(1.0 - a) * eps;
}

Eigen::VectorXd initial_noise(std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::VectorXd z(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = n(rng);
    return z;
}

}  // namespace digzsl
