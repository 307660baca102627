#pragma once

#include "digzsl/autodiff/tape.hpp"
#include "digzsl/diffusion/denoiser.hpp"
#include "digzsl/diffusion/schedule.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace digzsl {

struct SamplerSettings {
    std::size_t steps = 50;
    double guidance = 7.0;
    // Trailing reverse steps recorded on the tape; 0 records all of them.
    std::size_t grad_depth = 0;
    // Clamp the clean-latent estimate to [-1, 1] before each update.
    bool clip_x0 = true;
};

// Deterministic reverse process with classifier-free guidance: one column
// per seed, starting from initial_noise(seed). Throws NumericalFailure with
// the step index when a latent stops being finite.
Eigen::MatrixXd sample_latents(const Denoiser& model, const NoiseSchedule& schedule, const Eigen::MatrixXd& cond,
                               const std::vector<std::uint64_t>& seeds, const SamplerSettings& settings);

// Same trajectory recorded on `tape`. Step i (0-based) records its parameter
// leaves under tag i; steps before steps - grad_depth run off the tape.
ad::Var sample_latents(ad::Tape& tape, Denoiser& model, const NoiseSchedule& schedule, const ad::Var& cond,
                       const std::vector<std::uint64_t>& seeds, const SamplerSettings& settings);

}  // namespace digzsl
