#include "digzsl/diffusion/sampler.hpp"

#include "digzsl/core/errors.hpp"

#include <cmath>

namespace digzsl {

namespace {

struct StepCoefficients {
    double a, s, a_prev, s_prev;  // sqrt(alpha_bar) and sqrt(1 - alpha_bar) at t and at the next timestep
};

StepCoefficients coefficients(const NoiseSchedule& schedule, std::size_t t, std::size_t t_prev) {
    const double ab = schedule.alpha_bar(t), abp = schedule.alpha_bar(t_prev);
    if (!(ab > 0.0)) throw StructuralError("sampler: alpha_bar must be positive on the sampling grid");
    return {std::sqrt(ab), std::sqrt(1.0 - ab), std::sqrt(abp), std::sqrt(1.0 - abp)};
}

Eigen::MatrixXd start_noise(std::size_t dim, const std::vector<std::uint64_t>& seeds) {
    Eigen::MatrixXd z(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(seeds.size()));
    for (std::size_t j = 0; j < seeds.size(); ++j) z.col(static_cast<Eigen::Index>(j)) = initial_noise(dim, seeds[j]);
    return z;
}

void check_finite(const Eigen::MatrixXd& z, std::size_t step) {
    if (!z.allFinite()) {
        throw NumericalFailure("sampler: non-finite latent at reverse step " + std::to_string(step),
                               static_cast<long>(step));
    }
}

Eigen::MatrixXd guided_eps(const Denoiser& model, const Eigen::MatrixXd& z, std::size_t t, const Eigen::MatrixXd& cond,
                           double w) {
    const Eigen::Index b = z.cols();
    Eigen::MatrixXd zz(z.rows(), 2 * b), cc(cond.rows(), 2 * b);
    zz << z, z;
    cc << cond, Eigen::MatrixXd::Zero(cond.rows(), b);
    const Eigen::MatrixXd both = model.predict(zz, std::vector<std::size_t>(static_cast<std::size_t>(2 * b), t), &cc);
    return w * both.leftCols(b) + (1.0 - w) * both.rightCols(b);
}

Eigen::MatrixXd ddim_update(const Eigen::MatrixXd& z, const Eigen::MatrixXd& eps, const StepCoefficients& c, bool clip) {
    Eigen::MatrixXd x0 = (z - c.s * eps) / c.a;
    if (!clip) return c.a_prev * x0 + c.s_prev * eps;
    x0 = x0.cwiseMax(-1.0).cwiseMin(1.0);
    const Eigen::MatrixXd e = (z - c.a * x0) / c.s;
    return c.a_prev * x0 + c.s_prev * e;
}

ad::Var ddim_update(const ad::Var& z, const ad::Var& eps, const StepCoefficients& c, bool clip) {
    ad::Var x0 = ad::axpy(ad::scale(z, 1.0 / c.a), -c.s / c.a, eps);
    if (!clip) return ad::axpy(ad::scale(x0, c.a_prev), c.s_prev, eps);
    x0 = ad::clamp(x0, -1.0, 1.0);
    ad::Var e = ad::axpy(ad::scale(z, 1.0 / c.s), -c.a / c.s, x0);
    return ad::axpy(ad::scale(x0, c.a_prev), c.s_prev, e);
}

void check_request(const Denoiser& model, std::size_t cond_rows, std::size_t cond_cols,
                   const std::vector<std::uint64_t>& seeds, const SamplerSettings& settings) {
    if (settings.steps < 1) throw StructuralError("sampler: at least one step required");
    if (seeds.empty()) throw StructuralError("sampler: no seeds");
    if (cond_rows != model.cond_dim() || cond_cols != seeds.size()) {
        throw StructuralError("sampler: conditioning must have one column per seed");
    }
}

}  // namespace

Eigen::MatrixXd sample_latents(const Denoiser& model, const NoiseSchedule& schedule, const Eigen::MatrixXd& cond,
                               const std::vector<std::uint64_t>& seeds, const SamplerSettings& settings) {
    check_request(model, static_cast<std::size_t>(cond.rows()), static_cast<std::size_t>(cond.cols()), seeds, settings);
    const auto ts = schedule.sampling_timesteps(settings.steps);
    Eigen::MatrixXd z = start_noise(model.latent_dim(), seeds);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const std::size_t t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
        const Eigen::MatrixXd eps = guided_eps(model, z, ts[i], cond, settings.guidance);
        z = ddim_update(z, eps, coefficients(schedule, ts[i], t_prev), settings.clip_x0);
        check_finite(z, i);
    }
    return z;
}

ad::Var sample_latents(ad::Tape& tape, Denoiser& model, const NoiseSchedule& schedule, const ad::Var& cond,
                       const std::vector<std::uint64_t>& seeds, const SamplerSettings& settings) {
    check_request(model, static_cast<std::size_t>(cond.rows()), static_cast<std::size_t>(cond.cols()), seeds, settings);
    const auto ts = schedule.sampling_timesteps(settings.steps);
    const std::size_t depth =
        settings.grad_depth == 0 ? ts.size() : std::min(settings.grad_depth, ts.size());
    const std::size_t first_recorded = ts.size() - depth;

    Eigen::MatrixXd z0 = start_noise(model.latent_dim(), seeds);
    for (std::size_t i = 0; i < first_recorded; ++i) {
        const std::size_t t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
        const Eigen::MatrixXd eps = guided_eps(model, z0, ts[i], cond.value(), settings.guidance);
        z0 = ddim_update(z0, eps, coefficients(schedule, ts[i], t_prev), settings.clip_x0);
        check_finite(z0, i);
    }

    const int saved_tag = tape.tag();
    ad::Var z = tape.constant(std::move(z0));
    for (std::size_t i = first_recorded; i < ts.size(); ++i) {
        tape.set_tag(static_cast<int>(i));
        const std::size_t t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
        ad::Var eps = cfg_predict(tape, model, z, ts[i], cond, settings.guidance);
        z = ddim_update(z, eps, coefficients(schedule, ts[i], t_prev), settings.clip_x0);
        check_finite(z.value(), i);
    }
    tape.set_tag(saved_tag);
    return z;
}

}  // namespace digzsl
