#pragma once

#include "digzsl/autodiff/mlp.hpp"
#include "digzsl/autodiff/tape.hpp"
#include "digzsl/core/artifact_store.hpp"
#include "digzsl/diffusion/schedule.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace digzsl {

// Noise predictor eps(z_t, t, cond). Columns are samples, `t` holds one
// timestep per column. An invalid `cond` Var (or a null pointer) selects the
// unconditional branch, which must equal conditioning on all zeros.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual std::size_t latent_dim() const = 0;
    virtual std::size_t cond_dim() const = 0;

    virtual ad::Var predict(ad::Tape& tape, const ad::Var& zt, const std::vector<std::size_t>& t,
                            const ad::Var& cond) = 0;
    virtual Eigen::MatrixXd predict(const Eigen::MatrixXd& zt, const std::vector<std::size_t>& t,
                                    const Eigen::MatrixXd* cond) const = 0;

    virtual std::vector<ad::Parameter*> parameters() = 0;
};

// Small MLP that predicts the clean latent from [z_t; sinusoidal(t); cond]
// and converts it to a noise estimate through the schedule.
class ToyDenoiser final : public Denoiser {
public:
    ToyDenoiser() = default;
    ToyDenoiser(NoiseSchedule schedule, std::size_t latent_dim, std::size_t cond_dim, std::size_t time_dim,
                std::size_t hidden, std::uint64_t seed);

    std::size_t latent_dim() const override { return latent_dim_; }
    std::size_t cond_dim() const override { return cond_dim_; }
    std::size_t time_dim() const noexcept { return time_dim_; }
    const NoiseSchedule& schedule() const noexcept { return schedule_; }

    ad::Var predict(ad::Tape& tape, const ad::Var& zt, const std::vector<std::size_t>& t,
                    const ad::Var& cond) override;
    Eigen::MatrixXd predict(const Eigen::MatrixXd& zt, const std::vector<std::size_t>& t,
                            const Eigen::MatrixXd* cond) const override;

    std::vector<ad::Parameter*> parameters() override { return net_.parameters(); }
    ad::Mlp& net() { return net_; }
    const ad::Mlp& net() const { return net_; }

    void write(Blob& blob) const;
    static ToyDenoiser read(const Blob& blob);

private:
    Eigen::MatrixXd time_features(const std::vector<std::size_t>& t) const;
    Eigen::RowVectorXd eps_scale(const std::vector<std::size_t>& t, bool signal) const;

    NoiseSchedule schedule_;
    std::size_t latent_dim_ = 0;
    std::size_t cond_dim_ = 0;
    std::size_t time_dim_ = 0;
    ad::Mlp net_;
};

// Sinusoidal embedding of integer timesteps, one column per entry.
Eigen::MatrixXd timestep_embedding(const std::vector<std::size_t>& t, std::size_t dim);

// ||eps - model(forward_noise(z0, t, eps), t, cond)||^2 per column, averaged over columns.
ad::Var denoising_loss(ad::Tape& tape, Denoiser& model, const Eigen::MatrixXd& z0, const ad::Var& cond,
                       const std::vector<std::size_t>& t, const Eigen::MatrixXd& eps, const NoiseSchedule& schedule);
double denoising_loss(const Denoiser& model, const Eigen::MatrixXd& z0, const Eigen::MatrixXd* cond,
                      const std::vector<std::size_t>& t, const Eigen::MatrixXd& eps, const NoiseSchedule& schedule);

// w * eps(z_t, cond) + (1 - w) * eps(z_t).
Eigen::MatrixXd cfg_predict(const Denoiser& model, const Eigen::MatrixXd& zt, std::size_t t,
                            const Eigen::MatrixXd& cond, double w);
ad::Var cfg_predict(ad::Tape& tape, Denoiser& model, const ad::Var& zt, std::size_t t, const ad::Var& cond, double w);

}  // namespace digzsl
