#include "digzsl/diffusion/denoiser.hpp"

#include "digzsl/core/errors.hpp"

#include <cmath>

namespace digzsl {

Eigen::MatrixXd timestep_embedding(const std::vector<std::size_t>& t, std::size_t dim) {
    const std::size_t half = dim / 2;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(t.size()));
    for (std::size_t j = 0; j < t.size(); ++j) {
        for (std::size_t k = 0; k < half; ++k) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
            const double arg = static_cast<double>(t[j]) * freq;
            out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = std::sin(arg);
            out(static_cast<Eigen::Index>(half + k), static_cast<Eigen::Index>(j)) = std::cos(arg);
        }
    }
    return out;
}

ToyDenoiser::ToyDenoiser(NoiseSchedule schedule, std::size_t latent_dim, std::size_t cond_dim, std::size_t time_dim,
                         std::size_t hidden, std::uint64_t seed)
    : schedule_(std::move(schedule)),
      latent_dim_(latent_dim),
      cond_dim_(cond_dim),
      time_dim_(time_dim),
      net_("denoiser", {latent_dim + time_dim + cond_dim, hidden, hidden, latent_dim}, seed, ad::Activation::Silu) {
    if (schedule_.alpha_bar(1) >= 1.0) throw StructuralError("toy denoiser: alpha_bar(1) must be below 1");
}

Eigen::MatrixXd ToyDenoiser::time_features(const std::vector<std::size_t>& t) const {
    for (std::size_t v : t) {
        if (v < 1 || v > schedule_.steps()) throw StructuralError("denoiser: timestep " + std::to_string(v) + " out of range");
    }
    return timestep_embedding(t, time_dim_);
}

// signal: sqrt(ab) / sqrt(1 - ab); otherwise 1 / sqrt(1 - ab).
Eigen::RowVectorXd ToyDenoiser::eps_scale(const std::vector<std::size_t>& t, bool signal) const {
    Eigen::RowVectorXd s(static_cast<Eigen::Index>(t.size()));
    for (std::size_t j = 0; j < t.size(); ++j) {
        const double ab = schedule_.alpha_bar(t[j]);
        s[static_cast<Eigen::Index>(j)] = (signal ? std::sqrt(ab) : 1.0) / std::sqrt(1.0 - ab);
    }
    return s;
}

ad::Var ToyDenoiser::predict(ad::Tape& tape, const ad::Var& zt, const std::vector<std::size_t>& t,
                             const ad::Var& cond) {
    if (static_cast<std::size_t>(zt.rows()) != latent_dim_ || static_cast<std::size_t>(zt.cols()) != t.size()) {
        throw StructuralError("denoiser: latent batch shape does not match");
    }
    ad::Var c = cond.valid() ? cond : tape.constant(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cond_dim_), zt.cols()));
    if (static_cast<std::size_t>(c.rows()) != cond_dim_ || c.cols() != zt.cols()) {
        throw StructuralError("denoiser: conditioning shape does not match");
    }
    const ad::Var parts[] = {zt, tape.constant(time_features(t)), c};
    ad::Var x0 = net_.forward(tape, ad::concat_rows(parts));
    return ad::scale_cols(zt, eps_scale(t, false)) - ad::scale_cols(x0, eps_scale(t, true));
}

Eigen::MatrixXd ToyDenoiser::predict(const Eigen::MatrixXd& zt, const std::vector<std::size_t>& t,
                                     const Eigen::MatrixXd* cond) const {
    if (static_cast<std::size_t>(zt.rows()) != latent_dim_ || static_cast<std::size_t>(zt.cols()) != t.size()) {
        throw StructuralError("denoiser: latent batch shape does not match");
    }
    if (cond && (static_cast<std::size_t>(cond->rows()) != cond_dim_ || cond->cols() != zt.cols())) {
        throw StructuralError("denoiser: conditioning shape does not match");
    }
    Eigen::MatrixXd in(static_cast<Eigen::Index>(latent_dim_ + time_dim_ + cond_dim_), zt.cols());
    in.topRows(zt.rows()) = zt;
    in.middleRows(zt.rows(), static_cast<Eigen::Index>(time_dim_)) = time_features(t);
    if (cond) {
        in.bottomRows(static_cast<Eigen::Index>(cond_dim_)) = *cond;
    } else {
        in.bottomRows(static_cast<Eigen::Index>(cond_dim_)).setZero();
    }
    const Eigen::MatrixXd x0 = net_.infer(in);
    return zt * eps_scale(t, false).asDiagonal() - x0 * eps_scale(t, true).asDiagonal();
}

void ToyDenoiser::write(Blob& blob) const {
    blob.meta["denoiser"] = {{"latent_dim", latent_dim_}, {"cond_dim", cond_dim_}, {"time_dim", time_dim_}};
    Eigen::MatrixXd ab(static_cast<Eigen::Index>(schedule_.steps()), 1);
    for (std::size_t i = 0; i < schedule_.steps(); ++i) ab(static_cast<Eigen::Index>(i), 0) = schedule_.values()[i];
    blob.add("schedule.alpha_bar", ab);
    net_.write(blob, "denoiser");
}

ToyDenoiser ToyDenoiser::read(const Blob& blob) {
    ToyDenoiser d;
    const auto& m = blob.meta.at("denoiser");
    d.latent_dim_ = m.at("latent_dim").get<std::size_t>();
    d.cond_dim_ = m.at("cond_dim").get<std::size_t>();
    d.time_dim_ = m.at("time_dim").get<std::size_t>();
    const auto& ab = blob.tensor("schedule.alpha_bar");
    d.schedule_ = NoiseSchedule(std::vector<double>(ab.data(), ab.data() + ab.size()));
    d.net_ = ad::Mlp::read(blob, "denoiser", "denoiser", ad::Activation::Silu);
    return d;
}

ad::Var denoising_loss(ad::Tape& tape, Denoiser& model, const Eigen::MatrixXd& z0, const ad::Var& cond,
                       const std::vector<std::size_t>& t, const Eigen::MatrixXd& eps, const NoiseSchedule& schedule) {
    if (z0.rows() != eps.rows() || z0.cols() != eps.cols()) throw StructuralError("denoising_loss: eps shape differs");
    if (static_cast<std::size_t>(z0.cols()) != t.size()) throw StructuralError("denoising_loss: one timestep per column");
    Eigen::MatrixXd zt(z0.rows(), z0.cols());
    for (Eigen::Index j = 0; j < z0.cols(); ++j) {
        zt.col(j) = forward_noise(z0.col(j), t[static_cast<std::size_t>(j)], eps.col(j), schedule);
    }
    ad::Var pred = model.predict(tape, tape.constant(std::move(zt)), t, cond);
    return (1.0 / static_cast<double>(z0.cols())) * ad::sum_squares(tape.constant(eps) - pred);
}

double denoising_loss(const Denoiser& model, const Eigen::MatrixXd& z0, const Eigen::MatrixXd* cond,
                      const std::vector<std::size_t>& t, const Eigen::MatrixXd& eps, const NoiseSchedule& schedule) {
    if (z0.rows() != eps.rows() || z0.cols() != eps.cols()) throw StructuralError("denoising_loss: eps shape differs");
    if (static_cast<std::size_t>(z0.cols()) != t.size()) throw StructuralError("denoising_loss: one timestep per column");
    Eigen::MatrixXd zt(z0.rows(), z0.cols());
    for (Eigen::Index j = 0; j < z0.cols(); ++j) {
        zt.col(j) = forward_noise(z0.col(j), t[static_cast<std::size_t>(j)], eps.col(j), schedule);
    }
    return (eps - model.predict(zt, t, cond)).squaredNorm() / static_cast<double>(z0.cols());
}

Eigen::MatrixXd cfg_predict(const Denoiser& model, const Eigen::MatrixXd& zt, std::size_t t,
                            const Eigen::MatrixXd& cond, double w) {
    const std::vector<std::size_t> ts(static_cast<std::size_t>(zt.cols()), t);
    const Eigen::MatrixXd conditional = model.predict(zt, ts, &cond);
    const Eigen::MatrixXd unconditional = model.predict(zt, ts, nullptr);
    return w * conditional + (1.0 - w) * unconditional;
}

ad::Var cfg_predict(ad::Tape& tape, Denoiser& model, const ad::Var& zt, std::size_t t, const ad::Var& cond, double w) {
    const auto b = zt.cols();
    // Both branches in one batched call: [z_t, z_t] with [cond, 0].
    const ad::Var zs[] = {zt, zt};
    const ad::Var cs[] = {cond, tape.constant(Eigen::MatrixXd::Zero(cond.rows(), b))};
    const std::vector<std::size_t> ts(static_cast<std::size_t>(2 * b), t);
    ad::Var both = model.predict(tape, ad::concat_cols(zs), ts, ad::concat_cols(cs));
    ad::Var conditional = ad::slice_cols(both, 0, b);
    ad::Var unconditional = ad::slice_cols(both, b, b);
    return ad::axpy(ad::scale(conditional, w), 1.0 - w, unconditional);
}

}  // namespace digzsl
