#include "digzsl/autodiff/optim.hpp"

#include <cmath>

namespace digzsl::ad {

AdamW::AdamW(std::vector<Parameter*> params, AdamWSettings settings)
    : params_(std::move(params)), settings_(settings) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Parameter* p : params_) {
        m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
}

void AdamW::step() {
    ++t_;
    const double b1 = settings_.beta1, b2 = settings_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        if (!p.trainable) continue;
        p.value *= (1.0 - settings_.lr * settings_.weight_decay);
        m_[i] = b1 * m_[i] + (1.0 - b1) * p.grad;
        v_[i] = b2 * v_[i] + (1.0 - b2) * p.grad.cwiseAbs2();
        const auto m_hat = m_[i].array() / bc1;
        const auto v_hat = v_[i].array() / bc2;
        p.value.array() -= settings_.lr * m_hat / (v_hat.sqrt() + settings_.eps);
    }
}

void AdamW::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

}  // namespace digzsl::ad
