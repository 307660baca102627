#pragma once

#include "digzsl/autodiff/tape.hpp"

#include <vector>

namespace digzsl::ad {

struct AdamWSettings {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Adaptive-moment optimizer with decoupled weight decay.
class AdamW {
public:
    AdamW(std::vector<Parameter*> params, AdamWSettings settings);

    // Applies one update from the gradients currently stored in the parameters.
    void step();
    void zero_grad();

    const AdamWSettings& settings() const noexcept { return settings_; }
    long steps_taken() const noexcept { return t_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    AdamWSettings settings_;
    long t_ = 0;
};

}  // namespace digzsl::ad
