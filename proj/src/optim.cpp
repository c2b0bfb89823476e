#include "coir/optim.hpp"

#include <cmath>

namespace coir {

double lr_at_epoch(const LrSchedule& schedule, int epoch) {
    if (epoch < 0) throw ContractError("lr_at_epoch: epoch must be >= 0");
    double lr = schedule.lr0;
    for (int e = 0; e < epoch; ++e) {
        lr *= schedule.decay;
        if (lr <= schedule.floor) return schedule.floor;
    }
    return std::max(lr, schedule.floor);
}

OptimizerState OptimizerState::create(const Parameters& params, AdamWConfig config) {
    OptimizerState state;
    state.config = config;
    state.m.reserve(params.named.size());
    state.v.reserve(params.named.size());
    for (const auto& [name, tensor] : params.named) {
        state.m.emplace_back(tensor.numel(), 0.0f);
        state.v.emplace_back(tensor.numel(), 0.0f);
    }
    return state;
}

void adamw_step(OptimizerState& state, Parameters& params, double lr, double weight_decay) {
    if (state.m.size() != params.named.size())
        throw ContractError("adamw_step: optimizer state does not match parameters");
    state.step_count += 1;
    const double b1 = state.config.beta1, b2 = state.config.beta2, eps = state.config.eps;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));

    for (std::size_t pi = 0; pi < params.named.size(); ++pi) {
        auto& [name, tensor] = params.named[pi];
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        const bool has_grad = !tensor.grad.empty();
        if (has_grad && tensor.grad.size() != tensor.data.size())
            throw ContractError("adamw_step: grad shape mismatch for " + name);
        for (std::size_t i = 0; i < tensor.data.size(); ++i) {
            const double g = has_grad ? static_cast<double>(tensor.grad[i]) : 0.0;
            if (std::isnan(g))
                throw TrainingError("adamw_step: NaN gradient in parameter block " + name);
            double theta = static_cast<double>(tensor.data[i]);
            theta -= lr * weight_decay * theta; // decoupled decay
            const double mn = b1 * m[i] + (1.0 - b1) * g;
            const double vn = b2 * v[i] + (1.0 - b2) * g * g;
            m[i] = static_cast<float>(mn);
            v[i] = static_cast<float>(vn);
            const double mhat = mn / bc1;
            const double vhat = vn / bc2;
            theta -= lr * mhat / (std::sqrt(vhat) + eps);
            tensor.data[i] = static_cast<float>(theta);
        }
    }
}

void zero_grads(Parameters& params) {
    for (auto& [name, tensor] : params.named) tensor.grad.clear();
}

} // namespace coir
