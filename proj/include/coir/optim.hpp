#pragma once

#include <cstdint>
#include <vector>

#include "coir/model.hpp"

namespace coir {

// Learning-rate schedule: lr(e) = max(lr0 * decay^e, floor).
struct LrSchedule {
    double lr0 = 5e-5;
    double decay = 0.93;
    double floor = 1e-6;
};

double lr_at_epoch(const LrSchedule& schedule, int epoch);

// AdamW with decoupled weight decay: the decay step theta -= lr*wd*theta
// is applied separately from the bias-corrected adaptive step.
struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    AdamWConfig config;
    std::int64_t step_count = 0;
    std::vector<std::vector<float>> m; // first moments, aligned with Parameters::named
    std::vector<std::vector<float>> v; // second moments

    static OptimizerState create(const Parameters& params, AdamWConfig config = {});
};

// One update step. Gradients are read from each parameter tensor's grad
// buffer (an empty buffer counts as all zeros) and are not cleared here.
// A NaN gradient aborts with a TrainingError naming the parameter block.
void adamw_step(OptimizerState& state, Parameters& params, double lr, double weight_decay);

void zero_grads(Parameters& params);

} // namespace coir
