#pragma once

#include <map>
#include <string>

#include "core/config.hpp"
#include "core/param_store.hpp"

namespace dveslt {

// SGD with classical momentum: v <- mu*v + g, p <- p - lr*v. Velocities are
// created on first use and live here so they can be checkpointed for
// resume.
class SgdOptimizer {
public:
    SgdOptimizer(double momentum) : momentum_(momentum) {
        if (momentum < 0.0 || momentum >= 1.0) fail("sgd: momentum must be in [0,1)");
    }

    void step(ParamStore& ps, double lr);

    std::map<std::string, Tensor>& velocities() { return velocity_; }
    const std::map<std::string, Tensor>& velocities() const { return velocity_; }
    double momentum() const { return momentum_; }

private:
    double momentum_;
    std::map<std::string, Tensor> velocity_;
};

// lr_min + (lr0 - lr_min)/2 * (1 + cos(pi * epoch / total)).
double cosine_annealing(double lr0, int64_t epoch, int64_t total_epochs, double lr_min);

// lr0 * gamma^epoch.
double exponential_lr(double lr0, double gamma, int64_t epoch);

// Cosine warm-up from max_lr/25 to max_lr over the first
// round(pct_start*total_steps) steps, then cosine decay to max_lr/1e4.
double one_cycle(double max_lr, double pct_start, int64_t step, int64_t total_steps);
int64_t one_cycle_peak_step(double pct_start, int64_t total_steps);

// Scheduler dispatch: cosine/exponential move per epoch, one-cycle per step.
double scheduled_lr(const TrainConfig::Phase& phase, int64_t epoch, int64_t step,
                    int64_t steps_per_epoch);

} // namespace dveslt
