#include "optimizer.hpp"

#include <cmath>

namespace dveslt {

void SgdOptimizer::step(ParamStore& ps, double lr) {
    if (lr <= 0.0) fail("sgd: lr must be positive");
    for (auto& [name, e] : ps.entries()) {
        if (!e.trainable) continue;
        if (!e.grad.all_finite()) fail("sgd: non-finite gradient in '" + name + "'");
        auto it = velocity_.find(name);
        if (it == velocity_.end())
            it = velocity_.emplace(name, Tensor::zeros(e.value.shape)).first;
        Tensor& v = it->second;
        if (v.shape != e.value.shape) fail("sgd: velocity shape mismatch for '" + name + "'");
        for (size_t i = 0; i < e.value.data.size(); ++i) {
            v.data[i] = momentum_ * v.data[i] + e.grad.data[i];
            e.value.data[i] -= lr * v.data[i];
        }
    }
}

double cosine_annealing(double lr0, int64_t epoch, int64_t total_epochs, double lr_min) {
    if (total_epochs <= 0) fail("cosine_annealing: total_epochs must be positive");
    if (epoch < 0 || epoch > total_epochs) fail("cosine_annealing: epoch out of range");
    double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(M_PI * frac));
}

double exponential_lr(double lr0, double gamma, int64_t epoch) {
    if (gamma <= 0.0 || gamma > 1.0) fail("exponential_lr: gamma must be in (0,1]");
    return lr0 * std::pow(gamma, static_cast<double>(epoch));
}

int64_t one_cycle_peak_step(double pct_start, int64_t total_steps) {
    return static_cast<int64_t>(std::llround(pct_start * static_cast<double>(total_steps)));
}

double one_cycle(double max_lr, double pct_start, int64_t step, int64_t total_steps) {
    if (pct_start <= 0.0 || pct_start >= 1.0) fail("one_cycle: pct_start must be in (0,1)");
    if (step < 0 || step > total_steps) fail("one_cycle: step out of range");
    const double div = 25.0, final_div = 1e4;
    int64_t peak = one_cycle_peak_step(pct_start, total_steps);
    double lo = max_lr / div, fin = max_lr / final_div;
    auto cos_interp = [](double a, double b, double frac) {
        return b + 0.5 * (a - b) * (1.0 + std::cos(M_PI * frac));
    };
    if (step <= peak) {
        double frac = peak > 0 ? static_cast<double>(step) / static_cast<double>(peak) : 1.0;
        return cos_interp(lo, max_lr, frac); // rises lo -> max
    }
    double frac = static_cast<double>(step - peak) / static_cast<double>(total_steps - peak);
    return cos_interp(max_lr, fin, frac); // decays max -> fin
}

double scheduled_lr(const TrainConfig::Phase& phase, int64_t epoch, int64_t step,
                    int64_t steps_per_epoch) {
    if (phase.scheduler == "cosine")
        return cosine_annealing(phase.lr, epoch, phase.epochs, phase.lr_min);
    if (phase.scheduler == "exponential") return exponential_lr(phase.lr, phase.gamma, epoch);
    if (phase.scheduler == "onecycle")
        return one_cycle(phase.lr, phase.pct_start, step, phase.epochs * steps_per_epoch);
    fail("unknown scheduler '" + phase.scheduler + "'");
}

} // namespace dveslt
