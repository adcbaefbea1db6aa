#include "grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "rng.hpp"

namespace dveslt {

namespace {

double eval_loss(const LossBuilder& f, ParamStore& ps) {
    Tape tape;
    Var loss = f(tape, ps);
    return tape.value(loss).item();
}

} // namespace

GradCheckReport grad_check(const LossBuilder& f, ParamStore& params,
                           const GradCheckOptions& opt) {
    double l0 = eval_loss(f, params);
    double l1 = eval_loss(f, params);
    if (l0 != l1) fail("grad_check: f is non-deterministic (" + std::to_string(l0) +
                       " vs " + std::to_string(l1) + ")");

    // analytic gradients
    params.zero_grads();
    {
        Tape tape;
        Var loss = f(tape, params);
        tape.backward(loss);
    }
    std::map<std::string, Tensor> analytic;
    for (auto& [name, e] : params.entries()) analytic.emplace(name, e.grad);

    GradCheckReport report;
    for (auto& [name, e] : params.entries()) {
        if (!e.trainable) continue;
        GradCheckEntry ge;
        ge.name = name;
        int64_t n = e.value.size();
        std::vector<int64_t> idxs;
        if (opt.max_elems_per_entry > 0 && n > opt.max_elems_per_entry) {
            Rng rng(Rng::derive(opt.sample_seed, "gradcheck:" + name));
            for (int64_t k = 0; k < opt.max_elems_per_entry; ++k)
                idxs.push_back(rng.uniform_int(0, n - 1));
            std::sort(idxs.begin(), idxs.end());
            idxs.erase(std::unique(idxs.begin(), idxs.end()), idxs.end());
        } else {
            idxs.resize(static_cast<size_t>(n));
            for (int64_t k = 0; k < n; ++k) idxs[static_cast<size_t>(k)] = k;
        }
        for (int64_t i : idxs) {
            double orig = e.value.data[static_cast<size_t>(i)];
            e.value.data[static_cast<size_t>(i)] = orig + opt.h;
            double lp = eval_loss(f, params);
            e.value.data[static_cast<size_t>(i)] = orig - opt.h;
            double lm = eval_loss(f, params);
            e.value.data[static_cast<size_t>(i)] = orig;
            double fd = (lp - lm) / (2.0 * opt.h);
            double an = analytic.at(name).data[static_cast<size_t>(i)];
            double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
            ge.max_rel_err = std::max(ge.max_rel_err, rel);
        }
        ge.pass = ge.max_rel_err < opt.tol;
        report.worst_rel_err = std::max(report.worst_rel_err, ge.max_rel_err);
        report.pass = report.pass && ge.pass;
        report.entries.push_back(std::move(ge));
    }
    return report;
}

} // namespace dveslt
