#pragma once

#include <functional>
#include <string>
#include <vector>

#include "param_store.hpp"
#include "tape.hpp"

namespace dveslt {

// f builds a forward graph on the given tape (using the given params) and
// returns a scalar loss node.
using LossBuilder = std::function<Var(Tape&, ParamStore&)>;

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double worst_rel_err = 0.0;
    bool pass = true;
};

struct GradCheckOptions {
    double h = 1e-5;
    double tol = 1e-4;
    // 0 = check every element; otherwise a seeded random subset per entry
    int64_t max_elems_per_entry = 0;
    uint64_t sample_seed = 0;
};

// Central finite differences against the analytic gradient, per parameter
// entry. f must be deterministic: it is evaluated twice up front and the
// two loss values must match bitwise.
GradCheckReport grad_check(const LossBuilder& f, ParamStore& params,
                           const GradCheckOptions& opt = {});

} // namespace dveslt
