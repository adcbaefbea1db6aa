#pragma once

#include "core/config.hpp"
#include "layers.hpp"

namespace dveslt {

// Creates the fusion-stage parameters: the cross-attention block (used in
// xattn mode) and the visual-language adapter mapping the configured fused
// width back to d_model.
void make_fusion_params(ParamStore& ps, Rng& rng, const TrainConfig::Model& m);

Var fuse_sum(Tape& t, Var a, Var b);    // [L,d]+[L,d] -> [L,d]
Var fuse_concat(Tape& t, Var a, Var b); // [L,d],[L,d] -> [L,2d], spatial stream first

// One multi-head cross-attention block: queries from the spatial stream a,
// keys/values from the spatio-temporal stream b, residual to a, layer norm.
Var fuse_xattn(Tape& t, ParamStore& ps, Var a, Var b, int64_t heads);

// Dispatch on the configured mode.
Var fuse(Tape& t, ParamStore& ps, Var a, Var b, const TrainConfig::Model& m);
int64_t fused_dim(const TrainConfig::Model& m);

// linear -> layer norm -> ReLU into d_model; all outputs nonnegative.
Var vl_adapter(Tape& t, ParamStore& ps, Var fused);

} // namespace dveslt
