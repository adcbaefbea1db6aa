#pragma once

#include <string>

#include "core/rng.hpp"
#include "core/tape.hpp"

namespace dveslt {

// Xavier-uniform initialization; fans passed explicitly so conv and linear
// weights share one helper.
Tensor xavier(Rng& rng, Shape shape, int64_t fan_in, int64_t fan_out);

// Parameter factories. Each creates named entries under `name.` once, at
// model-build time; the apply functions then look the entries up by name.
void make_linear(ParamStore& ps, Rng& rng, const std::string& name, int64_t d_in, int64_t d_out);
void make_layernorm(ParamStore& ps, const std::string& name, int64_t d);
void make_attention(ParamStore& ps, Rng& rng, const std::string& name, int64_t d);
void make_transformer_layer(ParamStore& ps, Rng& rng, const std::string& name, int64_t d,
                            int64_t ffn_mult, bool cross);
void make_transformer(ParamStore& ps, Rng& rng, const std::string& name, int64_t layers,
                      int64_t d, int64_t ffn_mult, bool cross);

Var linear(Tape& t, ParamStore& ps, const std::string& name, Var x); // [L,din] -> [L,dout]
Var layernorm(Tape& t, ParamStore& ps, const std::string& name, Var x);

// Multi-head attention between q_in [Lq,d] and kv_in [Lk,d]. `mask` is an
// optional additive [Lq,Lk] bias applied before softmax (use -1e9 to block).
// When `attn_out` is non-null it receives the head-averaged attention
// weights [Lq,Lk] of this call.
Var attention(Tape& t, ParamStore& ps, const std::string& name, Var q_in, Var kv_in,
              int64_t heads, const Tensor* mask = nullptr, Tensor* attn_out = nullptr);

// Pre-norm transformer stack created by make_transformer. Encoder mode:
// cross=false, self-attention only. Decoder mode: cross=true, each layer
// adds cross-attention against `memory`; `self_mask` carries causality.
// `cross_attn_out` receives the last layer's head-averaged cross weights.
Var transformer(Tape& t, ParamStore& ps, const std::string& name, Var x, int64_t layers,
                int64_t heads, const Tensor* self_mask = nullptr, Var memory = {},
                Tensor* cross_attn_out = nullptr);

// Fixed sinusoidal position table [L,d].
Tensor sinusoidal_positions(int64_t L, int64_t d);

} // namespace dveslt
