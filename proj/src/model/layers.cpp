#include "layers.hpp"

#include <cmath>

namespace dveslt {

Tensor xavier(Rng& rng, Shape shape, int64_t fan_in, int64_t fan_out) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

void make_linear(ParamStore& ps, Rng& rng, const std::string& name, int64_t d_in, int64_t d_out) {
    ps.create(name + ".w", xavier(rng, {d_in, d_out}, d_in, d_out));
    ps.create(name + ".b", Tensor::zeros({d_out}));
}

void make_layernorm(ParamStore& ps, const std::string& name, int64_t d) {
    ps.create(name + ".g", Tensor::full({d}, 1.0));
    ps.create(name + ".b", Tensor::zeros({d}));
}

void make_attention(ParamStore& ps, Rng& rng, const std::string& name, int64_t d) {
    make_linear(ps, rng, name + ".q", d, d);
    make_linear(ps, rng, name + ".k", d, d);
    make_linear(ps, rng, name + ".v", d, d);
    make_linear(ps, rng, name + ".o", d, d);
}

void make_transformer_layer(ParamStore& ps, Rng& rng, const std::string& name, int64_t d,
                            int64_t ffn_mult, bool cross) {
    make_layernorm(ps, name + ".ln1", d);
    make_attention(ps, rng, name + ".self", d);
    if (cross) {
        make_layernorm(ps, name + ".lnx", d);
        make_attention(ps, rng, name + ".cross", d);
    }
    make_layernorm(ps, name + ".ln2", d);
    make_linear(ps, rng, name + ".ff1", d, d * ffn_mult);
    make_linear(ps, rng, name + ".ff2", d * ffn_mult, d);
}

void make_transformer(ParamStore& ps, Rng& rng, const std::string& name, int64_t layers,
                      int64_t d, int64_t ffn_mult, bool cross) {
    for (int64_t l = 0; l < layers; ++l)
        make_transformer_layer(ps, rng, name + ".l" + std::to_string(l), d, ffn_mult, cross);
    make_layernorm(ps, name + ".lnf", d);
}

Var linear(Tape& t, ParamStore& ps, const std::string& name, Var x) {
    return add_rowvec(matmul(x, t.param(ps, name + ".w")), t.param(ps, name + ".b"));
}

Var layernorm(Tape& t, ParamStore& ps, const std::string& name, Var x) {
    return layer_norm(x, t.param(ps, name + ".g"), t.param(ps, name + ".b"));
}

Var attention(Tape& t, ParamStore& ps, const std::string& name, Var q_in, Var kv_in,
              int64_t heads, const Tensor* mask, Tensor* attn_out) {
    int64_t Lq = t.value(q_in).dim(0);
    int64_t Lk = t.value(kv_in).dim(0);
    int64_t d = t.value(q_in).dim(1);
    if (d % heads != 0) fail("attention: dim not divisible by heads");
    int64_t dh = d / heads;
    Var q = linear(t, ps, name + ".q", q_in);
    Var k = linear(t, ps, name + ".k", kv_in);
    Var v = linear(t, ps, name + ".v", kv_in);
    Var qh = permute3(reshape(q, {Lq, heads, dh}), 1, 0, 2); // [h,Lq,dh]
    Var kt = permute3(reshape(k, {Lk, heads, dh}), 1, 2, 0); // [h,dh,Lk]
    Var vh = permute3(reshape(v, {Lk, heads, dh}), 1, 0, 2); // [h,Lk,dh]
    Var scores = scalar_mul(bmm(qh, kt), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (mask) {
        require_shape(Tensor::zeros(mask->shape), {Lq, Lk}, "attention mask");
        scores = add_bcast_last2(scores, t.leaf(*mask));
    }
    Var probs = softmax_last(scores); // [h,Lq,Lk]
    if (attn_out) {
        const Tensor& p = t.value(probs);
        Tensor avg = Tensor::zeros({Lq, Lk});
        for (int64_t h = 0; h < heads; ++h)
            for (int64_t i = 0; i < Lq * Lk; ++i)
                avg.data[static_cast<size_t>(i)] +=
                    p.data[static_cast<size_t>(h * Lq * Lk + i)] / static_cast<double>(heads);
        *attn_out = avg;
    }
    Var ctx = reshape(permute3(bmm(probs, vh), 1, 0, 2), {Lq, d});
    return linear(t, ps, name + ".o", ctx);
}

Var transformer(Tape& t, ParamStore& ps, const std::string& name, Var x, int64_t layers,
                int64_t heads, const Tensor* self_mask, Var memory, Tensor* cross_attn_out) {
    for (int64_t l = 0; l < layers; ++l) {
        std::string ln = name + ".l" + std::to_string(l);
        Var n1 = layernorm(t, ps, ln + ".ln1", x);
        Var h = attention(t, ps, ln + ".self", n1, n1, heads, self_mask);
        x = add(x, h);
        if (memory.valid()) {
            Tensor* want = (l == layers - 1) ? cross_attn_out : nullptr;
            Var c = attention(t, ps, ln + ".cross", layernorm(t, ps, ln + ".lnx", x), memory,
                              heads, nullptr, want);
            x = add(x, c);
        }
        Var n = layernorm(t, ps, ln + ".ln2", x);
        Var f = linear(t, ps, ln + ".ff2", relu(linear(t, ps, ln + ".ff1", n)));
        x = add(x, f);
    }
    return layernorm(t, ps, name + ".lnf", x);
}

Tensor sinusoidal_positions(int64_t L, int64_t d) {
    Tensor p = Tensor::zeros({L, d});
    for (int64_t pos = 0; pos < L; ++pos)
        for (int64_t i = 0; i < d; i += 2) {
            double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
            p.data[static_cast<size_t>(pos * d + i)] = std::sin(static_cast<double>(pos) * freq);
            if (i + 1 < d)
                p.data[static_cast<size_t>(pos * d + i + 1)] =
                    std::cos(static_cast<double>(pos) * freq);
        }
    return p;
}

} // namespace dveslt
