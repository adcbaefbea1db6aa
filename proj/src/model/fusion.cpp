#include "fusion.hpp"

namespace dveslt {

void make_fusion_params(ParamStore& ps, Rng& rng, const TrainConfig::Model& m) {
    make_attention(ps, rng, "fusion.xattn", m.d_model);
    make_layernorm(ps, "fusion.ln", m.d_model);
    // identity-preserving adapter init: the adapter sits between the
    // pretrained temporal encoders and the pretrained shared encoder, so it
    // starts as a pass-through instead of a random mix that would scramble
    // the transferred features. When concat doubles the width the primary
    // (spatial) block is the identity and the secondary block starts at
    // zero, so the fused model begins at the primary stream's forward and
    // blends in the second stream only as its gradient earns it. Small
    // noise everywhere keeps gradients flowing into both streams and keeps
    // finite-difference checks off exact symmetry points.
    int64_t d_in = fused_dim(m);
    Tensor w = Tensor::zeros({d_in, m.d_model});
    for (int64_t i = 0; i < d_in; ++i)
        for (int64_t j = 0; j < m.d_model; ++j) {
            double& v = w.data[static_cast<size_t>(i * m.d_model + j)];
            v = rng.uniform(-0.01, 0.01);
            if (i == j) v += 1.0;
        }
    ps.create("adapter.lin.w", std::move(w));
    ps.create("adapter.lin.b", Tensor::zeros({m.d_model}));
    make_layernorm(ps, "adapter.ln", m.d_model);
}

Var fuse_sum(Tape& t, Var a, Var b) {
    if (t.value(a).shape != t.value(b).shape)
        fail("fuse_sum: shape mismatch " + shape_str(t.value(a).shape) + " vs " +
             shape_str(t.value(b).shape));
    return add(a, b);
}

Var fuse_concat(Tape& t, Var a, Var b) {
    if (t.value(a).dim(0) != t.value(b).dim(0))
        fail("fuse_concat: temporal length mismatch " + std::to_string(t.value(a).dim(0)) +
             " vs " + std::to_string(t.value(b).dim(0)));
    return concat_cols(a, b);
}

Var fuse_xattn(Tape& t, ParamStore& ps, Var a, Var b, int64_t heads) {
    if (t.value(a).shape != t.value(b).shape)
        fail("fuse_xattn: shape mismatch " + shape_str(t.value(a).shape) + " vs " +
             shape_str(t.value(b).shape));
    Var ctx = attention(t, ps, "fusion.xattn", a, b, heads);
    return layernorm(t, ps, "fusion.ln", add(a, ctx));
}

Var fuse(Tape& t, ParamStore& ps, Var a, Var b, const TrainConfig::Model& m) {
    if (m.fusion == "sum") return fuse_sum(t, a, b);
    if (m.fusion == "concat") return fuse_concat(t, a, b);
    if (m.fusion == "xattn") return fuse_xattn(t, ps, a, b, m.heads);
    fail("unknown fusion mode '" + m.fusion + "'");
}

int64_t fused_dim(const TrainConfig::Model& m) {
    // single-branch ablations skip fusion, so the adapter sees d_model
    return (m.fusion == "concat" && m.branch == "dual") ? 2 * m.d_model : m.d_model;
}

Var vl_adapter(Tape& t, ParamStore& ps, Var fused) {
    return relu(layernorm(t, ps, "adapter.ln", linear(t, ps, "adapter.lin", fused)));
}

} // namespace dveslt
