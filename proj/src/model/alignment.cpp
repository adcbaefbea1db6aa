#include "alignment.hpp"

#include <algorithm>
#include <cmath>

#include "tokenizer.hpp"

namespace dveslt {

void make_temperature_param(ParamStore& ps, double tau_init) {
    if (tau_init <= 0.0) fail("temperature: tau_init must be positive");
    ps.create("tau.s", Tensor::scalar(-std::log(tau_init)));
}

Var temperature(Tape& t, ParamStore& ps, double tau_min) {
    return clamp_min(exp_op(neg(t.param(ps, "tau.s"))), tau_min);
}

Var pool_and_normalize(Tape& t, const std::vector<Var>& seqs) {
    if (seqs.empty()) fail("pool_and_normalize: empty batch");
    std::vector<Var> pooled;
    pooled.reserve(seqs.size());
    for (Var s : seqs) {
        if (t.value(s).rank() != 2 || t.value(s).dim(0) < 1)
            fail("pool_and_normalize: expected non-empty [L,d] sequence");
        pooled.push_back(mean_rows(s));
    }
    return l2norm_rows(stack_rows(pooled));
}

Var similarity(Tape& t, Var A, Var B) {
    const Tensor& a = t.value(A);
    const Tensor& b = t.value(B);
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        fail("similarity: feature dim mismatch " + shape_str(a.shape) + " vs " +
             shape_str(b.shape));
    if (a.dim(0) != b.dim(0)) fail("similarity: batch size mismatch");
    return matmul(A, transpose2(B));
}

Var infonce_symmetric(Tape& t, Var M, Var tau) {
    const Tensor& m = t.value(M);
    if (m.rank() != 2 || m.dim(0) != m.dim(1))
        fail("infonce_symmetric: M must be square, got " + shape_str(m.shape));
    if (t.value(tau).item() <= 0.0) fail("infonce_symmetric: tau must be positive");
    int64_t N = m.dim(0);
    Var scaled = mul_scalar_var(M, reciprocal(tau));
    Var rows = diag_sum(log_softmax_last(scaled));
    Var cols = diag_sum(log_softmax_last(transpose2(scaled)));
    return scalar_mul(add(rows, cols), -1.0 / (2.0 * static_cast<double>(N)));
}

Var cross_modal_loss(Tape& t, Var Z_branch, Var Z_text, Var tau) {
    return infonce_symmetric(t, similarity(t, Z_branch, Z_text), tau);
}

Var inter_modal_loss(Tape& t, Var Z_a, Var Z_b, Var tau) {
    return infonce_symmetric(t, similarity(t, Z_a, Z_b), tau);
}

std::vector<int> mask_tokens(const std::vector<int>& ids, double ratio, uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) fail("mask_tokens: ratio must be in [0,1]");
    std::vector<size_t> maskable;
    for (size_t i = 0; i < ids.size(); ++i)
        if (ids[i] >= tok::kNumSpecial) maskable.push_back(i);
    int64_t n = static_cast<int64_t>(
        std::llround(ratio * static_cast<double>(maskable.size())));
    std::vector<int> out = ids;
    Rng rng(Rng::derive(seed, "mask"));
    // partial Fisher-Yates: the first n entries are a uniform draw without
    // replacement
    for (int64_t k = 0; k < n; ++k) {
        int64_t j = rng.uniform_int(k, static_cast<int64_t>(maskable.size()) - 1);
        std::swap(maskable[static_cast<size_t>(k)], maskable[static_cast<size_t>(j)]);
        out[maskable[static_cast<size_t>(k)]] = tok::MASK;
    }
    return out;
}

PretrainLossParts pretraining_loss(Tape& t, Var Z_spatial, Var Z_st, Var Z_text, Var tau,
                                   Var recon, double lambda_rec) {
    PretrainLossParts p;
    p.cross_spatial = cross_modal_loss(t, Z_spatial, Z_text, tau);
    p.cross_st = cross_modal_loss(t, Z_st, Z_text, tau);
    p.inter = inter_modal_loss(t, Z_spatial, Z_st, tau);
    p.recon = recon;
    Var contrast = add(add(p.cross_spatial, p.cross_st), p.inter);
    p.total = recon.valid() && lambda_rec != 0.0
                  ? add(contrast, scalar_mul(recon, lambda_rec))
                  : contrast;
    return p;
}

} // namespace dveslt
