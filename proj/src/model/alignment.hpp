#pragma once

#include "core/config.hpp"
#include "layers.hpp"

namespace dveslt {

// Trainable contrastive temperature, parametrized as tau = exp(-s) and
// clamped from below so it cannot collapse.
void make_temperature_param(ParamStore& ps, double tau_init);
Var temperature(Tape& t, ParamStore& ps, double tau_min);

// Mean over the temporal axis then L2-normalize; one row per sequence.
// seqs must share the feature width. -> [N, d], unit-norm rows.
Var pool_and_normalize(Tape& t, const std::vector<Var>& seqs);

// Cosine similarity matrix M[i][j] = dot(A[i], B[j]) for unit-norm rows.
Var similarity(Tape& t, Var A, Var B);

// Symmetric InfoNCE over M/tau: mean of row-wise and column-wise
// cross-entropy against the diagonal matching.
Var infonce_symmetric(Tape& t, Var M, Var tau);

Var cross_modal_loss(Tape& t, Var Z_branch, Var Z_text, Var tau);
Var inter_modal_loss(Tape& t, Var Z_a, Var Z_b, Var tau);

// Replaces round(ratio * n_maskable) non-special tokens with MASK at
// seeded positions drawn without replacement. BOS/EOS/PAD never masked.
std::vector<int> mask_tokens(const std::vector<int>& ids, double ratio, uint64_t seed);

// Total phase-1 objective: both cross-modal terms, the inter-modal term,
// plus lambda_rec times the masked-reconstruction loss.
struct PretrainLossParts {
    Var total, cross_spatial, cross_st, inter, recon;
};
PretrainLossParts pretraining_loss(Tape& t, Var Z_spatial, Var Z_st, Var Z_text, Var tau,
                                   Var recon, double lambda_rec);

} // namespace dveslt
