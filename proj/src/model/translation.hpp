#pragma once

#include "core/config.hpp"
#include "data/datagen.hpp"
#include "fusion.hpp"
#include "tokenizer.hpp"

namespace dveslt {

// Text-side parameters shared by pretraining and translation: one token
// embedding table (also the tied output projection), the text encoder
// stack, and the 3-layer cross-attending decoder.
void make_text_params(ParamStore& ps, Rng& rng, int64_t vocab, const TrainConfig::Model& m);

// Embeds ids, adds positions, runs the "text_enc" transformer. [U, d_model].
Var text_encode(Tape& t, ParamStore& ps, const std::vector<int>& ids,
                const TrainConfig::Model& m);

// Causal decoder over teacher-forced `input_ids` attending to `memory`;
// logits via the tied embedding table. Output [U, vocab]. When
// `cross_attn_out` is set it receives the final layer's head-averaged
// cross-attention [U, L_memory].
Var decode_logits(Tape& t, ParamStore& ps, const std::vector<int>& input_ids, Var memory,
                  const TrainConfig::Model& m, Tensor* cross_attn_out = nullptr);

// Visual front half of the translation model: both branch backbones +
// temporal encoders, fusion, adapter, then the transformer encoder carrying
// the pretrained E_shared weights. `branch` selects the ablation arm; the
// missing branch in single-branch mode skips fusion entirely.
Var translation_encode(Tape& t, ParamStore& ps, const Tensor& video, const TrainConfig::Model& m,
                       bool train);

// Teacher-forced translation loss (next-token cross-entropy, PAD excluded)
// for one sample.
Var translation_loss(Tape& t, ParamStore& ps, const Tensor& video, const std::vector<int>& target,
                     const TrainConfig::Model& m, bool train);

// Argmax decoding from BOS until EOS or max_len tokens. Returns generated
// ids without BOS/EOS framing.
std::vector<int> greedy_decode(ParamStore& ps, const Tensor& video, const TrainConfig::Model& m,
                               int64_t max_len);

// Final-decoder-layer cross-attention for the generated tokens, transposed
// to [L_memory, U]: encoder positions on rows, tokens on columns, each
// column summing to 1.
Tensor export_attention(ParamStore& ps, const Tensor& video, const std::vector<int>& generated,
                        const TrainConfig::Model& m);

// Copies every checkpoint entry whose name starts with a transferable
// prefix (visual backbones, temporal encoders, shared encoder, text side)
// into the store; fusion/adapter entries stay freshly initialized. Errors
// name any matched entry with a mismatched shape. Returns the transferred
// entry names.
std::vector<std::string> init_from_pretraining(ParamStore& ps,
                                               const std::map<std::string, Tensor>& ckpt);

} // namespace dveslt
