#pragma once

#include "core/config.hpp"
#include "layers.hpp"

namespace dveslt {

inline int64_t window_count(int64_t T, int64_t window, int64_t stride) {
    return T >= window ? (T - window) / stride + 1 : 1;
}

// Two conv-norm-pool blocks halve the length twice.
inline int64_t reduced_length(int64_t L) { return L / 2 / 2; }

// Creates every parameter of the visual pathway: the per-frame 2D backbone,
// the sliding-window 3D backbone, one temporal encoder per branch, and the
// transformer encoder shared by both branches.
void make_encoder_params(ParamStore& ps, Rng& rng, const TrainConfig::Model& m,
                         int64_t frame_size);

// Per-frame 2D conv net; row t depends only on frame t. video [T,H,W] ->
// [T, d_spatial].
Var spatial_encode(Tape& t, ParamStore& ps, const Tensor& video, const TrainConfig::Model& m);

// Windows of `window` frames at offsets 0, stride, 2*stride, ...; each
// window maps to one vector through a small 3D conv net, vectors are
// repeated `stride` times and the last one fills the tail so the output
// length is exactly T. Inputs shorter than one window repeat their final
// frame. video [T,H,W] -> [T, d_spatiotemporal].
Var spatiotemporal_encode(Tape& t, ParamStore& ps, const Tensor& video,
                          const TrainConfig::Model& m);

// Host-side window extraction, exposed for tests: [T,H,W] -> [W,1,window,H,W].
Tensor extract_windows(const Tensor& video, int64_t window, int64_t stride);

// Two (conv1d -> batchnorm -> ReLU -> maxpool/2) blocks; length L ->
// floor(floor(L/2)/2), width -> d_model. `prefix` selects the per-branch
// parameter set; `train` picks batch vs running statistics for the norms.
Var temporal_encode(Tape& t, ParamStore& ps, const std::string& prefix, Var seq,
                    const TrainConfig::Model& m, bool train);

// The branch-shared transformer encoder: sinusoidal positions plus a
// pre-norm self-attention stack under the single "shared" parameter set.
Var shared_encode(Tape& t, ParamStore& ps, Var seq, const TrainConfig::Model& m);

// Full visual branch pipelines: backbone -> temporal encoder -> shared
// encoder. Output [floor(floor(T/2)/2), d_model].
Var encode_branch_spatial(Tape& t, ParamStore& ps, const Tensor& video,
                          const TrainConfig::Model& m, bool train);
Var encode_branch_spatiotemporal(Tape& t, ParamStore& ps, const Tensor& video,
                                 const TrainConfig::Model& m, bool train);

} // namespace dveslt
