#include "encoders.hpp"

namespace dveslt {

namespace {

void make_conv2d(ParamStore& ps, Rng& rng, const std::string& name, int64_t cin, int64_t cout,
                 int64_t k) {
    ps.create(name + ".w", xavier(rng, {cout, cin, k, k}, cin * k * k, cout * k * k));
    ps.create(name + ".b", Tensor::zeros({cout}));
}

void make_conv3d(ParamStore& ps, Rng& rng, const std::string& name, int64_t cin, int64_t cout,
                 int64_t k) {
    ps.create(name + ".w", xavier(rng, {cout, cin, k, k, k}, cin * k * k * k, cout * k * k * k));
    ps.create(name + ".b", Tensor::zeros({cout}));
}

void make_conv1d(ParamStore& ps, Rng& rng, const std::string& name, int64_t cin, int64_t cout,
                 int64_t k) {
    ps.create(name + ".w", xavier(rng, {cout, cin, k}, cin * k, cout * k));
    ps.create(name + ".b", Tensor::zeros({cout}));
}

void make_temporal(ParamStore& ps, Rng& rng, const std::string& prefix, int64_t d_in,
                   int64_t d_model) {
    make_conv1d(ps, rng, prefix + ".conv1", d_in, d_model, 3);
    make_conv1d(ps, rng, prefix + ".conv2", d_model, d_model, 3);
    for (int b = 1; b <= 2; ++b) {
        std::string bn = prefix + ".bn" + std::to_string(b);
        ps.create(bn + ".g", Tensor::full({d_model}, 1.0));
        ps.create(bn + ".b", Tensor::zeros({d_model}));
        ps.create(bn + ".mean", Tensor::zeros({d_model}), /*trainable=*/false);
        ps.create(bn + ".var", Tensor::full({d_model}, 1.0), /*trainable=*/false);
    }
}

Var conv_block2d(Tape& t, ParamStore& ps, const std::string& name, Var x) {
    Var w = t.param(ps, name + ".w");
    Var b = t.param(ps, name + ".b");
    return maxpool2d2(relu(conv2d_same(x, w, b)));
}

Var conv_block3d(Tape& t, ParamStore& ps, const std::string& name, Var x) {
    Var w = t.param(ps, name + ".w");
    Var b = t.param(ps, name + ".b");
    return maxpool3d2(relu(conv3d_same(x, w, b)));
}

} // namespace

void make_encoder_params(ParamStore& ps, Rng& rng, const TrainConfig::Model& m,
                         int64_t frame_size) {
    int64_t C = m.spatial_channels;
    make_conv2d(ps, rng, "spatial.c1", 1, C, 3);
    make_conv2d(ps, rng, "spatial.c2", C, C, 3);
    make_conv2d(ps, rng, "spatial.c3", C, C, 3);
    int64_t side = frame_size / 2 / 2 / 2;
    if (side < 1) fail("make_encoder_params: frame size too small for three pooling stages");
    make_linear(ps, rng, "spatial.head", C * side * side, m.d_spatial);

    int64_t S = m.st_channels;
    make_conv3d(ps, rng, "st.c1", 1, S / 2 > 0 ? S / 2 : 1, 3);
    make_conv3d(ps, rng, "st.c2", S / 2 > 0 ? S / 2 : 1, S, 3);
    int64_t sideS = frame_size / 2 / 2;
    int64_t depthS = m.window / 2 / 2;
    if (sideS < 1 || depthS < 1)
        fail("make_encoder_params: window/frame size too small for two 3D pooling stages");
    make_linear(ps, rng, "st.head", S * depthS * sideS * sideS, m.d_spatiotemporal);

    make_temporal(ps, rng, "temp_spatial", m.d_spatial, m.d_model);
    make_temporal(ps, rng, "temp_st", m.d_spatiotemporal, m.d_model);
    make_transformer(ps, rng, "shared", m.shared_layers, m.d_model, m.ffn_mult, /*cross=*/false);
}

Var spatial_encode(Tape& t, ParamStore& ps, const Tensor& video, const TrainConfig::Model& m) {
    if (video.rank() != 3 || video.dim(0) < 1)
        fail("spatial_encode: expected [T,H,W] with T >= 1");
    int64_t T = video.dim(0), H = video.dim(1), W = video.dim(2);
    Tensor x = video;
    x.shape = {T, 1, H, W};
    Var h = t.leaf(std::move(x));
    h = conv_block2d(t, ps, "spatial.c1", h);
    h = conv_block2d(t, ps, "spatial.c2", h);
    h = conv_block2d(t, ps, "spatial.c3", h);
    const Shape& s = t.value(h).shape; // [T,C,side,side]
    h = reshape(h, {T, s[1] * s[2] * s[3]});
    return linear(t, ps, "spatial.head", h); // [T, d_spatial]
}

Tensor extract_windows(const Tensor& video, int64_t window, int64_t stride) {
    int64_t T = video.dim(0), H = video.dim(1), W = video.dim(2);
    int64_t nw = window_count(T, window, stride);
    Tensor out = Tensor::zeros({nw, 1, window, H, W});
    for (int64_t w = 0; w < nw; ++w)
        for (int64_t f = 0; f < window; ++f) {
            int64_t src = std::min(w * stride + f, T - 1); // repeat last frame past the end
            std::copy_n(&video.data[static_cast<size_t>(src * H * W)],
                        static_cast<size_t>(H * W),
                        &out.data[static_cast<size_t>(((w * window) + f) * H * W)]);
        }
    return out;
}

Var spatiotemporal_encode(Tape& t, ParamStore& ps, const Tensor& video,
                          const TrainConfig::Model& m) {
    if (video.rank() != 3 || video.dim(0) < 1)
        fail("spatiotemporal_encode: expected [T,H,W] with T >= 1");
    int64_t T = video.dim(0);
    Var h = t.leaf(extract_windows(video, m.window, m.stride));
    h = conv_block3d(t, ps, "st.c1", h);
    h = conv_block3d(t, ps, "st.c2", h);
    const Shape& s = t.value(h).shape; // [W,C,depth,side,side]
    h = reshape(h, {s[0], s[1] * s[2] * s[3] * s[4]});
    Var per_window = linear(t, ps, "st.head", h); // [W, d_st]
    return repeat_to_length(per_window, m.stride, T); // [T, d_st]
}

Var temporal_encode(Tape& t, ParamStore& ps, const std::string& prefix, Var seq,
                    const TrainConfig::Model& m, bool train) {
    const Tensor& x = t.value(seq);
    if (x.rank() != 2) fail("temporal_encode: expected [L,d]");
    if (x.dim(0) < 4)
        fail("temporal_encode: sequence too short (L=" + std::to_string(x.dim(0)) +
             ", need >= 4)");
    Var h = seq;
    for (int b = 1; b <= 2; ++b) {
        std::string conv = prefix + ".conv" + std::to_string(b);
        std::string bn = prefix + ".bn" + std::to_string(b);
        h = conv1d_same(h, t.param(ps, conv + ".w"), t.param(ps, conv + ".b"));
        h = batch_norm_seq(h, t.param(ps, bn + ".g"), t.param(ps, bn + ".b"), ps, bn + ".mean",
                           bn + ".var", train);
        h = maxpool1d2(relu(h));
    }
    return h; // [floor(floor(L/2)/2), d_model]
}

Var shared_encode(Tape& t, ParamStore& ps, Var seq, const TrainConfig::Model& m) {
    const Tensor& x = t.value(seq);
    Var pos = t.leaf(sinusoidal_positions(x.dim(0), x.dim(1)));
    return transformer(t, ps, "shared", add(seq, pos), m.shared_layers, m.heads);
}

Var encode_branch_spatial(Tape& t, ParamStore& ps, const Tensor& video,
                          const TrainConfig::Model& m, bool train) {
    Var f = spatial_encode(t, ps, video, m);
    return shared_encode(t, ps, temporal_encode(t, ps, "temp_spatial", f, m, train), m);
}

Var encode_branch_spatiotemporal(Tape& t, ParamStore& ps, const Tensor& video,
                                 const TrainConfig::Model& m, bool train) {
    Var f = spatiotemporal_encode(t, ps, video, m);
    return shared_encode(t, ps, temporal_encode(t, ps, "temp_st", f, m, train), m);
}

} // namespace dveslt
