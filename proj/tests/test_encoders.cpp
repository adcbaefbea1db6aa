#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "core/grad_check.hpp"
#include "model/encoders.hpp"

using namespace dveslt;

namespace {

TrainConfig::Model tiny_model() {
    TrainConfig::Model m;
    m.d_spatial = 6;
    m.d_spatiotemporal = 8;
    m.d_model = 8;
    m.heads = 2;
    m.shared_layers = 1;
    m.ffn_mult = 2;
    m.spatial_channels = 2;
    m.st_channels = 2;
    return m;
}

Tensor rand_video(int64_t T, int64_t R, uint64_t seed) {
    Rng rng(seed);
    Tensor v = Tensor::zeros({T, R, R});
    for (auto& x : v.data) x = rng.uniform();
    return v;
}

ParamStore make_store(const TrainConfig::Model& m, int64_t frame, uint64_t seed = 3) {
    ParamStore ps;
    Rng rng(seed);
    make_encoder_params(ps, rng, m, frame);
    return ps;
}

} // namespace

TEST_CASE("spatial encoder output shape and frame independence") {
    auto m = tiny_model();
    ParamStore ps = make_store(m, 16);
    Tensor v = rand_video(20, 16, 1);
    Tape t;
    Var out = spatial_encode(t, ps, v, m);
    REQUIRE(t.value(out).shape == Shape{20, m.d_spatial});

    // permuting frames permutes output rows identically
    Tensor vp = v;
    std::vector<int64_t> perm(20);
    for (int64_t i = 0; i < 20; ++i) perm[static_cast<size_t>(i)] = (i * 7 + 3) % 20;
    for (int64_t i = 0; i < 20; ++i)
        std::copy_n(&v.data[static_cast<size_t>(perm[static_cast<size_t>(i)] * 16 * 16)], 16 * 16,
                    &vp.data[static_cast<size_t>(i * 16 * 16)]);
    Tape t2;
    Var out2 = spatial_encode(t2, ps, vp, m);
    const Tensor& a = t.value(out);
    const Tensor& b = t2.value(out2);
    for (int64_t i = 0; i < 20; ++i)
        for (int64_t j = 0; j < m.d_spatial; ++j)
            CHECK(b.data[i * m.d_spatial + j] ==
                  a.data[perm[static_cast<size_t>(i)] * m.d_spatial + j]);
}

TEST_CASE("all-zero video gives identical spatial rows") {
    auto m = tiny_model();
    ParamStore ps = make_store(m, 16);
    Tape t;
    Var out = spatial_encode(t, ps, Tensor::zeros({5, 16, 16}), m);
    const Tensor& o = t.value(out);
    for (int64_t i = 1; i < 5; ++i)
        for (int64_t j = 0; j < m.d_spatial; ++j)
            CHECK(o.data[i * m.d_spatial + j] == o.data[j]);
}

TEST_CASE("window count formula and spatiotemporal lengths") {
    for (int64_t T = 16; T <= 200; ++T)
        CHECK(window_count(T, 16, 6) == (T - 16) / 6 + 1);
    CHECK(window_count(16, 16, 6) == 1);
    CHECK(window_count(28, 16, 6) == 3);
    CHECK(window_count(10, 16, 6) == 1); // short input handled by tail padding

    auto m = tiny_model();
    ParamStore ps = make_store(m, 16);
    for (int64_t T : {10, 16, 28, 45}) {
        Tape t;
        Var out = spatiotemporal_encode(t, ps, rand_video(T, 16, 7), m);
        CHECK(t.value(out).shape == Shape{T, m.d_spatiotemporal});
    }
}

TEST_CASE("window extraction offsets and tail repetition") {
    Tensor v = Tensor::zeros({28, 2, 2});
    for (int64_t f = 0; f < 28; ++f)
        for (int64_t i = 0; i < 4; ++i) v.data[f * 4 + i] = static_cast<double>(f);
    Tensor w = extract_windows(v, 16, 6);
    REQUIRE(w.shape == Shape{3, 1, 16, 2, 2});
    CHECK(w.data[0] == 0.0);                       // window 0 starts at frame 0
    CHECK(w.data[(1 * 16 + 0) * 4] == 6.0);        // window 1 starts at frame 6
    CHECK(w.data[(2 * 16 + 0) * 4] == 12.0);       // window 2 starts at frame 12
    CHECK(w.data[(2 * 16 + 15) * 4] == 27.0);
    Tensor s = extract_windows(Tensor{{10, 2, 2}, std::vector<double>(40, 0.0)}, 16, 6);
    REQUIRE(s.shape == Shape{1, 1, 16, 2, 2});
}

TEST_CASE("spatiotemporal upsampling repeats in window order") {
    auto m = tiny_model();
    ParamStore ps = make_store(m, 16);
    Tensor v = rand_video(28, 16, 9);
    Tape t;
    Var out = spatiotemporal_encode(t, ps, v, m);
    const Tensor& o = t.value(out); // [28, d]
    int64_t d = m.d_spatiotemporal;
    // rows 0..5 = window 0, rows 6..11 = window 1, rows 12..17 = window 2,
    // rows 18..27 = window 2 repeated (tail fill)
    for (int64_t r = 1; r < 6; ++r)
        for (int64_t j = 0; j < d; ++j) CHECK(o.data[r * d + j] == o.data[j]);
    for (int64_t r = 12; r < 28; ++r)
        for (int64_t j = 0; j < d; ++j) CHECK(o.data[r * d + j] == o.data[12 * d + j]);
    bool w0_differs_w1 = false;
    for (int64_t j = 0; j < d; ++j)
        if (o.data[j] != o.data[6 * d + j]) w0_differs_w1 = true;
    CHECK(w0_differs_w1);
}

TEST_CASE("temporal encoder length contract over T in [4,200]") {
    auto m = tiny_model();
    ParamStore ps = make_store(m, 16);
    for (int64_t L = 4; L <= 200; ++L) {
        Tape t;
        Rng rng(static_cast<uint64_t>(L));
        Tensor seq = Tensor::zeros({L, m.d_spatial});
        for (auto& x : seq.data) x = rng.normal();
        Var out = temporal_encode(t, ps, "temp_spatial", t.leaf(std::move(seq)), m, true);
        CHECK(t.value(out).shape == Shape{L / 2 / 2, m.d_model});
    }
    CHECK(reduced_length(16) == 4);
    CHECK(reduced_length(18) == 4);
    CHECK(reduced_length(100) == 25);
    Tape t;
    CHECK_THROWS_WITH_AS(
        temporal_encode(t, ps, "temp_spatial", t.leaf(Tensor::zeros({3, 6})), m, true),
        doctest::Contains("too short"), Error);
}

TEST_CASE("shared encoder is parameter-shared, shape-preserving, position-sensitive") {
    auto m = tiny_model();
    ParamStore ps = make_store(m, 16);
    Rng rng(21);
    Tensor seq = Tensor::zeros({7, m.d_model});
    for (auto& x : seq.data) x = rng.normal();

    Tape t1, t2;
    Var o1 = shared_encode(t1, ps, t1.leaf(seq), m); // "spatial" call path
    Var o2 = shared_encode(t2, ps, t2.leaf(seq), m); // "spatiotemporal" call path
    CHECK(t1.value(o1).shape == Shape{7, m.d_model});
    CHECK(t1.value(o1).data == t2.value(o2).data); // same params, same output bits

    // permuting rows changes the output (sinusoidal positions break symmetry)
    Tensor perm = seq;
    std::swap_ranges(perm.data.begin(), perm.data.begin() + m.d_model,
                     perm.data.begin() + m.d_model);
    Tape t3;
    Var o3 = shared_encode(t3, ps, t3.leaf(perm), m);
    CHECK(t3.value(o3).data != t1.value(o1).data);
}

TEST_CASE("end-to-end branch lengths agree for fusion") {
    auto m = tiny_model();
    ParamStore ps = make_store(m, 16);
    for (int64_t T : {16, 23, 40}) {
        Tensor v = rand_video(T, 16, static_cast<uint64_t>(T));
        Tape t;
        Var zs = encode_branch_spatial(t, ps, v, m, true);
        Var zt = encode_branch_spatiotemporal(t, ps, v, m, true);
        CHECK(t.value(zs).shape == Shape{T / 2 / 2, m.d_model});
        CHECK(t.value(zt).shape == Shape{T / 2 / 2, m.d_model});
    }
}

TEST_CASE("gradients flow through both full branches") {
    auto m = tiny_model();
    Tensor v = rand_video(18, 8, 4);
    for (const char* branch : {"spatial", "st"}) {
        ParamStore ps = make_store(m, 8, 5);
        // zero-initialized conv biases can pin relu inputs exactly at the
        // kink (dead receptive fields), where FD measures the half-slope;
        // jitter biases off zero before checking
        Rng jr(17);
        for (auto& [name, e] : ps.entries())
            if (name.size() > 2 && name.substr(name.size() - 2) == ".b" && e.trainable)
                for (auto& x : e.value.data) x += jr.uniform(0.01, 0.05);
        GradCheckOptions opt;
        opt.max_elems_per_entry = 2; // spot-check a slice of each entry
        opt.sample_seed = 11;
        opt.tol = 2e-3;
        auto loss = [&](Tape& t, ParamStore& s) {
            Var z = std::string(branch) == "spatial"
                        ? encode_branch_spatial(t, s, v, m, false)
                        : encode_branch_spatiotemporal(t, s, v, m, false);
            return scalar_mul(sum_all(mul(z, z)), 0.01);
        };
        // a perturbed bias shifts a whole channel, so one step size can land
        // across a relu kink or maxpool tie; a kink crossing disappears at
        // the smaller step while a real gradient bug fails at both
        opt.h = 1e-4;
        auto rep_a = grad_check(loss, ps, opt);
        opt.h = 1e-6;
        auto rep_b = grad_check(loss, ps, opt);
        REQUIRE(rep_a.entries.size() == rep_b.entries.size());
        for (size_t i = 0; i < rep_a.entries.size(); ++i) {
            CAPTURE(rep_a.entries[i].name);
            CHECK(std::min(rep_a.entries[i].max_rel_err, rep_b.entries[i].max_rel_err) <
                  opt.tol);
        }
    }
}
