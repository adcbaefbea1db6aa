#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/grad_check.hpp"
#include "model/alignment.hpp"
#include "model/tokenizer.hpp"
#include "model/translation.hpp"

using namespace dveslt;

namespace {

Tensor randn(Rng& rng, Shape s) {
    Tensor t = Tensor::zeros(std::move(s));
    for (auto& v : t.data) v = rng.normal();
    return t;
}

} // namespace

TEST_CASE("pool_and_normalize oracles") {
    Tape t;
    // constant-row sequence pools to that row, normalized
    Tensor c = Tensor::zeros({4, 3});
    for (int64_t l = 0; l < 4; ++l) {
        c.data[static_cast<size_t>(l * 3)] = 3.0;
        c.data[static_cast<size_t>(l * 3 + 1)] = 0.0;
        c.data[static_cast<size_t>(l * 3 + 2)] = 4.0;
    }
    Var p = pool_and_normalize(t, {t.leaf(c)});
    CHECK(t.value(p).data[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(t.value(p).data[2] == doctest::Approx(0.8).epsilon(1e-12));

    // frame permutation leaves the mean unchanged
    Rng rng(3);
    Tensor s = randn(rng, {3, 4});
    Tensor sp = s;
    std::swap_ranges(sp.data.begin(), sp.data.begin() + 4, sp.data.begin() + 8);
    Tape t2;
    Var a = pool_and_normalize(t2, {t2.leaf(s)});
    Var b = pool_and_normalize(t2, {t2.leaf(sp)});
    for (int64_t j = 0; j < 4; ++j)
        CHECK(t2.value(a).data[j] == doctest::Approx(t2.value(b).data[j]).epsilon(1e-12));

    // hand mean+normalize oracle on the random 3x4 sequence
    double mean[4] = {0, 0, 0, 0};
    for (int64_t l = 0; l < 3; ++l)
        for (int64_t j = 0; j < 4; ++j) mean[j] += s.data[l * 4 + j] / 3.0;
    double nrm = std::sqrt(mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2] +
                           mean[3] * mean[3]);
    for (int64_t j = 0; j < 4; ++j)
        CHECK(t2.value(a).data[j] == doctest::Approx(mean[j] / nrm).epsilon(1e-12));

    // rows always unit norm
    Rng rng2(9);
    Tape t3;
    Var batch = pool_and_normalize(
        t3, {t3.leaf(randn(rng2, {5, 6})), t3.leaf(randn(rng2, {2, 6})),
             t3.leaf(randn(rng2, {7, 6}))});
    const Tensor& B = t3.value(batch);
    for (int64_t r = 0; r < 3; ++r) {
        double s2 = 0;
        for (int64_t j = 0; j < 6; ++j) s2 += B.data[r * 6 + j] * B.data[r * 6 + j];
        CHECK(std::abs(std::sqrt(s2) - 1.0) < 1e-9);
    }

    CHECK_THROWS_AS(pool_and_normalize(t3, {t3.leaf(Tensor::zeros({3, 4}))}), Error);
}

TEST_CASE("similarity oracles") {
    Tape t;
    Tensor I = Tensor::zeros({3, 3});
    for (int64_t i = 0; i < 3; ++i) I.data[i * 3 + i] = 1.0;
    Var A = t.leaf(I);
    Var M = similarity(t, A, A);
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 3; ++j)
            CHECK(t.value(M).data[i * 3 + j] == (i == j ? 1.0 : 0.0));

    Var a1 = t.leaf(Tensor{{1, 2}, {0.6, 0.8}});
    Var b1 = t.leaf(Tensor{{1, 2}, {-0.6, -0.8}});
    CHECK(t.value(similarity(t, a1, b1)).data[0] == doctest::Approx(-1.0).epsilon(1e-12));

    Rng rng(5);
    Tensor X = randn(rng, {3, 4}), Y = randn(rng, {3, 4});
    Var S = similarity(t, t.leaf(X), t.leaf(Y));
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 3; ++j) {
            double dot = 0;
            for (int64_t k = 0; k < 4; ++k) dot += X.data[i * 4 + k] * Y.data[j * 4 + k];
            CHECK(t.value(S).data[i * 3 + j] == doctest::Approx(dot).epsilon(1e-12));
        }
    CHECK_THROWS_AS(similarity(t, t.leaf(Tensor::zeros({2, 3})), t.leaf(Tensor::zeros({2, 4}))),
                    Error);
}

TEST_CASE("InfoNCE oracle values") {
    Tape t;
    Var tau1 = t.leaf(Tensor::scalar(1.0));

    // N=1: single-element softmax, loss exactly 0
    CHECK(t.value(infonce_symmetric(t, t.leaf(Tensor{{1, 1}, {0.37}}), tau1)).item() == 0.0);

    // uniform matrix -> ln N for any constant and temperature
    for (double c : {0.0, 0.5, -2.0}) {
        Var M = t.leaf(Tensor::full({4, 4}, c));
        Var tau = t.leaf(Tensor::scalar(0.07));
        CHECK(std::abs(t.value(infonce_symmetric(t, M, tau)).item() - std::log(4.0)) < 1e-9);
    }

    // [[1,0],[0,1]] at tau=1 -> ln(1+e^-1)
    Tensor I2 = Tensor{{2, 2}, {1.0, 0.0, 0.0, 1.0}};
    double got = t.value(infonce_symmetric(t, t.leaf(I2), tau1)).item();
    CHECK(std::abs(got - std::log(1.0 + std::exp(-1.0))) < 1e-9);
    CHECK(got == doctest::Approx(0.31326).epsilon(1e-4));

    CHECK_THROWS_AS(infonce_symmetric(t, t.leaf(I2), t.leaf(Tensor::scalar(-0.5))), Error);
}

TEST_CASE("InfoNCE shift invariance and diagonal monotonicity") {
    Rng rng(7);
    Tensor M = randn(rng, {5, 5});
    Tape t;
    Var tau = t.leaf(Tensor::scalar(0.3));
    double base = t.value(infonce_symmetric(t, t.leaf(M), tau)).item();
    Tensor Ms = M;
    for (auto& v : Ms.data) v += 0.731;
    double shifted = t.value(infonce_symmetric(t, t.leaf(Ms), tau)).item();
    CHECK(std::abs(base - shifted) < 1e-9);

    // for M = a on the diagonal, b off, loss strictly decreases in a-b
    double prev = 1e300;
    for (double gap : {0.0, 0.2, 0.5, 1.0}) {
        Tensor G = Tensor::full({3, 3}, 0.1);
        for (int64_t i = 0; i < 3; ++i) G.data[i * 3 + i] = 0.1 + gap;
        double l = t.value(infonce_symmetric(t, t.leaf(G), tau)).item();
        CHECK(l < prev);
        prev = l;
    }
}

TEST_CASE("joint batch permutation leaves all losses unchanged exactly") {
    Rng rng(11);
    Tensor A = randn(rng, {4, 6}), B = randn(rng, {4, 6}), C = randn(rng, {4, 6});
    std::vector<int64_t> perm = {2, 0, 3, 1};
    auto permute = [&](const Tensor& X) {
        Tensor Y = X;
        for (int64_t i = 0; i < 4; ++i)
            std::copy_n(&X.data[static_cast<size_t>(perm[static_cast<size_t>(i)] * 6)], 6,
                        &Y.data[static_cast<size_t>(i * 6)]);
        return Y;
    };
    Tape t;
    Var tau = t.leaf(Tensor::scalar(0.07));
    auto norm = [&](const Tensor& X) { return l2norm_rows(t.leaf(X)); };
    double l1 = t.value(cross_modal_loss(t, norm(A), norm(C), tau)).item();
    double l2 = t.value(inter_modal_loss(t, norm(A), norm(B), tau)).item();
    double p1 = t.value(cross_modal_loss(t, norm(permute(A)), norm(permute(C)), tau)).item();
    double p2 = t.value(inter_modal_loss(t, norm(permute(A)), norm(permute(B)), tau)).item();
    CHECK(l1 == p1);
    CHECK(l2 == p2);
}

TEST_CASE("matched pairs score lower loss than shuffled pairs") {
    Tape t;
    Tensor I = Tensor::zeros({4, 4});
    for (int64_t i = 0; i < 4; ++i) I.data[i * 4 + i] = 1.0;
    Tensor Shuf = Tensor::zeros({4, 4}); // rows rotated by one
    for (int64_t i = 0; i < 4; ++i) Shuf.data[i * 4 + (i + 1) % 4] = 1.0;
    Var tau = t.leaf(Tensor::scalar(0.07));
    double matched = t.value(cross_modal_loss(t, t.leaf(I), t.leaf(I), tau)).item();
    double shuffled = t.value(cross_modal_loss(t, t.leaf(Shuf), t.leaf(I), tau)).item();
    CHECK(matched < shuffled);
}

TEST_CASE("temperature is trainable with nonzero gradient and clamped floor") {
    ParamStore ps;
    make_temperature_param(ps, 0.07);
    {
        Tape t;
        Var tau = temperature(t, ps, 0.01);
        CHECK(t.value(tau).item() == doctest::Approx(0.07).epsilon(1e-12));
        Rng rng(13);
        Var M = similarity(t, l2norm_rows(t.leaf(randn(rng, {3, 5}))),
                           l2norm_rows(t.leaf(randn(rng, {3, 5}))));
        ps.zero_grads();
        t.backward(infonce_symmetric(t, M, tau));
        CHECK(ps.grad("tau.s").item() != 0.0);
    }
    // push s high enough that exp(-s) < 0.01 and check the clamp
    ps.value("tau.s").data[0] = 10.0;
    Tape t2;
    CHECK(t2.value(temperature(t2, ps, 0.01)).item() == 0.01);
}

TEST_CASE("mask_tokens behavior") {
    std::vector<int> ids = {tok::BOS, 7, 8, 9, 10, 11, 12, tok::EOS};
    CHECK(mask_tokens(ids, 0.0, 5) == ids);
    auto all = mask_tokens(ids, 1.0, 5);
    CHECK(all.front() == tok::BOS);
    CHECK(all.back() == tok::EOS);
    for (size_t i = 1; i + 1 < all.size(); ++i) CHECK(all[i] == tok::MASK);
    CHECK(mask_tokens(ids, 0.5, 42) == mask_tokens(ids, 0.5, 42));
    auto half = mask_tokens(ids, 0.5, 42);
    int64_t masked = 0;
    for (int id : half) masked += id == tok::MASK;
    CHECK(masked == 3); // round(0.5 * 6)
}

TEST_CASE("Eq.1-style cross-modal loss passes strict FD over 5 seeds") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        ParamStore ps;
        Rng rng(seed);
        ps.create("za", randn(rng, {3, 4}));
        ps.create("zt", randn(rng, {3, 4}));
        make_temperature_param(ps, 0.07);
        auto rep = grad_check(
            [](Tape& t, ParamStore& s) {
                Var tau = temperature(t, s, 0.01);
                return cross_modal_loss(t, l2norm_rows(t.param(s, "za")),
                                        l2norm_rows(t.param(s, "zt")), tau);
            },
            ps);
        CHECK(rep.pass);
        CHECK(rep.worst_rel_err < 1e-4);
    }
}

TEST_CASE("Eq.2-style inter-modal loss passes strict FD over 5 seeds") {
    for (uint64_t seed = 11; seed <= 15; ++seed) {
        ParamStore ps;
        Rng rng(seed);
        ps.create("zres", randn(rng, {4, 5}));
        ps.create("zi3d", randn(rng, {4, 5}));
        make_temperature_param(ps, 0.07);
        auto rep = grad_check(
            [](Tape& t, ParamStore& s) {
                Var tau = temperature(t, s, 0.01);
                return inter_modal_loss(t, l2norm_rows(t.param(s, "zres")),
                                        l2norm_rows(t.param(s, "zi3d")), tau);
            },
            ps);
        CHECK(rep.pass);
        CHECK(rep.worst_rel_err < 1e-4);
    }
}

TEST_CASE("Eq.3 composite loss passes strict FD over 5 seeds") {
    std::vector<int> gold = {6, 7, 5};
    for (uint64_t seed = 21; seed <= 25; ++seed) {
        ParamStore ps;
        Rng rng(seed);
        ps.create("zres", randn(rng, {3, 4}));
        ps.create("zi3d", randn(rng, {3, 4}));
        ps.create("ztext", randn(rng, {3, 4}));
        ps.create("logits", randn(rng, {3, 9}));
        make_temperature_param(ps, 0.07);
        auto rep = grad_check(
            [&](Tape& t, ParamStore& s) {
                Var tau = temperature(t, s, 0.01);
                Var recon = cross_entropy(t.param(s, "logits"), gold, tok::PAD);
                auto parts = pretraining_loss(t, l2norm_rows(t.param(s, "zres")),
                                              l2norm_rows(t.param(s, "zi3d")),
                                              l2norm_rows(t.param(s, "ztext")), tau, recon, 1.0);
                return parts.total;
            },
            ps);
        CHECK(rep.pass);
        CHECK(rep.worst_rel_err < 1e-4);
    }
}

TEST_CASE("pretraining loss components sum and degenerate N=1 case") {
    ParamStore ps;
    Rng rng(31);
    Tape t;
    Var tau = t.leaf(Tensor::scalar(0.07));
    Var za = l2norm_rows(t.leaf(randn(rng, {3, 4})));
    Var zb = l2norm_rows(t.leaf(randn(rng, {3, 4})));
    Var zt = l2norm_rows(t.leaf(randn(rng, {3, 4})));
    Var recon = t.leaf(Tensor::scalar(0.25));
    auto parts = pretraining_loss(t, za, zb, zt, tau, recon, 2.0);
    double expect = t.value(parts.cross_spatial).item() + t.value(parts.cross_st).item() +
                    t.value(parts.inter).item() + 2.0 * 0.25;
    CHECK(std::abs(t.value(parts.total).item() - expect) < 1e-12);

    // N=1 with lambda_rec=0 is exactly 0
    Var one_a = l2norm_rows(t.leaf(randn(rng, {1, 4})));
    Var one_b = l2norm_rows(t.leaf(randn(rng, {1, 4})));
    Var one_t = l2norm_rows(t.leaf(randn(rng, {1, 4})));
    auto p1 = pretraining_loss(t, one_a, one_b, one_t, tau, recon, 0.0);
    CHECK(t.value(p1.total).item() == 0.0);
}

TEST_CASE("masked reconstruction overfits one sentence") {
    TrainConfig::Model m;
    m.d_model = 16;
    m.heads = 2;
    m.text_layers = 1;
    m.decoder_layers = 2;
    m.ffn_mult = 2;
    ParamStore ps;
    Rng rng(41);
    make_text_params(ps, rng, 12, m);

    std::vector<int> framed = {tok::BOS, 6, 9, 7, 11, tok::EOS};
    std::vector<int> masked = mask_tokens(framed, 0.3, 77);
    std::vector<int> input(framed.begin(), framed.end() - 1);
    std::vector<int> gold(framed.begin() + 1, framed.end());

    double loss = 1e9;
    for (int step = 0; step < 200; ++step) {
        Tape t;
        Var memory = text_encode(t, ps, masked, m);
        Var logits = decode_logits(t, ps, input, memory, m);
        Var L = cross_entropy(logits, gold, tok::PAD);
        loss = t.value(L).item();
        ps.zero_grads();
        t.backward(L);
        for (auto& [name, e] : ps.entries())
            if (e.trainable)
                for (size_t i = 0; i < e.value.data.size(); ++i)
                    e.value.data[i] -= 0.2 * e.grad.data[i];
    }
    CHECK(loss < 0.1);
}

TEST_CASE("uniform logits give ln V reconstruction loss") {
    Tape t;
    std::vector<int> gold = {5, 6, 7};
    Var logits = t.leaf(Tensor::zeros({3, 10}));
    CHECK(std::abs(t.value(cross_entropy(logits, gold)).item() - std::log(10.0)) < 1e-12);
}
