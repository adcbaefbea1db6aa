#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/grad_check.hpp"
#include "core/rng.hpp"
#include "core/tape.hpp"

using namespace dveslt;

namespace {

Tensor randt(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(s));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// values bounded away from zero (for relu / l2norm kinks)
Tensor randt_away(Shape s, Rng& rng, double min_mag = 0.15) {
    Tensor t = Tensor::zeros(std::move(s));
    for (double& v : t.data) {
        double m = rng.uniform(min_mag, 1.0);
        v = rng.uniform() < 0.5 ? -m : m;
    }
    return t;
}

using Init = std::function<void(ParamStore&, Rng&, int seed)>;

void check_op_grads(const std::string& op, const Init& init, const LossBuilder& build,
                    int seeds = 5, double tol = 1e-4) {
    for (int s = 1; s <= seeds; ++s) {
        ParamStore ps;
        Rng rng(static_cast<uint64_t>(s) * 7919 + 13);
        init(ps, rng, s);
        GradCheckOptions opt;
        opt.h = 1e-5;
        opt.tol = tol;
        auto rep = grad_check(build, ps, opt);
        INFO(op << " seed " << s << " worst rel err " << rep.worst_rel_err);
        CHECK(rep.pass);
    }
}

// loss = sum(out * fixed_random_weights): exercises non-uniform output grads
Var weighted_sum(Tape& t, Var out, uint64_t wseed) {
    Rng rng(wseed);
    Tensor w = randt(t.value(out).shape, rng, 0.2, 1.0);
    return sum_all(mul(out, t.leaf(std::move(w))));
}

} // namespace

TEST_CASE("forward oracles: elementwise and softmax") {
    Tape t;
    Var r = relu(t.leaf(Tensor{{3}, {-1.0, 0.0, 2.0}}));
    CHECK(t.value(r).data == std::vector<double>{0.0, 0.0, 2.0});

    Var s = softmax_last(t.leaf(Tensor{{2}, {0.0, 0.0}}));
    CHECK(t.value(s).data[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(t.value(s).data[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("matmul equals triple-loop oracle to 1e-12") {
    Rng rng(42);
    Tensor A = randt({2, 3}, rng), B = randt({3, 4}, rng);
    Tape t;
    Var c = matmul(t.leaf(A), t.leaf(B));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 4; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += A.data[i * 3 + k] * B.data[k * 4 + j];
            CHECK(std::abs(t.value(c).data[i * 4 + j] - s) < 1e-12);
        }
}

TEST_CASE("conv1d_same equals naive padded-loop oracle") {
    Rng rng(7);
    int64_t L = 9, Cin = 3, Cout = 2, K = 3, P = K / 2;
    Tensor X = randt({L, Cin}, rng), W = randt({Cout, Cin, K}, rng), B = randt({Cout}, rng);
    Tape t;
    Var y = conv1d_same(t.leaf(X), t.leaf(W), t.leaf(B));
    for (int64_t l = 0; l < L; ++l)
        for (int64_t co = 0; co < Cout; ++co) {
            double s = B.data[co];
            for (int64_t ci = 0; ci < Cin; ++ci)
                for (int64_t k = 0; k < K; ++k) {
                    int64_t src = l + k - P;
                    if (src < 0 || src >= L) continue;
                    s += X.data[src * Cin + ci] * W.data[(co * Cin + ci) * K + k];
                }
            CHECK(std::abs(t.value(y).data[l * Cout + co] - s) < 1e-12);
        }
}

TEST_CASE("conv2d_same equals naive padded-loop oracle") {
    Rng rng(11);
    int64_t N = 2, Cin = 2, H = 5, W = 4, Cout = 3, K = 3, P = K / 2;
    Tensor X = randt({N, Cin, H, W}, rng), Wt = randt({Cout, Cin, K, K}, rng),
           B = randt({Cout}, rng);
    Tape t;
    Var y = conv2d_same(t.leaf(X), t.leaf(Wt), t.leaf(B));
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j) {
                    double s = B.data[co];
                    for (int64_t ci = 0; ci < Cin; ++ci)
                        for (int64_t ki = 0; ki < K; ++ki)
                            for (int64_t kj = 0; kj < K; ++kj) {
                                int64_t si = i + ki - P, sj = j + kj - P;
                                if (si < 0 || si >= H || sj < 0 || sj >= W) continue;
                                s += X.data[((n * Cin + ci) * H + si) * W + sj] *
                                     Wt.data[((co * Cin + ci) * K + ki) * K + kj];
                            }
                    CHECK(std::abs(t.value(y).data[((n * Cout + co) * H + i) * W + j] - s) <
                          1e-12);
                }
}

TEST_CASE("conv3d_same equals naive padded-loop oracle") {
    Rng rng(13);
    int64_t N = 1, Cin = 2, D = 4, H = 3, W = 3, Cout = 2, K = 3, P = K / 2;
    Tensor X = randt({N, Cin, D, H, W}, rng), Wt = randt({Cout, Cin, K, K, K}, rng),
           B = randt({Cout}, rng);
    Tape t;
    Var y = conv3d_same(t.leaf(X), t.leaf(Wt), t.leaf(B));
    for (int64_t co = 0; co < Cout; ++co)
        for (int64_t d = 0; d < D; ++d)
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j) {
                    double s = B.data[co];
                    for (int64_t ci = 0; ci < Cin; ++ci)
                        for (int64_t kd = 0; kd < K; ++kd)
                            for (int64_t ki = 0; ki < K; ++ki)
                                for (int64_t kj = 0; kj < K; ++kj) {
                                    int64_t sd = d + kd - P, si = i + ki - P, sj = j + kj - P;
                                    if (sd < 0 || sd >= D || si < 0 || si >= H || sj < 0 ||
                                        sj >= W)
                                        continue;
                                    s += X.data[((ci * D + sd) * H + si) * W + sj] *
                                         Wt.data[(((co * Cin + ci) * K + kd) * K + ki) * K + kj];
                                }
                    CHECK(std::abs(t.value(y).data[((co * D + d) * H + i) * W + j] - s) <
                          1e-12);
                }
}

TEST_CASE("layer_norm matches hand computation") {
    Tape t;
    Tensor X{{1, 3}, {1.0, 2.0, 6.0}};
    Var y = layer_norm(t.leaf(X), t.leaf(Tensor::full({3}, 1.0)),
                       t.leaf(Tensor::zeros({3})), 1e-5);
    double mu = 3.0, var = (4.0 + 1.0 + 9.0) / 3.0;
    for (int j = 0; j < 3; ++j) {
        double expect = (X.data[j] - mu) / std::sqrt(var + 1e-5);
        CHECK(t.value(y).data[j] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("cross_entropy of uniform logits is ln V") {
    Tape t;
    Var ce = cross_entropy(t.leaf(Tensor::zeros({4, 7})), {0, 3, 6, 2});
    CHECK(t.value(ce).item() == doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("shape mismatch errors name both shapes") {
    Tape t;
    Var a = t.leaf(Tensor::zeros({2, 3}));
    Var b = t.leaf(Tensor::zeros({3, 3}));
    CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("(2,3)"), Error);
    CHECK_THROWS_WITH_AS(matmul(a, a), doctest::Contains("(2,3)"), Error);
}

TEST_CASE("non-finite op output is a hard error") {
    Tape t;
    Var big = t.leaf(Tensor{{2}, {1000.0, 1.0}});
    CHECK_THROWS_AS(exp_op(big), Error);
    Var z = t.leaf(Tensor{{1}, {0.0}});
    CHECK_THROWS_AS(log_op(z), Error);
}

TEST_CASE("backward trivials") {
    // loss = sum(p) -> gradient all ones
    {
        ParamStore ps;
        Rng rng(3);
        ps.create("p", randt({2, 3}, rng));
        Tape t;
        Var loss = sum_all(t.param(ps, "p"));
        t.backward(loss);
        for (double g : ps.grad("p").data) CHECK(g == 1.0);
    }
    // loss = sum(p^2) at p=[3] -> gradient [6]
    {
        ParamStore ps;
        ps.create("p", Tensor{{1}, {3.0}});
        Tape t;
        Var p = t.param(ps, "p");
        t.backward(sum_all(mul(p, p)));
        CHECK(ps.grad("p").data[0] == doctest::Approx(6.0).epsilon(1e-12));
    }
    // unreached params get zero gradient
    {
        ParamStore ps;
        ps.create("used", Tensor{{1}, {2.0}});
        ps.create("unused", Tensor{{1}, {5.0}});
        Tape t;
        Var u = t.param(ps, "used");
        t.param(ps, "unused");
        t.backward(sum_all(mul(u, u)));
        CHECK(ps.grad("unused").data[0] == 0.0);
        CHECK(ps.grad("used").data[0] == doctest::Approx(4.0));
    }
}

TEST_CASE("gradient accumulators are not implicitly reset") {
    ParamStore ps;
    ps.create("p", Tensor{{1}, {3.0}});
    for (int i = 0; i < 2; ++i) {
        Tape t;
        Var p = t.param(ps, "p");
        t.backward(sum_all(mul(p, p)));
    }
    CHECK(ps.grad("p").data[0] == doctest::Approx(12.0)); // two backwards accumulate
}

TEST_CASE("grad_check: f(x)=x^2 at x=3 has rel err < 1e-9") {
    ParamStore ps;
    ps.create("x", Tensor{{1}, {3.0}});
    GradCheckOptions opt;
    opt.h = 1e-5;
    opt.tol = 1e-9;
    auto rep = grad_check(
        [](Tape& t, ParamStore& p) {
            Var x = t.param(p, "x");
            return sum_all(mul(x, x));
        },
        ps, opt);
    CHECK(rep.pass);
    CHECK(rep.worst_rel_err < 1e-9);
}

TEST_CASE("forward determinism: identical inputs give bit-identical outputs") {
    Rng rng(99);
    Tensor X = randt({3, 4}, rng), W = randt({2, 4, 3}, rng), B = randt({2}, rng);
    auto run = [&]() {
        Tape t;
        Var y = conv1d_same(t.leaf(X), t.leaf(W), t.leaf(B));
        return t.value(softmax_last(y)).data;
    };
    CHECK(run() == run());
}

TEST_CASE("grad_check passes for every primitive op (5 seeds)") {
    check_op_grads("add/sub/mul chain",
        [](ParamStore& ps, Rng& rng, int) {
            ps.create("a", randt({3, 4}, rng));
            ps.create("b", randt({3, 4}, rng));
        },
        [](Tape& t, ParamStore& ps) {
            Var a = t.param(ps, "a"), b = t.param(ps, "b");
            return weighted_sum(t, mul(add(a, b), sub(a, b)), 5);
        });

    check_op_grads("scalar ops",
        [](ParamStore& ps, Rng& rng, int) {
            ps.create("a", randt_away({2, 5}, rng, 0.3));
            ps.create("s", randt_away({}, rng, 0.4));
        },
        [](Tape& t, ParamStore& ps) {
            Var a = t.param(ps, "a");
            Var s = t.param(ps, "s");
            Var y = mul_scalar_var(scalar_mul(a, 0.7), s);
            return weighted_sum(t, reciprocal(add(mul(y, y), t.leaf(Tensor::full({2, 5}, 0.5)))), 6);
        });

    check_op_grads("exp/log/neg/clamp_min",
        [](ParamStore& ps, Rng& rng, int) { ps.create("a", randt({6}, rng, 0.4, 1.6)); },
        [](Tape& t, ParamStore& ps) {
            Var a = t.param(ps, "a");
            return weighted_sum(t, clamp_min(log_op(exp_op(neg(a))), -1.2), 7);
        });

    check_op_grads("relu",
        [](ParamStore& ps, Rng& rng, int) { ps.create("a", randt_away({4, 4}, rng)); },
        [](Tape& t, ParamStore& ps) { return weighted_sum(t, relu(t.param(ps, "a")), 8); });

    check_op_grads("reductions and reshaping",
        [](ParamStore& ps, Rng& rng, int s) { ps.create("a", randt({2 + s, 6}, rng)); },
        [](Tape& t, ParamStore& ps) {
            Var a = t.param(ps, "a");
            Var m = mean_rows(a); // [6]
            Var r = reshape(a, {t.value(a).dim(0) * 2, 3});
            return add(weighted_sum(t, m, 9), weighted_sum(t, transpose2(r), 10));
        });

    check_op_grads("mean_trailing",
        [](ParamStore& ps, Rng& rng, int) { ps.create("a", randt({2, 3, 4, 2}, rng)); },
        [](Tape& t, ParamStore& ps) {
            return weighted_sum(t, mean_trailing(t.param(ps, "a")), 11);
        });

    check_op_grads("permute3 / bmm",
        [](ParamStore& ps, Rng& rng, int) {
            ps.create("a", randt({2, 3, 4}, rng));
            ps.create("b", randt({2, 4, 3}, rng));
        },
        [](Tape& t, ParamStore& ps) {
            Var a = permute3(t.param(ps, "a"), 0, 1, 2);
            Var b = t.param(ps, "b");
            return weighted_sum(t, permute3(bmm(bmm(a, b), a), 1, 0, 2), 12);
        });

    check_op_grads("concat_cols / stack_rows / diag_sum",
        [](ParamStore& ps, Rng& rng, int) {
            ps.create("a", randt({3, 2}, rng));
            ps.create("b", randt({3, 4}, rng));
            ps.create("r1", randt({5}, rng));
            ps.create("r2", randt({5}, rng));
        },
        [](Tape& t, ParamStore& ps) {
            Var c = concat_cols(t.param(ps, "a"), t.param(ps, "b")); // [3,6]
            Var s = stack_rows({t.param(ps, "r1"), t.param(ps, "r2")});
            Var sq = matmul(c, transpose2(c)); // [3,3]
            return add(diag_sum(sq), weighted_sum(t, s, 13));
        });

    check_op_grads("repeat_to_length",
        [](ParamStore& ps, Rng& rng, int) { ps.create("a", randt({3, 4}, rng)); },
        [](Tape& t, ParamStore& ps) {
            return weighted_sum(t, repeat_to_length(t.param(ps, "a"), 2, 9), 14);
        });

    check_op_grads("add_rowvec / add_bcast_last2",
        [](ParamStore& ps, Rng& rng, int) {
            ps.create("x", randt({4, 3}, rng));
            ps.create("b", randt({3}, rng));
            ps.create("h", randt({2, 3, 3}, rng));
            ps.create("m", randt({3, 3}, rng));
        },
        [](Tape& t, ParamStore& ps) {
            Var y = add_rowvec(t.param(ps, "x"), t.param(ps, "b"));
            Var z = add_bcast_last2(t.param(ps, "h"), t.param(ps, "m"));
            return add(weighted_sum(t, y, 15), weighted_sum(t, z, 16));
        });

    check_op_grads("matmul",
        [](ParamStore& ps, Rng& rng, int s) {
            ps.create("a", randt({2 + s % 3, 4}, rng));
            ps.create("b", randt({4, 3}, rng));
        },
        [](Tape& t, ParamStore& ps) {
            return weighted_sum(t, matmul(t.param(ps, "a"), t.param(ps, "b")), 17);
        });

    check_op_grads("softmax / log_softmax",
        [](ParamStore& ps, Rng& rng, int) { ps.create("a", randt({3, 5}, rng, -2.0, 2.0)); },
        [](Tape& t, ParamStore& ps) {
            Var a = t.param(ps, "a");
            return add(weighted_sum(t, softmax_last(a), 18),
                       weighted_sum(t, log_softmax_last(a), 19));
        });

    check_op_grads("layer_norm",
        [](ParamStore& ps, Rng& rng, int) {
            ps.create("x", randt({4, 6}, rng));
            ps.create("g", randt({6}, rng, 0.5, 1.5));
            ps.create("b", randt({6}, rng));
        },
        [](Tape& t, ParamStore& ps) {
            return weighted_sum(
                t, layer_norm(t.param(ps, "x"), t.param(ps, "g"), t.param(ps, "b")), 20);
        });

    check_op_grads("batch_norm train mode",
        [](ParamStore& ps, Rng& rng, int) {
            ps.create("x", randt({6, 3}, rng));
            ps.create("g", randt({3}, rng, 0.5, 1.5));
            ps.create("b", randt({3}, rng));
            ps.create("rm", Tensor::zeros({3}), false);
            ps.create("rv", Tensor::full({3}, 1.0), false);
        },
        [](Tape& t, ParamStore& ps) {
            return weighted_sum(t,
                                batch_norm_seq(t.param(ps, "x"), t.param(ps, "g"),
                                               t.param(ps, "b"), ps, "rm", "rv", true),
                                21);
        });

    check_op_grads("batch_norm eval mode",
        [](ParamStore& ps, Rng& rng, int) {
            ps.create("x", randt({5, 3}, rng));
            ps.create("g", randt({3}, rng, 0.5, 1.5));
            ps.create("b", randt({3}, rng));
            ps.create("rm", randt({3}, rng, -0.2, 0.2), false);
            ps.create("rv", randt({3}, rng, 0.5, 1.5), false);
        },
        [](Tape& t, ParamStore& ps) {
            return weighted_sum(t,
                                batch_norm_seq(t.param(ps, "x"), t.param(ps, "g"),
                                               t.param(ps, "b"), ps, "rm", "rv", false),
                                22);
        });

    check_op_grads("l2norm_rows",
        [](ParamStore& ps, Rng& rng, int) { ps.create("x", randt_away({3, 4}, rng, 0.3)); },
        [](Tape& t, ParamStore& ps) {
            return weighted_sum(t, l2norm_rows(t.param(ps, "x")), 23);
        });

    check_op_grads("embedding / cross_entropy",
        [](ParamStore& ps, Rng& rng, int) { ps.create("table", randt({6, 4}, rng)); },
        [](Tape& t, ParamStore& ps) {
            Var e = embedding(t.param(ps, "table"), {1, 4, 2, 1}); // [4,4]
            return cross_entropy(e, {0, 3, -1, 2}, -1);
        });

    check_op_grads("conv1d + maxpool1d",
        [](ParamStore& ps, Rng& rng, int s) {
            ps.create("x", randt({6 + s, 3}, rng));
            ps.create("w", randt({2, 3, 3}, rng));
            ps.create("b", randt({2}, rng));
        },
        [](Tape& t, ParamStore& ps) {
            Var y = conv1d_same(t.param(ps, "x"), t.param(ps, "w"), t.param(ps, "b"));
            return weighted_sum(t, maxpool1d2(y), 24);
        });

    check_op_grads("conv2d + maxpool2d",
        [](ParamStore& ps, Rng& rng, int) {
            ps.create("x", randt({2, 2, 6, 6}, rng));
            ps.create("w", randt({3, 2, 3, 3}, rng));
            ps.create("b", randt({3}, rng));
        },
        [](Tape& t, ParamStore& ps) {
            Var y = conv2d_same(t.param(ps, "x"), t.param(ps, "w"), t.param(ps, "b"));
            return weighted_sum(t, maxpool2d2(y), 25);
        });

    check_op_grads("conv3d + maxpool3d",
        [](ParamStore& ps, Rng& rng, int) {
            ps.create("x", randt({1, 1, 4, 4, 4}, rng));
            ps.create("w", randt({2, 1, 3, 3, 3}, rng));
            ps.create("b", randt({2}, rng));
        },
        [](Tape& t, ParamStore& ps) {
            Var y = conv3d_same(t.param(ps, "x"), t.param(ps, "w"), t.param(ps, "b"));
            return weighted_sum(t, maxpool3d2(y), 26);
        });
}

TEST_CASE("batch norm eval mode is batch-size invariant per sample") {
    ParamStore ps;
    Rng rng(5);
    ps.create("g", Tensor::full({3}, 1.2));
    ps.create("b", Tensor::full({3}, -0.1));
    ps.create("rm", randt({3}, rng, -0.5, 0.5), false);
    ps.create("rv", randt({3}, rng, 0.5, 2.0), false);
    Tensor row = randt({1, 3}, rng);
    Tensor big = Tensor::zeros({7, 3});
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 3; ++j) big.data[i * 3 + j] = (i == 4) ? row.data[j] : rng.uniform();
    Tape t;
    Var y1 = batch_norm_seq(t.leaf(row), t.param(ps, "g"), t.param(ps, "b"), ps, "rm", "rv", false);
    Var y2 = batch_norm_seq(t.leaf(big), t.param(ps, "g"), t.param(ps, "b"), ps, "rm", "rv", false);
    for (int j = 0; j < 3; ++j)
        CHECK(t.value(y1).data[j] == doctest::Approx(t.value(y2).data[4 * 3 + j]).epsilon(1e-12));
}

TEST_CASE("checkpoint container round-trips bit-exactly") {
    Rng rng(77);
    std::map<std::string, Tensor> entries;
    entries.emplace("alpha.w", randt({3, 5}, rng));
    entries.emplace("beta.b", randt({7}, rng));
    entries.emplace("scalar", Tensor::scalar(0.1 + rng.uniform()));
    std::string path = "/tmp/dveslt_test_ckpt.bin";
    save_checkpoint(path, entries);
    auto loaded = load_checkpoint(path);
    REQUIRE(loaded.size() == entries.size());
    for (auto& [k, v] : entries) {
        REQUIRE(loaded.count(k) == 1);
        CHECK(loaded.at(k).shape == v.shape);
        CHECK(loaded.at(k).data == v.data); // bit-exact
    }
    CHECK_THROWS_AS(load_checkpoint("/tmp/definitely_missing_ckpt.bin"), Error);
}

TEST_CASE("config parse, validation and fingerprint") {
    TrainConfig def;
    def.validate();
    std::string text = def.canonical();
    TrainConfig round = TrainConfig::parse(text);
    CHECK(round.fingerprint() == def.fingerprint());

    TrainConfig other = def;
    other.data.seed = 2;
    CHECK(other.fingerprint() != def.fingerprint());

    CHECK_THROWS_AS(TrainConfig::parse("[data]\nvocab_size = 1\n"), Error);
    CHECK_THROWS_AS(TrainConfig::parse("[data]\nnot_a_key = 3\n"), Error);
    CHECK_THROWS_AS(TrainConfig::parse("[model]\nfusion = blend\n"), Error);
}
