#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "core/config.hpp"
#include "core/rng.hpp"
#include "data/datagen.hpp"

using namespace dveslt;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.data.vocab_size = 6;
    cfg.data.train_size = 12;
    cfg.data.dev_size = 4;
    cfg.data.test_size = 4;
    return cfg;
}

// time-pooled distance: blind to frame order by construction
double pooled_l2(const Tensor& a, const Tensor& b) {
    int64_t R = a.dim(1);
    auto mean_img = [&](const Tensor& t) {
        std::vector<double> m(static_cast<size_t>(R * R), 0.0);
        for (int64_t f = 0; f < t.dim(0); ++f)
            for (int64_t i = 0; i < R * R; ++i) m[static_cast<size_t>(i)] += t.data[f * R * R + i];
        for (auto& v : m) v /= static_cast<double>(t.dim(0));
        return m;
    };
    auto ma = mean_img(a), mb = mean_img(b);
    double s = 0.0;
    for (size_t i = 0; i < ma.size(); ++i) s += (ma[i] - mb[i]) * (ma[i] - mb[i]);
    return std::sqrt(s);
}

// temporally aligned distance over the overlapping prefix
double framewise_l2(const Tensor& a, const Tensor& b) {
    int64_t T = std::min(a.dim(0), b.dim(0));
    int64_t px = a.dim(1) * a.dim(2);
    double s = 0.0;
    for (int64_t t = 0; t < T; ++t)
        for (int64_t i = 0; i < px; ++i) {
            double d = a.data[t * px + i] - b.data[t * px + i];
            s += d * d;
        }
    return s / static_cast<double>(T * px);
}

} // namespace

TEST_CASE("lexicon is deterministic and seed-sensitive") {
    Lexicon a = build_lexicon(20, 7);
    Lexicon b = build_lexicon(20, 7);
    REQUIRE(a.words.size() == 20);
    REQUIRE(a.primitives.size() == 20);
    for (size_t i = 0; i < a.words.size(); ++i) {
        CHECK(a.words[i] == b.words[i]);
        CHECK(a.primitives[i].shape_id == b.primitives[i].shape_id);
        CHECK(a.primitives[i].size == b.primitives[i].size);
        for (int k = 0; k < 3; ++k) {
            CHECK(a.primitives[i].cx[k] == b.primitives[i].cx[k]);
            CHECK(a.primitives[i].cy[k] == b.primitives[i].cy[k]);
        }
    }
    Lexicon c = build_lexicon(20, 8);
    bool any_diff = false;
    for (size_t i = 0; i < a.words.size(); ++i)
        if (a.primitives[i].cx[0] != c.primitives[i].cx[0]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("lexicon primitives are pairwise distinct and durations valid") {
    Lexicon lex = build_lexicon(2, 1);
    REQUIRE(lex.words.size() == 2);
    bool distinct = lex.primitives[0].shape_id != lex.primitives[1].shape_id ||
                    lex.primitives[0].cx[0] != lex.primitives[1].cx[0] ||
                    lex.primitives[0].size != lex.primitives[1].size;
    CHECK(distinct);
    Lexicon big = build_lexicon(40, 3);
    std::set<std::pair<double, double>> seen;
    for (const auto& p : big.primitives) {
        CHECK(p.base_duration >= 4);
        CHECK(seen.insert({p.size, p.cx[0]}).second);
    }
    CHECK_THROWS_WITH_AS(build_lexicon(1, 0), doctest::Contains("vocab_size"), Error);
}

TEST_CASE("render_sentence duration arithmetic and determinism") {
    Lexicon lex = build_lexicon(4, 2);
    for (auto& p : lex.primitives) p.base_duration = 8;
    VideoSample s = render_sentence(lex, {"w0", "w1"}, 5, 0.0, 36);
    CHECK(s.frames.shape == Shape{16, 36, 36});
    for (double v : s.frames.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    VideoSample s2 = render_sentence(lex, {"w0", "w1"}, 5, 0.0, 36);
    CHECK(s.frames.data == s2.frames.data);

    // jitter draws are per word, so T stays the sum of realized durations
    VideoSample j = render_sentence(lex, {"w0", "w1", "w2"}, 9, 0.2, 36);
    CHECK(j.frames.dim(0) >= 3 * 4);
    CHECK_THROWS_WITH_AS(render_sentence(lex, {"w0", "nope"}, 1, 0.0, 36),
                         doctest::Contains("nope"), Error);
    CHECK_THROWS_AS(render_sentence(lex, {}, 1, 0.0, 36), Error);
}

TEST_CASE("distinct words render distinguishably") {
    Lexicon lex = build_lexicon(8, 11);
    for (size_t i = 0; i + 1 < lex.words.size(); ++i) {
        VideoSample a = render_sentence(lex, {lex.words[i]}, 3, 0.0, 36);
        VideoSample b = render_sentence(lex, {lex.words[i + 1]}, 3, 0.0, 36);
        CHECK(framewise_l2(a.frames, b.frames) > 0.0);
    }
    // reversed-direction partners share glyph, path and duration, so their
    // time-pooled images coincide while the frame sequences differ
    VideoSample f = render_sentence(lex, {lex.words[0]}, 3, 0.0, 36);
    VideoSample r = render_sentence(lex, {lex.words[1]}, 3, 0.0, 36);
    CHECK(pooled_l2(f.frames, r.frames) < 1e-9);
    CHECK(framewise_l2(f.frames, r.frames) > 1e-4);
}

TEST_CASE("nearest-neighbor classifier separates the lexicon") {
    Lexicon lex = build_lexicon(20, 5);
    const int renders = 10;
    std::vector<Tensor> clips;
    std::vector<int> labels;
    for (size_t w = 0; w < lex.words.size(); ++w)
        for (int r = 0; r < renders; ++r) {
            clips.push_back(render_sentence(lex, {lex.words[w]},
                                            Rng::derive(99, "nn", w, static_cast<uint64_t>(r)),
                                            0.2, 36)
                                .frames);
            labels.push_back(static_cast<int>(w));
        }
    auto nn_acc = [&](auto&& dist, auto&& label_of) {
        int correct = 0;
        for (size_t i = 0; i < clips.size(); ++i) {
            double best = 1e300;
            int best_lbl = -1;
            for (size_t k = 0; k < clips.size(); ++k) {
                if (k == i) continue;
                double d = dist(clips[i], clips[k]);
                if (d < best) {
                    best = d;
                    best_lbl = label_of(labels[k]);
                }
            }
            if (best_lbl == label_of(labels[i])) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(clips.size());
    };
    auto word = [](int l) { return l; };
    auto pair_group = [](int l) { return l / 2; };
    // the aligned distance separates every word including reversed partners
    CHECK(nn_acc(framewise_l2, word) > 0.9);
    // the order-blind distance still separates pair groups but cannot fully
    // separate words, so part of the vocabulary is carried by motion alone
    CHECK(nn_acc(pooled_l2, pair_group) > 0.9);
    CHECK(nn_acc(pooled_l2, word) < 0.9);
}

TEST_CASE("generate_corpus respects sizes, lengths, determinism and targets") {
    TrainConfig cfg = tiny_config();
    Corpus c1 = generate_corpus(cfg);
    CHECK(c1.train.size() == 12);
    CHECK(c1.dev.size() == 4);
    CHECK(c1.test.size() == 4);
    std::set<std::string> ids;
    auto scan = [&](const std::vector<VideoSample>& split) {
        for (const auto& s : split) {
            CHECK(ids.insert(s.id).second); // disjoint ids
            CHECK(s.tokens.size() >= 3);
            CHECK(s.tokens.size() <= 6);
            CHECK(s.target.size() == 2 * s.tokens.size());
            for (size_t k = 0; k < s.tokens.size(); ++k) {
                int wi = c1.lexicon.index_of(s.tokens[k]);
                REQUIRE(wi >= 0);
                CHECK(s.target[2 * k] == (wi % 2 == 0 ? "the" : "a"));
                CHECK(s.target[2 * k + 1] == s.tokens[k]);
            }
        }
    };
    scan(c1.train);
    scan(c1.dev);
    scan(c1.test);

    Corpus c2 = generate_corpus(cfg);
    for (size_t i = 0; i < c1.train.size(); ++i) {
        CHECK(c1.train[i].id == c2.train[i].id);
        CHECK(c1.train[i].tokens == c2.train[i].tokens);
        CHECK(c1.train[i].frames.data == c2.train[i].frames.data);
    }
}

TEST_CASE("augment with p=0 is the identity") {
    Lexicon lex = build_lexicon(3, 4);
    Tensor f = render_sentence(lex, {"w0", "w2"}, 6, 0.1, 36).frames;
    Tensor g = augment(f, 123, 0.0, 30.0, 0.2, 0.045);
    CHECK(f.data == g.data);
}

TEST_CASE("augment with p=1 changes pixels, stays in range, deterministic") {
    Lexicon lex = build_lexicon(3, 4);
    Tensor f = render_sentence(lex, {"w1"}, 6, 0.0, 36).frames;
    Tensor g = augment(f, 77, 1.0, 30.0, 0.2, 0.045);
    CHECK(g.shape == f.shape);
    CHECK(g.data != f.data);
    for (double v : g.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    Tensor g2 = augment(f, 77, 1.0, 30.0, 0.2, 0.045);
    CHECK(g.data == g2.data);
}

TEST_CASE("360-degree rotation matches the input within resample tolerance") {
    Lexicon lex = build_lexicon(3, 4);
    Tensor f = render_sentence(lex, {"w0"}, 2, 0.0, 36).frames;
    Tensor r = affine_transform(f, 360.0, 1.0, 0.0, 0.0);
    for (size_t i = 0; i < f.data.size(); ++i)
        CHECK(std::abs(f.data[i] - r.data[i]) < 1e-6);
}

TEST_CASE("affine shift moves mass in the expected direction") {
    Tensor f = Tensor::zeros({1, 9, 9});
    f.data[static_cast<size_t>(4 * 9 + 4)] = 1.0; // single bright pixel at center
    Tensor s = affine_transform(f, 0.0, 1.0, 2.0, 0.0);
    CHECK(s.data[static_cast<size_t>(4 * 9 + 6)] == doctest::Approx(1.0));
    CHECK(s.data[static_cast<size_t>(4 * 9 + 4)] == doctest::Approx(0.0));
    Tensor up = affine_transform(f, 0.0, 1.0, 0.0, -1.0);
    CHECK(up.data[static_cast<size_t>(3 * 9 + 4)] == doctest::Approx(1.0));
}

TEST_CASE("crops cut the requested region") {
    Tensor f = Tensor::zeros({2, 6, 6});
    for (int64_t t = 0; t < 2; ++t)
        for (int64_t y = 0; y < 6; ++y)
            for (int64_t x = 0; x < 6; ++x)
                f.data[(t * 6 + y) * 6 + x] = static_cast<double>(100 * t + 10 * y + x);
    Tensor c = center_crop(f, 4);
    CHECK(c.shape == Shape{2, 4, 4});
    CHECK(c.data[0] == 11.0); // offset (1,1)
    Tensor r = random_crop(f, 4, 42);
    CHECK(r.shape == Shape{2, 4, 4});
    Tensor r2 = random_crop(f, 4, 42);
    CHECK(r.data == r2.data);
    CHECK_THROWS_AS(center_crop(f, 7), Error);
}

TEST_CASE("corpus round-trips through the manifest plus frame blobs") {
    TrainConfig cfg = tiny_config();
    Corpus c = generate_corpus(cfg);
    std::string dir = (fs::temp_directory_path() / "dveslt_datagen_test").string();
    fs::remove_all(dir);
    save_corpus(c, cfg, dir);
    Corpus r = load_corpus(dir);
    CHECK(r.seed == c.seed);
    CHECK(r.target_rule == c.target_rule);
    REQUIRE(r.lexicon.words == c.lexicon.words);
    REQUIRE(r.train.size() == c.train.size());
    REQUIRE(r.dev.size() == c.dev.size());
    REQUIRE(r.test.size() == c.test.size());
    for (size_t i = 0; i < c.train.size(); ++i) {
        CHECK(r.train[i].id == c.train[i].id);
        CHECK(r.train[i].tokens == c.train[i].tokens);
        CHECK(r.train[i].target == c.train[i].target);
        CHECK(r.train[i].frames.shape == c.train[i].frames.shape);
        CHECK(r.train[i].frames.data == c.train[i].frames.data);
    }
    fs::remove_all(dir);
}
