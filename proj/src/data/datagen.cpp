#include "datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <tuple>

#include <json.hpp>

#include "core/checkpoint.hpp"
#include "core/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dveslt {

namespace {

constexpr double kPi = 3.14159265358979323846;

// soft-edged glyph intensity at offset (dx,dy) pixels from the center
double glyph_intensity(int shape_id, double r, double dx, double dy) {
    const double edge = 1.2; // px anti-aliasing band
    auto soft = [&](double signed_dist) { return std::clamp(signed_dist / edge, 0.0, 1.0); };
    double d;
    switch (shape_id) {
        case 0: // disc
            d = std::sqrt(dx * dx + dy * dy);
            return soft(r - d);
        case 1: { // ring
            d = std::sqrt(dx * dx + dy * dy);
            return soft(0.45 * r - std::abs(d - 0.8 * r));
        }
        case 2: // square
            d = std::max(std::abs(dx), std::abs(dy));
            return soft(r - d);
        case 3: { // cross
            double arm = 0.4 * r;
            double in_h = std::min(r - std::abs(dx), arm - std::abs(dy));
            double in_v = std::min(arm - std::abs(dx), r - std::abs(dy));
            return soft(std::max(in_h, in_v));
        }
        default: // diamond
            d = std::abs(dx) + std::abs(dy);
            return soft(r - d);
    }
}

struct Pt {
    double x, y;
};

Pt bezier(const MotionPrimitive& p, double t) {
    double u = 1.0 - t;
    return {u * u * p.cx[0] + 2 * u * t * p.cx[1] + t * t * p.cx[2],
            u * u * p.cy[0] + 2 * u * t * p.cy[1] + t * t * p.cy[2]};
}

void render_word(const MotionPrimitive& prim, int64_t dur, int64_t R, double* out) {
    double r = prim.size * static_cast<double>(R);
    for (int64_t f = 0; f < dur; ++f) {
        double t = dur > 1 ? static_cast<double>(f) / static_cast<double>(dur - 1) : 0.0;
        Pt c = bezier(prim, t);
        double cx = c.x * static_cast<double>(R - 1);
        double cy = c.y * static_cast<double>(R - 1);
        double* frame = out + f * R * R;
        // only touch pixels near the glyph
        int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(cx - r - 2));
        int64_t x1 = std::min(R - 1, static_cast<int64_t>(cx + r + 2));
        int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(cy - r - 2));
        int64_t y1 = std::min(R - 1, static_cast<int64_t>(cy + r + 2));
        for (int64_t y = y0; y <= y1; ++y)
            for (int64_t x = x0; x <= x1; ++x) {
                double v = glyph_intensity(prim.shape_id, r, static_cast<double>(x) - cx,
                                           static_cast<double>(y) - cy);
                if (v > frame[y * R + x]) frame[y * R + x] = v;
            }
    }
}

// Bakes seeded visual nuisance into a rendered clip. Everything is drawn
// from one derived stream, so the same (seed, noise) pair always produces
// the same pixels and noise=0 leaves the clean render untouched.
void apply_nuisance(Tensor& frames, uint64_t seed, double noise) {
    if (noise <= 0.0) return;
    int64_t T = frames.dim(0), R = frames.dim(1);
    Rng rng(Rng::derive(seed, "nuisance"));

    // per-sample contrast jitter on the glyph signal
    double contrast = 1.0 - noise * rng.uniform(0.0, 0.5);
    for (auto& v : frames.data) v *= contrast;

    // one distractor glyph sweeping a straight line across the whole clip
    MotionPrimitive d;
    d.shape_id = static_cast<int>(rng.uniform_int(0, 4));
    d.size = rng.uniform(0.06, 0.10);
    d.cx[0] = rng.uniform(0.1, 0.9);
    d.cy[0] = rng.uniform(0.1, 0.9);
    d.cx[2] = rng.uniform(0.1, 0.9);
    d.cy[2] = rng.uniform(0.1, 0.9);
    d.cx[1] = 0.5 * (d.cx[0] + d.cx[2]);
    d.cy[1] = 0.5 * (d.cy[0] + d.cy[2]);
    Tensor overlay = Tensor::zeros(frames.shape);
    render_word(d, T, R, overlay.data.data());
    double d_gain = 0.8 * noise;
    for (size_t i = 0; i < frames.data.size(); ++i)
        frames.data[i] = std::max(frames.data[i], d_gain * overlay.data[i]);

    // drifting low-frequency background wave
    double amp = 0.35 * noise;
    double kx = rng.uniform(0.5, 1.5) * 2.0 * kPi / static_cast<double>(R);
    double ky = rng.uniform(0.5, 1.5) * 2.0 * kPi / static_cast<double>(R);
    double phase = rng.uniform(0.0, 2.0 * kPi);
    double drift = rng.uniform(-0.3, 0.3);
    // per-pixel noise on top
    double sigma = 0.18 * noise;
    for (int64_t t = 0; t < T; ++t) {
        double ph = phase + drift * static_cast<double>(t);
        double* f = &frames.data[static_cast<size_t>(t * R * R)];
        for (int64_t y = 0; y < R; ++y)
            for (int64_t x = 0; x < R; ++x) {
                double bg = amp * 0.5 *
                            (1.0 + std::sin(kx * static_cast<double>(x) +
                                            ky * static_cast<double>(y) + ph));
                double v = f[y * R + x] + bg + sigma * rng.normal();
                f[y * R + x] = std::clamp(v, 0.0, 1.0);
            }
    }
}

int64_t realized_duration(const MotionPrimitive& prim, Rng& rng, double jitter) {
    double factor = 1.0 + rng.uniform(-jitter, jitter);
    int64_t d = static_cast<int64_t>(std::llround(static_cast<double>(prim.base_duration) * factor));
    return std::max<int64_t>(4, d);
}

} // namespace

const std::vector<VideoSample>& Corpus::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "dev") return dev;
    if (name == "test") return test;
    fail("unknown split '" + name + "'");
}

Lexicon build_lexicon(int64_t vocab_size, uint64_t seed) {
    if (vocab_size < 2) fail("build_lexicon: vocab_size must be >= 2, got " +
                             std::to_string(vocab_size));
    Rng rng(Rng::derive(seed, "lexicon"));
    Lexicon lex;
    std::set<std::tuple<int, int64_t, std::vector<int64_t>>> seen;
    for (int64_t i = 0; i < vocab_size; ++i) {
        MotionPrimitive p;
        if (i % 2 == 1) {
            // each odd word shares the even predecessor's glyph and path and
            // differs only in traversal direction, so appearance alone cannot
            // separate the pair and motion carries part of the vocabulary
            p = lex.primitives.back();
            std::swap(p.cx[0], p.cx[2]);
            std::swap(p.cy[0], p.cy[2]);
            lex.words.push_back("w" + std::to_string(i));
            lex.primitives.push_back(p);
            continue;
        }
        while (true) {
            p.shape_id = static_cast<int>(rng.uniform_int(0, 4));
            p.size = rng.uniform(0.10, 0.16);
            for (int k = 0; k < 3; ++k) {
                p.cx[k] = rng.uniform(0.15, 0.85);
                p.cy[k] = rng.uniform(0.15, 0.85);
            }
            p.base_duration = rng.uniform_int(8, 14);
            // endpoints must be well separated or the reversed partner would
            // be near-identical
            if (std::abs(p.cx[0] - p.cx[2]) + std::abs(p.cy[0] - p.cy[2]) < 0.25) continue;
            // quantized tuple guarantees pairwise-distinct primitives
            std::vector<int64_t> q;
            q.push_back(static_cast<int64_t>(std::llround(p.size * 1e6)));
            for (int k = 0; k < 3; ++k) {
                q.push_back(static_cast<int64_t>(std::llround(p.cx[k] * 1e6)));
                q.push_back(static_cast<int64_t>(std::llround(p.cy[k] * 1e6)));
            }
            if (seen.insert({p.shape_id, p.base_duration, q}).second) break;
        }
        lex.words.push_back("w" + std::to_string(i));
        lex.primitives.push_back(p);
    }
    return lex;
}

VideoSample render_sentence(const Lexicon& lex, const std::vector<std::string>& tokens,
                            uint64_t seed, double jitter, int64_t render_size, double noise) {
    if (tokens.empty()) fail("render_sentence: empty token list");
    if (jitter < 0.0 || jitter >= 0.5) fail("render_sentence: jitter must be in [0,0.5)");
    if (noise < 0.0 || noise > 1.0) fail("render_sentence: noise must be in [0,1]");
    std::vector<int> idx;
    std::vector<int64_t> durs;
    int64_t total = 0;
    for (size_t k = 0; k < tokens.size(); ++k) {
        int wi = lex.index_of(tokens[k]);
        if (wi < 0) fail("render_sentence: unknown token '" + tokens[k] + "'");
        idx.push_back(wi);
        Rng rng(Rng::derive(seed, "word", k));
        durs.push_back(realized_duration(lex.primitives[static_cast<size_t>(wi)], rng, jitter));
        total += durs.back();
    }
    VideoSample s;
    s.tokens = tokens;
    s.frames = Tensor::zeros({total, render_size, render_size});
    int64_t off = 0;
    for (size_t k = 0; k < idx.size(); ++k) {
        render_word(lex.primitives[static_cast<size_t>(idx[k])], durs[k], render_size,
                    &s.frames.data[off * render_size * render_size]);
        off += durs[k];
    }
    return s;
}

std::vector<std::string> make_target(const Lexicon& lex, const std::vector<std::string>& tokens) {
    std::vector<std::string> out;
    for (const auto& w : tokens) {
        int wi = lex.index_of(w);
        if (wi < 0) fail("make_target: unknown token '" + w + "'");
        out.push_back(wi % 2 == 0 ? "the" : "a");
        out.push_back(w);
    }
    return out;
}

Corpus generate_corpus(const TrainConfig& cfg) {
    cfg.validate();
    Corpus corpus;
    corpus.seed = cfg.data.seed;
    corpus.target_rule = "article-by-lexicon-index-parity";
    corpus.lexicon = build_lexicon(cfg.data.vocab_size, cfg.data.seed);
    // lexicon durations come from the configured range
    {
        Rng rng(Rng::derive(cfg.data.seed, "durations"));
        for (size_t i = 0; i < corpus.lexicon.primitives.size(); ++i) {
            auto& p = corpus.lexicon.primitives[i];
            // reversed-direction partners share the duration so clip length
            // is not a cue for telling them apart
            p.base_duration = i % 2 == 1
                                  ? corpus.lexicon.primitives[i - 1].base_duration
                                  : rng.uniform_int(cfg.data.duration_min, cfg.data.duration_max);
        }
    }
    auto gen_split = [&](const std::string& name, int64_t n, std::vector<VideoSample>& out) {
        for (int64_t i = 0; i < n; ++i) {
            Rng rng(Rng::derive(cfg.data.seed, "sent:" + name, static_cast<uint64_t>(i)));
            int64_t len = rng.uniform_int(cfg.data.sentence_min, cfg.data.sentence_max);
            std::vector<std::string> tokens;
            for (int64_t k = 0; k < len; ++k)
                tokens.push_back(corpus.lexicon.words[static_cast<size_t>(
                    rng.uniform_int(0, cfg.data.vocab_size - 1))]);
            uint64_t rseed = Rng::derive(cfg.data.seed, "render:" + name, static_cast<uint64_t>(i));
            VideoSample s = render_sentence(corpus.lexicon, tokens, rseed,
                                            cfg.data.duration_jitter, cfg.data.render_size);
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%s-%04lld", name.c_str(),
                          static_cast<long long>(i));
            s.id = buf;
            s.target = make_target(corpus.lexicon, tokens);
            out.push_back(std::move(s));
        }
    };
    gen_split("train", cfg.data.train_size, corpus.train);
    gen_split("dev", cfg.data.dev_size, corpus.dev);
    gen_split("test", cfg.data.test_size, corpus.test);
    return corpus;
}

Tensor affine_transform(const Tensor& frames, double angle_deg, double scale, double dx_px,
                        double dy_px) {
    if (frames.rank() != 3) fail("affine_transform: expected [T,H,W]");
    int64_t T = frames.dim(0), H = frames.dim(1), W = frames.dim(2);
    if (angle_deg == 0.0 && scale == 1.0 && dx_px == 0.0 && dy_px == 0.0) return frames;
    double th = angle_deg * kPi / 180.0;
    double ca = std::cos(th), sa = std::sin(th);
    double cx = (static_cast<double>(W) - 1.0) / 2.0;
    double cy = (static_cast<double>(H) - 1.0) / 2.0;
    Tensor out = Tensor::zeros(frames.shape);
    double inv_s = 1.0 / scale;
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            // inverse map: undo shift, rotation, scale about the center
            double px = static_cast<double>(x) - dx_px - cx;
            double py = static_cast<double>(y) - dy_px - cy;
            double sx = inv_s * (ca * px + sa * py) + cx;
            double sy = inv_s * (-sa * px + ca * py) + cy;
            int64_t x0 = static_cast<int64_t>(std::floor(sx));
            int64_t y0 = static_cast<int64_t>(std::floor(sy));
            double fx = sx - static_cast<double>(x0);
            double fy = sy - static_cast<double>(y0);
            if (x0 < -1 || x0 >= W || y0 < -1 || y0 >= H) continue;
            auto px_at = [&](const double* frame, int64_t yy, int64_t xx) -> double {
                if (xx < 0 || xx >= W || yy < 0 || yy >= H) return 0.0;
                return frame[yy * W + xx];
            };
            for (int64_t t = 0; t < T; ++t) {
                const double* f = &frames.data[t * H * W];
                double v = (1 - fx) * (1 - fy) * px_at(f, y0, x0) +
                           fx * (1 - fy) * px_at(f, y0, x0 + 1) +
                           (1 - fx) * fy * px_at(f, y0 + 1, x0) +
                           fx * fy * px_at(f, y0 + 1, x0 + 1);
                out.data[(t * H + y) * W + x] = std::clamp(v, 0.0, 1.0);
            }
        }
    return out;
}

Tensor augment(const Tensor& frames, uint64_t seed, double p, double max_rot_deg,
               double max_scale, double max_shift_frac) {
    if (p < 0.0 || p > 1.0) fail("augment: p must be in [0,1]");
    int64_t W = frames.dim(2);
    Rng rng(Rng::derive(seed, "augment"));
    // fixed draw order: gates and magnitudes always consumed
    double g_rot = rng.uniform(), v_rot = rng.uniform(-max_rot_deg, max_rot_deg);
    double g_scl = rng.uniform(), v_scl = rng.uniform(1.0 - max_scale, 1.0 + max_scale);
    double g_sft = rng.uniform();
    double v_dx = rng.uniform(-max_shift_frac, max_shift_frac) * static_cast<double>(W);
    double v_dy = rng.uniform(-max_shift_frac, max_shift_frac) * static_cast<double>(W);
    double angle = g_rot < p ? v_rot : 0.0;
    double scale = g_scl < p ? v_scl : 1.0;
    double dx = g_sft < p ? v_dx : 0.0;
    double dy = g_sft < p ? v_dy : 0.0;
    return affine_transform(frames, angle, scale, dx, dy);
}

Tensor random_crop(const Tensor& frames, int64_t out_size, uint64_t seed) {
    int64_t T = frames.dim(0), H = frames.dim(1), W = frames.dim(2);
    if (out_size > H || out_size > W) fail("random_crop: crop larger than frame");
    Rng rng(Rng::derive(seed, "crop"));
    int64_t oy = rng.uniform_int(0, H - out_size);
    int64_t ox = rng.uniform_int(0, W - out_size);
    Tensor out = Tensor::zeros({T, out_size, out_size});
    for (int64_t t = 0; t < T; ++t)
        for (int64_t y = 0; y < out_size; ++y)
            std::copy_n(&frames.data[(t * H + y + oy) * W + ox], out_size,
                        &out.data[(t * out_size + y) * out_size]);
    return out;
}

Tensor center_crop(const Tensor& frames, int64_t out_size) {
    int64_t T = frames.dim(0), H = frames.dim(1), W = frames.dim(2);
    if (out_size > H || out_size > W) fail("center_crop: crop larger than frame");
    int64_t oy = (H - out_size) / 2, ox = (W - out_size) / 2;
    Tensor out = Tensor::zeros({T, out_size, out_size});
    for (int64_t t = 0; t < T; ++t)
        for (int64_t y = 0; y < out_size; ++y)
            std::copy_n(&frames.data[(t * H + y + oy) * W + ox], out_size,
                        &out.data[(t * out_size + y) * out_size]);
    return out;
}

void save_corpus(const Corpus& corpus, const TrainConfig& cfg, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream mf(fs::path(dir) / "manifest.jsonl", std::ios::trunc);
    if (!mf) fail("save_corpus: cannot write manifest in '" + dir + "'");
    json lex;
    for (size_t i = 0; i < corpus.lexicon.words.size(); ++i) {
        const auto& p = corpus.lexicon.primitives[i];
        lex.push_back({{"word", corpus.lexicon.words[i]},
                       {"shape", p.shape_id},
                       {"size", p.size},
                       {"cx", {p.cx[0], p.cx[1], p.cx[2]}},
                       {"cy", {p.cy[0], p.cy[1], p.cy[2]}},
                       {"duration", p.base_duration}});
    }
    json header = {{"type", "header"},
                   {"config_fingerprint", cfg.fingerprint()},
                   {"seed", corpus.seed},
                   {"target_rule", corpus.target_rule},
                   {"lexicon", lex}};
    mf << header.dump() << "\n";
    std::map<std::string, Tensor> blobs;
    auto dump_split = [&](const std::string& name, const std::vector<VideoSample>& split) {
        for (const auto& s : split) {
            json rec = {{"type", "sample"},
                        {"id", s.id},
                        {"split", name},
                        {"tokens", s.tokens},
                        {"target", s.target},
                        {"frames", s.frames.dim(0)}};
            mf << rec.dump() << "\n";
            blobs.emplace(s.id, s.frames);
        }
    };
    dump_split("train", corpus.train);
    dump_split("dev", corpus.dev);
    dump_split("test", corpus.test);
    mf.close();
    save_checkpoint((fs::path(dir) / "frames.bin").string(), blobs);
}

Corpus load_corpus(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.jsonl");
    if (!mf) fail("load_corpus: cannot open manifest in '" + dir + "'");
    auto blobs = load_checkpoint((fs::path(dir) / "frames.bin").string());
    Corpus corpus;
    std::string line;
    bool have_header = false;
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line);
        if (rec.at("type") == "header") {
            have_header = true;
            corpus.seed = rec.at("seed").get<uint64_t>();
            corpus.target_rule = rec.at("target_rule").get<std::string>();
            for (const auto& w : rec.at("lexicon")) {
                MotionPrimitive p;
                p.shape_id = w.at("shape").get<int>();
                p.size = w.at("size").get<double>();
                for (int k = 0; k < 3; ++k) {
                    p.cx[k] = w.at("cx")[static_cast<size_t>(k)].get<double>();
                    p.cy[k] = w.at("cy")[static_cast<size_t>(k)].get<double>();
                }
                p.base_duration = w.at("duration").get<int64_t>();
                corpus.lexicon.words.push_back(w.at("word").get<std::string>());
                corpus.lexicon.primitives.push_back(p);
            }
            continue;
        }
        VideoSample s;
        s.id = rec.at("id").get<std::string>();
        s.tokens = rec.at("tokens").get<std::vector<std::string>>();
        s.target = rec.at("target").get<std::vector<std::string>>();
        auto it = blobs.find(s.id);
        if (it == blobs.end()) fail("load_corpus: missing frames for sample '" + s.id + "'");
        s.frames = it->second;
        std::string split = rec.at("split").get<std::string>();
        if (split == "train")
            corpus.train.push_back(std::move(s));
        else if (split == "dev")
            corpus.dev.push_back(std::move(s));
        else if (split == "test")
            corpus.test.push_back(std::move(s));
        else
            fail("load_corpus: unknown split '" + split + "'");
    }
    if (!have_header) fail("load_corpus: manifest has no header line");
    return corpus;
}

} // namespace dveslt
