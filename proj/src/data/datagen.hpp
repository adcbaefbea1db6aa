#pragma once

#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/tensor.hpp"

namespace dveslt {

// Motion primitive backing one lexicon word: a glyph animated along a
// quadratic Bezier trajectory for a base duration.
struct MotionPrimitive {
    int shape_id = 0;   // 0 disc, 1 ring, 2 square, 3 cross, 4 diamond
    double size = 0.12; // glyph radius as a fraction of the frame
    double cx[3] = {0, 0, 0}; // control points in the unit square
    double cy[3] = {0, 0, 0};
    int64_t base_duration = 8; // frames
};

struct Lexicon {
    std::vector<std::string> words;
    std::vector<MotionPrimitive> primitives;

    int index_of(const std::string& w) const {
        for (size_t i = 0; i < words.size(); ++i)
            if (words[i] == w) return static_cast<int>(i);
        return -1;
    }
};

struct VideoSample {
    Tensor frames; // [T, R, R], pixel values in [0,1], R = render size
    std::vector<std::string> tokens; // sign words w_1..w_U
    std::vector<std::string> target; // spoken-language target sentence
    std::string id;
};

struct Corpus {
    std::vector<VideoSample> train, dev, test;
    Lexicon lexicon;
    uint64_t seed = 0;
    std::string target_rule; // documented source->target mapping

    const std::vector<VideoSample>& split(const std::string& name) const;
};

Lexicon build_lexicon(int64_t vocab_size, uint64_t seed);

// `noise` in [0,1] bakes seeded visual nuisance into the clip: per-pixel
// noise, a drifting low-frequency background, per-sample contrast jitter and
// one distractor glyph on its own trajectory. 0 renders the clean signal.
VideoSample render_sentence(const Lexicon& lex, const std::vector<std::string>& tokens,
                            uint64_t seed, double jitter, int64_t render_size,
                            double noise = 0.0);

// Deterministic function-word insertion: "the" before words with even
// lexicon index, "a" before odd ones. Keeps target != source so the decoder
// must learn the mapping.
std::vector<std::string> make_target(const Lexicon& lex, const std::vector<std::string>& tokens);

Corpus generate_corpus(const TrainConfig& cfg);

// Rotation (degrees, about the center) + uniform scale + pixel shift via
// inverse-mapped bilinear resampling, identical across all T frames.
Tensor affine_transform(const Tensor& frames, double angle_deg, double scale, double dx_px,
                        double dy_px);

// Train-time augmentation: each transform applied independently with
// probability p. Output clipped to [0,1]; p=0 returns the input bits.
Tensor augment(const Tensor& frames, uint64_t seed, double p, double max_rot_deg,
               double max_scale, double max_shift_frac);

Tensor random_crop(const Tensor& frames, int64_t out_size, uint64_t seed);
Tensor center_crop(const Tensor& frames, int64_t out_size);

void save_corpus(const Corpus& corpus, const TrainConfig& cfg, const std::string& dir);
Corpus load_corpus(const std::string& dir);

} // namespace dveslt
