#pragma once

#include <cstdint>
#include <string>

namespace dveslt {

// Full experiment description. Defaults reproduce the reference desk-scale
// experiment; every field is validated before any training starts.
struct TrainConfig {
    struct Data {
        int64_t vocab_size = 20;
        int64_t sentence_min = 3;
        int64_t sentence_max = 6;
        int64_t train_size = 400;
        int64_t dev_size = 50;
        int64_t test_size = 50;
        int64_t frame_size = 32;   // crop size fed to the model
        int64_t render_size = 36;  // raw render, cropped to frame_size
        int64_t duration_min = 8;
        int64_t duration_max = 14;
        double duration_jitter = 0.2;
        // visual nuisance level baked into the rendered frames (pixel noise,
        // drifting background, contrast jitter, one distractor glyph);
        // 0 renders clean glyphs only
        double noise = 0.25;
        double aug_prob = 0.5;
        double aug_max_rot = 30.0;   // degrees
        double aug_max_scale = 0.2;  // fraction
        double aug_max_shift = 0.045; // fraction of width (10/224 rescaled)
        uint64_t seed = 1;
        std::string dir; // optional on-disk corpus; empty = generate in memory
    } data;

    struct Model {
        int64_t d_spatial = 32;
        int64_t d_spatiotemporal = 48;
        int64_t d_model = 64;
        int64_t window = 16;
        int64_t stride = 6;
        int64_t shared_layers = 2;
        int64_t heads = 4;
        int64_t text_layers = 2;
        int64_t decoder_layers = 3;
        int64_t ffn_mult = 4;
        std::string fusion = "concat";       // sum | concat | xattn
        std::string branch = "dual";         // spatial | spatiotemporal | dual
        int64_t max_target_len = 24;
        // channel widths of the stand-in backbones
        int64_t spatial_channels = 8;
        int64_t st_channels = 6;
    } model;

    struct Phase {
        int64_t epochs = 30;
        int64_t batch_size = 8;
        double lr = 0.02;
        double momentum = 0.9;
        std::string scheduler = "cosine"; // cosine | exponential | onecycle
        double lr_min = 0.0;
        double gamma = 0.96;
        double pct_start = 0.35;
    };

    struct Pretrain : Phase {
        double tau_init = 0.07;
        double tau_min = 0.01;
        double mask_ratio = 0.15;
        double lambda_rec = 1.0;
        double early_stop_r1 = -1.0; // <0 disables
    } pretrain;

    struct Finetune : Phase {
        Finetune() {
            epochs = 40;
            scheduler = "onecycle";
        }
        double early_stop_bleu4 = -1.0; // <0 disables
    } finetune;

    void validate() const;
    // canonical key=value text; identical configs fingerprint identically
    std::string canonical() const;
    std::string fingerprint() const; // FNV-1a 64 of canonical text, hex

    static TrainConfig parse(const std::string& text);
    static TrainConfig load(const std::string& path);
    void save(const std::string& path) const;
};

} // namespace dveslt
