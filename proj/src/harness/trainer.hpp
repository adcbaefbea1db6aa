#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "data/datagen.hpp"
#include "metrics/metrics.hpp"
#include "model/tokenizer.hpp"

namespace dveslt {

// One epoch line of the run record. Pretraining fills the loss components
// and retrieval numbers; fine-tuning fills the translation metrics.
struct EpochRecord {
    std::string phase; // "pretrain" | "finetune"
    int64_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double loss_cross_spatial = 0.0, loss_cross_st = 0.0, loss_inter = 0.0, loss_recon = 0.0;
    double r1 = 0.0, r5 = 0.0;            // dev video->text retrieval
    double bleu4 = 0.0, rouge = 0.0;      // dev translation quality
    double wall = 0.0;                    // seconds; excluded from determinism
    std::string to_json() const;
};

struct RunResult {
    std::string run_dir;
    double best_metric = 0.0; // dev R@1 (pretrain) or dev BLEU-4 (finetune)
    int64_t best_epoch = -1;
    int64_t epochs_run = 0;
    std::vector<EpochRecord> records;
};

// Loads the corpus from cfg.data.dir when a manifest exists there;
// otherwise generates it from the config (and persists it when a dir is
// configured).
Corpus load_or_generate(const TrainConfig& cfg);

// Phase 1. Creates out_dir, writes config.txt, appends record.log lines per
// epoch, keeps ckpt-best (best dev R@1) and ckpt-last (with optimizer and
// epoch state for resume). If out_dir already holds a ckpt-last the run
// resumes after its recorded epoch. `stop_after_epoch` simulates an
// interruption for crash-safety tests (-1 runs to completion).
RunResult cmd_pretrain(const TrainConfig& cfg, const std::string& out_dir,
                       int64_t stop_after_epoch = -1);

// Phase 2. init_ckpt is a checkpoint file path or "none" for random
// initialization (the transfer ablation arm). Same run-directory layout;
// ckpt-best tracks dev BLEU-4.
RunResult cmd_finetune(const TrainConfig& cfg, const std::string& init_ckpt,
                       const std::string& out_dir, int64_t stop_after_epoch = -1);

struct EvalResult {
    EvalScores scores;
    std::vector<std::string> prediction_lines; // "id<TAB>reference<TAB>hypothesis"
};

// Decodes a split with the fine-tuned checkpoint and writes report.txt and
// predictions.txt next to it (into out_dir).
EvalResult cmd_evaluate(const TrainConfig& cfg, const std::string& ckpt_path,
                        const std::string& split, const std::string& out_dir);

// Cross-attention export for one sample: <out_prefix>.csv (comma-separated,
// full precision) and <out_prefix>.pgm (grayscale, frames on y, tokens on
// x). Returns the matrix.
Tensor cmd_export_attention(const TrainConfig& cfg, const std::string& ckpt_path,
                            const std::string& sample_id, const std::string& out_prefix);

// Greedy-decodes one sample by id with a fine-tuned checkpoint and returns
// the space-joined sentence.
std::string cmd_translate(const TrainConfig& cfg, const std::string& ckpt_path,
                          const std::string& sample_id);

// Runs one ablation grid ("branch", "fusion" or "scheduler") of fine-tuning
// runs from a shared pretraining checkpoint and writes a comparison table.
std::string cmd_ablate(const TrainConfig& cfg, const std::string& init_ckpt,
                       const std::string& grid, const std::string& out_dir);

// Retrieval quality of a pretraining-model store on a sample list:
// video embedding = normalized mean of the two pooled branch embeddings.
struct RetrievalScores {
    double r1 = 0.0, r5 = 0.0;
};

// Record-line helper for determinism comparisons: strips the wall-clock
// field, which is the only legitimately nondeterministic value.
std::string record_without_wall(const std::string& json_line);

// Reads record.log into its lines.
std::vector<std::string> read_record_log(const std::string& run_dir);

} // namespace dveslt
