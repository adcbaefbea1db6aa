/* C interface to the dveslt sign-language-translation pipeline.
 *
 * All functions return a status code; on any non-OK status the thread-local
 * message from dveslt_last_error() describes what went wrong. Handles are
 * opaque and owned by the caller via the matching _free call. */

#ifndef DVESLT_H
#define DVESLT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dveslt_status {
    DVESLT_OK = 0,
    DVESLT_ERR_INVALID_ARG = 1, /* null/empty argument or unknown option */
    DVESLT_ERR_RUNTIME = 2      /* any failure inside the pipeline */
} dveslt_status;

/* Library version string. */
const char* dveslt_version(void);

/* Message from the most recent failing call on this thread; never NULL. */
const char* dveslt_last_error(void);

/* ---- experiment configuration ----------------------------------------- */

typedef struct dveslt_config dveslt_config;

/* Reference defaults. Never returns NULL. */
dveslt_config* dveslt_config_create(void);

/* Parse an INI-style config file; NULL on failure (see dveslt_last_error). */
dveslt_config* dveslt_config_load(const char* path);

void dveslt_config_free(dveslt_config* cfg);

/* Override one field, e.g. dveslt_config_set(cfg, "data.seed", "3").
 * The full config is re-validated, so inconsistent values are rejected. */
dveslt_status dveslt_config_set(dveslt_config* cfg, const char* section_key,
                                const char* value);

dveslt_status dveslt_config_save(const dveslt_config* cfg, const char* path);

/* 16-hex-digit fingerprint of the canonical config text. buflen >= 17. */
dveslt_status dveslt_config_fingerprint(const dveslt_config* cfg, char* buf, size_t buflen);

/* ---- pipeline stages --------------------------------------------------- */

/* Render the synthetic corpus into dir (manifest.jsonl + frames.bin). */
dveslt_status dveslt_gen_data(const dveslt_config* cfg, const char* dir);

/* Contrastive pretraining. Writes config.txt, record.log, ckpt-best
 * (best dev video->text R@1) and ckpt-last (resumable) into out_dir; a
 * ckpt-last already present there resumes the run. Optional out params may
 * be NULL. */
dveslt_status dveslt_pretrain(const dveslt_config* cfg, const char* out_dir,
                              double* best_dev_r1);

/* Translation fine-tuning. init_ckpt is a pretraining checkpoint path, or
 * NULL/"none" for random initialization. ckpt-best tracks dev BLEU-4. */
dveslt_status dveslt_finetune(const dveslt_config* cfg, const char* init_ckpt,
                              const char* out_dir, double* best_dev_bleu4);

/* Decode a split ("train" | "dev" | "test") with a fine-tuned checkpoint;
 * writes predictions.txt and report.txt into out_dir. */
dveslt_status dveslt_evaluate(const dveslt_config* cfg, const char* ckpt,
                              const char* split, const char* out_dir, double* bleu4,
                              double* rouge_l);

/* Greedy-decode one sample by id into buf (NUL-terminated, space-joined). */
dveslt_status dveslt_translate(const dveslt_config* cfg, const char* ckpt,
                               const char* sample_id, char* buf, size_t buflen);

/* Export the decoder cross-attention for one sample as <out_prefix>.csv and
 * <out_prefix>.pgm (frames on y, generated tokens on x). Optional out
 * params receive the matrix size. */
dveslt_status dveslt_export_attention(const dveslt_config* cfg, const char* ckpt,
                                      const char* sample_id, const char* out_prefix,
                                      int64_t* rows, int64_t* cols);

/* Run one fine-tuning ablation grid ("branch" | "fusion" | "scheduler")
 * from a shared pretraining checkpoint; writes per-arm run dirs and
 * ablation.txt into out_dir. */
dveslt_status dveslt_ablate(const dveslt_config* cfg, const char* init_ckpt,
                            const char* grid, const char* out_dir);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DVESLT_H */
