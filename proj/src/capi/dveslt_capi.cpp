#include "dveslt.h"

#include <cstring>
#include <string>

#include "data/datagen.hpp"
#include "harness/trainer.hpp"

using namespace dveslt;

// The opaque handle is just the C++ config.
struct dveslt_config {
    TrainConfig cfg;
};

namespace {

thread_local std::string g_last_error = "";

dveslt_status set_error(dveslt_status s, const std::string& msg) {
    g_last_error = msg;
    return s;
}

dveslt_status invalid(const std::string& msg) {
    return set_error(DVESLT_ERR_INVALID_ARG, msg);
}

// Runs fn, funneling every C++ exception into a status + message.
template <typename Fn>
dveslt_status guarded(Fn&& fn) {
    try {
        fn();
        return DVESLT_OK;
    } catch (const std::exception& e) {
        return set_error(DVESLT_ERR_RUNTIME, e.what());
    } catch (...) {
        return set_error(DVESLT_ERR_RUNTIME, "unknown error");
    }
}

bool empty_arg(const char* s) { return s == nullptr || *s == '\0'; }

} // namespace

extern "C" {

const char* dveslt_version(void) { return "1.0.0"; }

const char* dveslt_last_error(void) { return g_last_error.c_str(); }

dveslt_config* dveslt_config_create(void) { return new dveslt_config{}; }

dveslt_config* dveslt_config_load(const char* path) {
    if (empty_arg(path)) {
        invalid("config_load: path is null or empty");
        return nullptr;
    }
    try {
        return new dveslt_config{TrainConfig::load(path)};
    } catch (const std::exception& e) {
        set_error(DVESLT_ERR_RUNTIME, e.what());
        return nullptr;
    }
}

void dveslt_config_free(dveslt_config* cfg) { delete cfg; }

dveslt_status dveslt_config_set(dveslt_config* cfg, const char* section_key,
                                const char* value) {
    if (!cfg) return invalid("config_set: cfg is null");
    if (empty_arg(section_key) || value == nullptr)
        return invalid("config_set: key or value is null");
    std::string sk = section_key;
    size_t dot = sk.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == sk.size())
        return invalid("config_set: key must look like 'section.key', got '" + sk + "'");
    // parse keeps the last assignment, so append the override and re-parse
    std::string text = cfg->cfg.canonical() + "[" + sk.substr(0, dot) + "]\n" +
                       sk.substr(dot + 1) + " = " + value + "\n";
    return guarded([&] { cfg->cfg = TrainConfig::parse(text); });
}

dveslt_status dveslt_config_save(const dveslt_config* cfg, const char* path) {
    if (!cfg) return invalid("config_save: cfg is null");
    if (empty_arg(path)) return invalid("config_save: path is null or empty");
    return guarded([&] { cfg->cfg.save(path); });
}

dveslt_status dveslt_config_fingerprint(const dveslt_config* cfg, char* buf, size_t buflen) {
    if (!cfg || !buf) return invalid("config_fingerprint: null argument");
    if (buflen < 17) return invalid("config_fingerprint: buffer must hold 17 bytes");
    return guarded([&] {
        std::string fp = cfg->cfg.fingerprint();
        std::memcpy(buf, fp.c_str(), fp.size() + 1);
    });
}

dveslt_status dveslt_gen_data(const dveslt_config* cfg, const char* dir) {
    if (!cfg) return invalid("gen_data: cfg is null");
    if (empty_arg(dir)) return invalid("gen_data: dir is null or empty");
    return guarded([&] {
        Corpus corpus = generate_corpus(cfg->cfg);
        save_corpus(corpus, cfg->cfg, dir);
    });
}

dveslt_status dveslt_pretrain(const dveslt_config* cfg, const char* out_dir,
                              double* best_dev_r1) {
    if (!cfg) return invalid("pretrain: cfg is null");
    if (empty_arg(out_dir)) return invalid("pretrain: out_dir is null or empty");
    return guarded([&] {
        RunResult r = cmd_pretrain(cfg->cfg, out_dir);
        if (best_dev_r1) *best_dev_r1 = r.best_metric;
    });
}

dveslt_status dveslt_finetune(const dveslt_config* cfg, const char* init_ckpt,
                              const char* out_dir, double* best_dev_bleu4) {
    if (!cfg) return invalid("finetune: cfg is null");
    if (empty_arg(out_dir)) return invalid("finetune: out_dir is null or empty");
    std::string init = empty_arg(init_ckpt) ? "none" : init_ckpt;
    return guarded([&] {
        RunResult r = cmd_finetune(cfg->cfg, init, out_dir);
        if (best_dev_bleu4) *best_dev_bleu4 = r.best_metric;
    });
}

dveslt_status dveslt_evaluate(const dveslt_config* cfg, const char* ckpt,
                              const char* split, const char* out_dir, double* bleu4,
                              double* rouge_l) {
    if (!cfg) return invalid("evaluate: cfg is null");
    if (empty_arg(ckpt) || empty_arg(split) || empty_arg(out_dir))
        return invalid("evaluate: ckpt, split and out_dir are required");
    return guarded([&] {
        EvalResult e = cmd_evaluate(cfg->cfg, ckpt, split, out_dir);
        if (bleu4) *bleu4 = e.scores.bleu4;
        if (rouge_l) *rouge_l = e.scores.rouge;
    });
}

dveslt_status dveslt_translate(const dveslt_config* cfg, const char* ckpt,
                               const char* sample_id, char* buf, size_t buflen) {
    if (!cfg) return invalid("translate: cfg is null");
    if (empty_arg(ckpt) || empty_arg(sample_id))
        return invalid("translate: ckpt and sample_id are required");
    if (!buf || buflen == 0) return invalid("translate: output buffer is required");
    return guarded([&] {
        std::string out = cmd_translate(cfg->cfg, ckpt, sample_id);
        if (out.size() + 1 > buflen)
            fail("translate: buffer too small (" + std::to_string(out.size() + 1) +
                 " bytes needed)");
        std::memcpy(buf, out.c_str(), out.size() + 1);
    });
}

dveslt_status dveslt_export_attention(const dveslt_config* cfg, const char* ckpt,
                                      const char* sample_id, const char* out_prefix,
                                      int64_t* rows, int64_t* cols) {
    if (!cfg) return invalid("export_attention: cfg is null");
    if (empty_arg(ckpt) || empty_arg(sample_id) || empty_arg(out_prefix))
        return invalid("export_attention: ckpt, sample_id and out_prefix are required");
    return guarded([&] {
        Tensor A = cmd_export_attention(cfg->cfg, ckpt, sample_id, out_prefix);
        if (rows) *rows = A.dim(0);
        if (cols) *cols = A.dim(1);
    });
}

dveslt_status dveslt_ablate(const dveslt_config* cfg, const char* init_ckpt,
                            const char* grid, const char* out_dir) {
    if (!cfg) return invalid("ablate: cfg is null");
    if (empty_arg(grid) || empty_arg(out_dir))
        return invalid("ablate: grid and out_dir are required");
    std::string init = empty_arg(init_ckpt) ? "none" : init_ckpt;
    return guarded([&] { cmd_ablate(cfg->cfg, init, grid, out_dir); });
}

} // extern "C"
