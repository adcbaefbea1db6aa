// Command-line front end. Talks to the pipeline exclusively through the
// C interface in dveslt.h.

#include <CLI11.hpp>
#include <dveslt.h>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

namespace {

struct ConfigDeleter {
    void operator()(dveslt_config* c) const { dveslt_config_free(c); }
};
using ConfigPtr = std::unique_ptr<dveslt_config, ConfigDeleter>;

int die(const std::string& what) {
    std::fprintf(stderr, "error: %s: %s\n", what.c_str(), dveslt_last_error());
    return 1;
}

// --config file first (if given), then --set key=value overrides in order.
ConfigPtr build_config(const std::string& config_path,
                       const std::vector<std::string>& sets, int& rc) {
    ConfigPtr cfg(config_path.empty() ? dveslt_config_create()
                                      : dveslt_config_load(config_path.c_str()));
    if (!cfg) {
        rc = die("loading config '" + config_path + "'");
        return nullptr;
    }
    for (const std::string& kv : sets) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "error: --set expects section.key=value, got '%s'\n",
                         kv.c_str());
            rc = 1;
            return nullptr;
        }
        if (dveslt_config_set(cfg.get(), kv.substr(0, eq).c_str(),
                              kv.substr(eq + 1).c_str()) != DVESLT_OK) {
            rc = die("setting '" + kv + "'");
            return nullptr;
        }
    }
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dveslt: dual-visual-encoder contrastive pretraining and gloss-free "
                 "sign language translation on a synthetic sign-video corpus"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(dveslt_version()));

    std::string config_path, out, init = "none", ckpt, split = "test", id, grid;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "experiment config file (INI)");
    app.add_option("--set", sets, "override a config field, e.g. --set data.seed=3")
        ->take_all();

    auto* gen = app.add_subcommand("gen-data", "render the synthetic corpus to disk");
    gen->add_option("--out", out, "corpus directory")->required();

    auto* pre = app.add_subcommand("pretrain", "contrastive pretraining of both visual "
                                               "encoders against the text encoder");
    pre->add_option("--out", out, "run directory (resumes if it holds a ckpt-last)")
        ->required();

    auto* ft = app.add_subcommand("finetune", "train the video-to-sentence translator");
    ft->add_option("--init", init, "pretraining checkpoint, or 'none' for random init");
    ft->add_option("--out", out, "run directory")->required();

    auto* ev = app.add_subcommand("evaluate", "decode a split and score BLEU/ROUGE-L");
    ev->add_option("--ckpt", ckpt, "fine-tuned checkpoint")->required();
    ev->add_option("--split", split, "train | dev | test (default test)");
    ev->add_option("--out", out, "directory for predictions.txt and report.txt")
        ->required();

    auto* tr = app.add_subcommand("translate", "greedy-decode one sample by id");
    tr->add_option("--ckpt", ckpt, "fine-tuned checkpoint")->required();
    tr->add_option("--id", id, "sample id, e.g. dev-0003")->required();

    auto* at = app.add_subcommand("attn", "export decoder cross-attention as CSV + PGM");
    at->add_option("--ckpt", ckpt, "fine-tuned checkpoint")->required();
    at->add_option("--id", id, "sample id")->required();
    at->add_option("--out", out, "output path prefix")->required();

    auto* ab = app.add_subcommand("ablate", "run a fine-tuning ablation grid");
    ab->add_option("--init", init, "shared pretraining checkpoint, or 'none'");
    ab->add_option("--grid", grid, "branch | fusion | scheduler")->required();
    ab->add_option("--out", out, "directory for per-arm runs and ablation.txt")
        ->required();

    CLI11_PARSE(app, argc, argv);

    int rc = 0;
    ConfigPtr cfg = build_config(config_path, sets, rc);
    if (!cfg) return rc;

    if (gen->parsed()) {
        if (dveslt_gen_data(cfg.get(), out.c_str()) != DVESLT_OK) return die("gen-data");
        std::printf("corpus written to %s\n", out.c_str());
    } else if (pre->parsed()) {
        double r1 = 0.0;
        if (dveslt_pretrain(cfg.get(), out.c_str(), &r1) != DVESLT_OK)
            return die("pretrain");
        std::printf("pretraining done, best dev R@1 = %.4f (%s)\n", r1, out.c_str());
    } else if (ft->parsed()) {
        double bleu4 = 0.0;
        if (dveslt_finetune(cfg.get(), init.c_str(), out.c_str(), &bleu4) != DVESLT_OK)
            return die("finetune");
        std::printf("fine-tuning done, best dev BLEU-4 = %.2f (%s)\n", bleu4, out.c_str());
    } else if (ev->parsed()) {
        double bleu4 = 0.0, rouge = 0.0;
        if (dveslt_evaluate(cfg.get(), ckpt.c_str(), split.c_str(), out.c_str(), &bleu4,
                            &rouge) != DVESLT_OK)
            return die("evaluate");
        std::printf("%s: BLEU-4 = %.2f, ROUGE-L = %.4f (report in %s)\n", split.c_str(),
                    bleu4, rouge, out.c_str());
    } else if (tr->parsed()) {
        char buf[4096];
        if (dveslt_translate(cfg.get(), ckpt.c_str(), id.c_str(), buf, sizeof buf) !=
            DVESLT_OK)
            return die("translate");
        std::printf("%s\t%s\n", id.c_str(), buf);
    } else if (at->parsed()) {
        int64_t rows = 0, cols = 0;
        if (dveslt_export_attention(cfg.get(), ckpt.c_str(), id.c_str(), out.c_str(),
                                    &rows, &cols) != DVESLT_OK)
            return die("attn");
        std::printf("attention %lld x %lld written to %s.csv and %s.pgm\n",
                    static_cast<long long>(rows), static_cast<long long>(cols),
                    out.c_str(), out.c_str());
    } else if (ab->parsed()) {
        if (dveslt_ablate(cfg.get(), init.c_str(), grid.c_str(), out.c_str()) !=
            DVESLT_OK)
            return die("ablate");
        std::printf("ablation grid '%s' done, table in %s/ablation.txt\n", grid.c_str(),
                    out.c_str());
    }
    return 0;
}
