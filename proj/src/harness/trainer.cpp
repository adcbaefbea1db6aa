#include "trainer.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "core/checkpoint.hpp"
#include "core/tape.hpp"
#include "model/alignment.hpp"
#include "model/encoders.hpp"
#include "model/fusion.hpp"
#include "model/translation.hpp"
#include "optim/optimizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dveslt {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tokenizer build_tokenizer(const Corpus& corpus) {
    std::vector<std::vector<std::string>> sents;
    sents.reserve(corpus.train.size());
    for (const auto& s : corpus.train) sents.push_back(s.target);
    return Tokenizer::build(sents);
}

// Parameter stores for the two phases. Both are rebuilt from the config
// with the same derived init stream, so a fresh store matches what any
// checkpoint of the same config expects entry-by-entry.
ParamStore make_pretrain_store(const TrainConfig& cfg, int64_t vocab) {
    ParamStore ps;
    Rng rng(Rng::derive(cfg.data.seed, "init"));
    make_encoder_params(ps, rng, cfg.model, cfg.data.frame_size);
    make_text_params(ps, rng, vocab, cfg.model);
    make_temperature_param(ps, cfg.pretrain.tau_init);
    return ps;
}

ParamStore make_finetune_store(const TrainConfig& cfg, int64_t vocab) {
    ParamStore ps;
    Rng rng(Rng::derive(cfg.data.seed, "init"));
    make_encoder_params(ps, rng, cfg.model, cfg.data.frame_size);
    make_text_params(ps, rng, vocab, cfg.model);
    make_fusion_params(ps, rng, cfg.model);
    return ps;
}

// Overwrites every store entry from the checkpoint map. Extra checkpoint
// entries (optimizer state, counters) are ignored.
void load_store_values(ParamStore& ps, const std::map<std::string, Tensor>& ckpt) {
    for (auto& [name, e] : ps.entries()) {
        auto it = ckpt.find(name);
        if (it == ckpt.end()) fail("checkpoint missing entry '" + name + "'");
        if (it->second.shape != e.value.shape)
            fail("checkpoint shape mismatch for '" + name + "'");
        e.value = it->second;
    }
}

void save_atomic(const std::string& path, const std::map<std::string, Tensor>& entries) {
    std::string tmp = path + ".tmp";
    save_checkpoint(tmp, entries);
    fs::rename(tmp, path);
}

std::map<std::string, Tensor> store_values(const ParamStore& ps) {
    std::map<std::string, Tensor> out;
    for (auto& [name, e] : ps.entries()) out.emplace(name, e.value);
    return out;
}

// ckpt-last carries everything a resume needs: parameters, batch-norm
// running stats (plain entries), momentum velocities and the run cursor.
std::map<std::string, Tensor> resume_state(const ParamStore& ps, const SgdOptimizer& opt,
                                           int64_t epoch, double best_metric,
                                           int64_t best_epoch) {
    auto out = store_values(ps);
    for (auto& [name, v] : opt.velocities()) out.emplace("__vel__." + name, v);
    out.emplace("__state__.epoch", Tensor::scalar(static_cast<double>(epoch)));
    out.emplace("__state__.best_metric", Tensor::scalar(best_metric));
    out.emplace("__state__.best_epoch", Tensor::scalar(static_cast<double>(best_epoch)));
    return out;
}

void append_line(const std::string& path, const std::string& line) {
    std::ofstream f(path, std::ios::app);
    if (!f) fail("cannot open '" + path + "' for append");
    f << line << "\n";
    f.flush();
    if (!f) fail("write to '" + path + "' failed");
}

Tensor train_view(const VideoSample& s, const TrainConfig& cfg, int64_t epoch, int64_t idx) {
    Tensor v = augment(s.frames, Rng::derive(cfg.data.seed, "aug", epoch, idx),
                       cfg.data.aug_prob, cfg.data.aug_max_rot, cfg.data.aug_max_scale,
                       cfg.data.aug_max_shift);
    return random_crop(v, cfg.data.frame_size, Rng::derive(cfg.data.seed, "crop", epoch, idx));
}

Tensor eval_view(const VideoSample& s, const TrainConfig& cfg) {
    return center_crop(s.frames, cfg.data.frame_size);
}

std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(Rng::derive(seed, "shuffle", epoch));
    for (size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, i - 1))]);
    return order;
}

std::vector<double> pooled_row(const Tensor& seq) {
    int64_t L = seq.dim(0), d = seq.dim(1);
    std::vector<double> row(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < L; ++i)
        for (int64_t j = 0; j < d; ++j)
            row[static_cast<size_t>(j)] += seq.data[static_cast<size_t>(i * d + j)];
    for (double& x : row) x /= static_cast<double>(L);
    return row;
}

void normalize_row(std::vector<double>& row) {
    double n2 = 0.0;
    for (double x : row) n2 += x * x;
    if (n2 <= 0.0) fail("retrieval: zero-norm embedding");
    double inv = 1.0 / std::sqrt(n2);
    for (double& x : row) x *= inv;
}

RetrievalScores dev_retrieval(ParamStore& ps, const Corpus& corpus, const Tokenizer& tk,
                              const TrainConfig& cfg) {
    const auto& dev = corpus.dev;
    int64_t n = static_cast<int64_t>(dev.size());
    int64_t d = cfg.model.d_model;
    Tensor V = Tensor::zeros({n, d}), T = Tensor::zeros({n, d});
    for (int64_t i = 0; i < n; ++i) {
        Tape t;
        Tensor v = eval_view(dev[static_cast<size_t>(i)], cfg);
        Var zs = encode_branch_spatial(t, ps, v, cfg.model, false);
        Var zt = encode_branch_spatiotemporal(t, ps, v, cfg.model, false);
        std::vector<double> rs = pooled_row(t.value(zs));
        std::vector<double> rt = pooled_row(t.value(zt));
        normalize_row(rs);
        normalize_row(rt);
        std::vector<double> rv(static_cast<size_t>(d));
        for (int64_t j = 0; j < d; ++j)
            rv[static_cast<size_t>(j)] =
                0.5 * (rs[static_cast<size_t>(j)] + rt[static_cast<size_t>(j)]);
        normalize_row(rv);

        Var tx = text_encode(t, ps, tk.encode_framed(dev[static_cast<size_t>(i)].target),
                             cfg.model);
        std::vector<double> rx = pooled_row(t.value(tx));
        normalize_row(rx);
        for (int64_t j = 0; j < d; ++j) {
            V.data[static_cast<size_t>(i * d + j)] = rv[static_cast<size_t>(j)];
            T.data[static_cast<size_t>(i * d + j)] = rx[static_cast<size_t>(j)];
        }
    }
    Tensor M = Tensor::zeros({n, n});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (int64_t k = 0; k < d; ++k)
                dot += V.data[static_cast<size_t>(i * d + k)] *
                       T.data[static_cast<size_t>(j * d + k)];
            M.data[static_cast<size_t>(i * n + j)] = dot;
        }
    RetrievalScores r;
    r.r1 = recall_at_k(M, 1, /*row_major=*/true);
    r.r5 = recall_at_k(M, std::min<int64_t>(5, n), /*row_major=*/true);
    return r;
}

struct DevTranslation {
    EvalScores scores;
    std::vector<TokenSeq> hypotheses;
};

DevTranslation decode_split(ParamStore& ps, const std::vector<VideoSample>& split,
                            const Tokenizer& tk, const TrainConfig& cfg) {
    DevTranslation out;
    std::vector<TokenSeq> refs;
    for (const auto& s : split) {
        Tensor v = eval_view(s, cfg);
        std::vector<int> ids = greedy_decode(ps, v, cfg.model, cfg.model.max_target_len);
        out.hypotheses.push_back(tk.decode(ids));
        refs.push_back(s.target);
    }
    out.scores = evaluate_corpus(out.hypotheses, refs);
    return out;
}

std::string join_words(const TokenSeq& words) {
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

} // namespace

std::string EpochRecord::to_json() const {
    json j;
    j["phase"] = phase;
    j["epoch"] = epoch;
    j["lr"] = lr;
    j["loss"] = loss;
    if (phase == "pretrain") {
        j["cross_spatial"] = loss_cross_spatial;
        j["cross_st"] = loss_cross_st;
        j["inter"] = loss_inter;
        j["recon"] = loss_recon;
        j["r1"] = r1;
        j["r5"] = r5;
    } else {
        j["bleu4"] = bleu4;
        j["rouge"] = rouge;
    }
    j["wall"] = wall;
    return j.dump();
}

std::string record_without_wall(const std::string& json_line) {
    json j = json::parse(json_line);
    j.erase("wall");
    return j.dump();
}

std::vector<std::string> read_record_log(const std::string& run_dir) {
    std::ifstream f(run_dir + "/record.log");
    if (!f) fail("cannot open '" + run_dir + "/record.log'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

Corpus load_or_generate(const TrainConfig& cfg) {
    if (!cfg.data.dir.empty() && fs::exists(cfg.data.dir + "/manifest.jsonl"))
        return load_corpus(cfg.data.dir);
    Corpus corpus = generate_corpus(cfg);
    if (!cfg.data.dir.empty()) save_corpus(corpus, cfg, cfg.data.dir);
    return corpus;
}

RunResult cmd_pretrain(const TrainConfig& cfg, const std::string& out_dir,
                       int64_t stop_after_epoch) {
    cfg.validate();
    auto t0 = std::chrono::steady_clock::now();
    Corpus corpus = load_or_generate(cfg);
    Tokenizer tk = build_tokenizer(corpus);
    ParamStore ps = make_pretrain_store(cfg, tk.vocab_size());
    SgdOptimizer opt(cfg.pretrain.momentum);

    fs::create_directories(out_dir);
    const std::string record_path = out_dir + "/record.log";
    const std::string last_path = out_dir + "/ckpt-last";
    const std::string best_path = out_dir + "/ckpt-best";

    RunResult res;
    res.run_dir = out_dir;
    int64_t start_epoch = 1;
    double best = -1.0;
    int64_t best_epoch = -1;

    if (fs::exists(last_path)) {
        auto ck = load_checkpoint(last_path);
        load_store_values(ps, ck);
        for (auto& [name, t] : ck)
            if (name.rfind("__vel__.", 0) == 0) opt.velocities()[name.substr(8)] = t;
        start_epoch = static_cast<int64_t>(ck.at("__state__.epoch").item()) + 1;
        best = ck.at("__state__.best_metric").item();
        best_epoch = static_cast<int64_t>(ck.at("__state__.best_epoch").item());
    } else {
        cfg.save(out_dir + "/config.txt");
        std::ofstream(record_path, std::ios::trunc).flush();
        json header;
        header["type"] = "run";
        header["phase"] = "pretrain";
        header["config"] = cfg.fingerprint();
        header["seed"] = cfg.data.seed;
        append_line(record_path, header.dump());

        // untrained baseline, so learning curves start from a measured point
        RetrievalScores r0 = dev_retrieval(ps, corpus, tk, cfg);
        EpochRecord rec;
        rec.phase = "pretrain";
        rec.epoch = 0;
        rec.r1 = r0.r1;
        rec.r5 = r0.r5;
        rec.wall = seconds_since(t0);
        append_line(record_path, rec.to_json());
        res.records.push_back(rec);
    }

    const auto& phase = cfg.pretrain;
    const auto& train = corpus.train;
    const int64_t B = phase.batch_size;
    const int64_t steps_per_epoch =
        (static_cast<int64_t>(train.size()) + B - 1) / B;

    for (int64_t epoch = start_epoch; epoch <= phase.epochs; ++epoch) {
        std::vector<size_t> order = epoch_order(train.size(), cfg.data.seed, epoch);
        double sum_total = 0, sum_cs = 0, sum_ct = 0, sum_in = 0, sum_re = 0, last_lr = 0;
        int64_t batches = 0;
        try {
            for (size_t off = 0; off < order.size(); off += static_cast<size_t>(B)) {
                size_t hi = std::min(order.size(), off + static_cast<size_t>(B));
                int64_t gstep = (epoch - 1) * steps_per_epoch + batches;
                double lr = scheduled_lr(phase, epoch - 1, gstep, steps_per_epoch);
                last_lr = lr;

                Tape t;
                Var tau = temperature(t, ps, phase.tau_min);
                std::vector<Var> zs_seqs, zt_seqs, tx_seqs;
                Var recon_sum;
                for (size_t k = off; k < hi; ++k) {
                    int64_t sidx = static_cast<int64_t>(order[k]);
                    const VideoSample& s = train[order[k]];
                    Tensor v = train_view(s, cfg, epoch, sidx);
                    zs_seqs.push_back(encode_branch_spatial(t, ps, v, cfg.model, true));
                    zt_seqs.push_back(encode_branch_spatiotemporal(t, ps, v, cfg.model, true));

                    std::vector<int> framed = tk.encode_framed(s.target);
                    std::vector<int> masked = mask_tokens(
                        framed, phase.mask_ratio, Rng::derive(cfg.data.seed, "mask", epoch, sidx));
                    Var tx = text_encode(t, ps, masked, cfg.model);
                    tx_seqs.push_back(tx);

                    // reconstruct the unmasked sentence from the masked encoding
                    std::vector<int> input(framed.begin(), framed.end() - 1);
                    std::vector<int> gold(framed.begin() + 1, framed.end());
                    Var logits = decode_logits(t, ps, input, tx, cfg.model);
                    Var ce = cross_entropy(logits, gold, tok::PAD);
                    recon_sum = recon_sum.valid() ? add(recon_sum, ce) : ce;
                }
                Var Z_sp = pool_and_normalize(t, zs_seqs);
                Var Z_st = pool_and_normalize(t, zt_seqs);
                Var Z_tx = pool_and_normalize(t, tx_seqs);
                Var recon = scalar_mul(recon_sum, 1.0 / static_cast<double>(hi - off));
                PretrainLossParts parts =
                    pretraining_loss(t, Z_sp, Z_st, Z_tx, tau, recon, phase.lambda_rec);

                ps.zero_grads();
                t.backward(parts.total);
                opt.step(ps, lr);

                sum_total += t.value(parts.total).item();
                sum_cs += t.value(parts.cross_spatial).item();
                sum_ct += t.value(parts.cross_st).item();
                sum_in += t.value(parts.inter).item();
                sum_re += t.value(parts.recon).item();
                ++batches;
            }
        } catch (const Error& e) {
            fail("pretrain aborted in epoch " + std::to_string(epoch) + ": " + e.what() +
                 " (last-good checkpoint retained in " + out_dir + ")");
        }

        RetrievalScores r = dev_retrieval(ps, corpus, tk, cfg);
        EpochRecord rec;
        rec.phase = "pretrain";
        rec.epoch = epoch;
        rec.lr = last_lr;
        rec.loss = sum_total / static_cast<double>(batches);
        rec.loss_cross_spatial = sum_cs / static_cast<double>(batches);
        rec.loss_cross_st = sum_ct / static_cast<double>(batches);
        rec.loss_inter = sum_in / static_cast<double>(batches);
        rec.loss_recon = sum_re / static_cast<double>(batches);
        rec.r1 = r.r1;
        rec.r5 = r.r5;
        rec.wall = seconds_since(t0);

        if (r.r1 > best) {
            best = r.r1;
            best_epoch = epoch;
            save_atomic(best_path, store_values(ps));
        }
        save_atomic(last_path, resume_state(ps, opt, epoch, best, best_epoch));
        append_line(record_path, rec.to_json());
        res.records.push_back(rec);
        res.epochs_run = epoch;

        if (phase.early_stop_r1 >= 0.0 && r.r1 >= phase.early_stop_r1) break;
        if (stop_after_epoch >= 0 && epoch >= stop_after_epoch) break;
    }
    res.best_metric = best;
    res.best_epoch = best_epoch;
    return res;
}

RunResult cmd_finetune(const TrainConfig& cfg, const std::string& init_ckpt,
                       const std::string& out_dir, int64_t stop_after_epoch) {
    cfg.validate();
    auto t0 = std::chrono::steady_clock::now();
    Corpus corpus = load_or_generate(cfg);
    Tokenizer tk = build_tokenizer(corpus);
    ParamStore ps = make_finetune_store(cfg, tk.vocab_size());
    SgdOptimizer opt(cfg.finetune.momentum);

    fs::create_directories(out_dir);
    const std::string record_path = out_dir + "/record.log";
    const std::string last_path = out_dir + "/ckpt-last";
    const std::string best_path = out_dir + "/ckpt-best";

    RunResult res;
    res.run_dir = out_dir;
    int64_t start_epoch = 1;
    double best = -1.0;
    int64_t best_epoch = -1;

    if (fs::exists(last_path)) {
        auto ck = load_checkpoint(last_path);
        load_store_values(ps, ck);
        for (auto& [name, t] : ck)
            if (name.rfind("__vel__.", 0) == 0) opt.velocities()[name.substr(8)] = t;
        start_epoch = static_cast<int64_t>(ck.at("__state__.epoch").item()) + 1;
        best = ck.at("__state__.best_metric").item();
        best_epoch = static_cast<int64_t>(ck.at("__state__.best_epoch").item());
    } else {
        if (init_ckpt != "none")
            init_from_pretraining(ps, load_checkpoint(init_ckpt));
        cfg.save(out_dir + "/config.txt");
        std::ofstream(record_path, std::ios::trunc).flush();
        json header;
        header["type"] = "run";
        header["phase"] = "finetune";
        header["config"] = cfg.fingerprint();
        header["seed"] = cfg.data.seed;
        header["init"] = init_ckpt == "none" ? "none" : "pretrained";
        append_line(record_path, header.dump());

        DevTranslation d0 = decode_split(ps, corpus.dev, tk, cfg);
        EpochRecord rec;
        rec.phase = "finetune";
        rec.epoch = 0;
        rec.bleu4 = d0.scores.bleu4;
        rec.rouge = d0.scores.rouge;
        rec.wall = seconds_since(t0);
        append_line(record_path, rec.to_json());
        res.records.push_back(rec);
    }

    const auto& phase = cfg.finetune;
    const auto& train = corpus.train;
    const int64_t B = phase.batch_size;
    const int64_t steps_per_epoch =
        (static_cast<int64_t>(train.size()) + B - 1) / B;

    for (int64_t epoch = start_epoch; epoch <= phase.epochs; ++epoch) {
        std::vector<size_t> order = epoch_order(train.size(), cfg.data.seed, epoch);
        double sum_loss = 0, last_lr = 0;
        int64_t batches = 0;
        try {
            for (size_t off = 0; off < order.size(); off += static_cast<size_t>(B)) {
                size_t hi = std::min(order.size(), off + static_cast<size_t>(B));
                int64_t gstep = (epoch - 1) * steps_per_epoch + batches;
                double lr = scheduled_lr(phase, epoch - 1, gstep, steps_per_epoch);
                last_lr = lr;

                Tape t;
                Var loss_sum;
                for (size_t k = off; k < hi; ++k) {
                    int64_t sidx = static_cast<int64_t>(order[k]);
                    const VideoSample& s = train[order[k]];
                    Tensor v = train_view(s, cfg, epoch, sidx);
                    Var l = translation_loss(t, ps, v, tk.encode_framed(s.target), cfg.model, true);
                    loss_sum = loss_sum.valid() ? add(loss_sum, l) : l;
                }
                Var loss = scalar_mul(loss_sum, 1.0 / static_cast<double>(hi - off));
                ps.zero_grads();
                t.backward(loss);
                opt.step(ps, lr);

                sum_loss += t.value(loss).item();
                ++batches;
            }
        } catch (const Error& e) {
            fail("finetune aborted in epoch " + std::to_string(epoch) + ": " + e.what() +
                 " (last-good checkpoint retained in " + out_dir + ")");
        }

        DevTranslation d = decode_split(ps, corpus.dev, tk, cfg);
        EpochRecord rec;
        rec.phase = "finetune";
        rec.epoch = epoch;
        rec.lr = last_lr;
        rec.loss = sum_loss / static_cast<double>(batches);
        rec.bleu4 = d.scores.bleu4;
        rec.rouge = d.scores.rouge;
        rec.wall = seconds_since(t0);

        if (d.scores.bleu4 > best) {
            best = d.scores.bleu4;
            best_epoch = epoch;
            save_atomic(best_path, store_values(ps));
        }
        save_atomic(last_path, resume_state(ps, opt, epoch, best, best_epoch));
        append_line(record_path, rec.to_json());
        res.records.push_back(rec);
        res.epochs_run = epoch;

        if (phase.early_stop_bleu4 >= 0.0 && d.scores.bleu4 >= phase.early_stop_bleu4) break;
        if (stop_after_epoch >= 0 && epoch >= stop_after_epoch) break;
    }
    res.best_metric = best;
    res.best_epoch = best_epoch;
    return res;
}

EvalResult cmd_evaluate(const TrainConfig& cfg, const std::string& ckpt_path,
                        const std::string& split, const std::string& out_dir) {
    cfg.validate();
    Corpus corpus = load_or_generate(cfg);
    Tokenizer tk = build_tokenizer(corpus);
    ParamStore ps = make_finetune_store(cfg, tk.vocab_size());
    load_store_values(ps, load_checkpoint(ckpt_path));

    const auto& samples = corpus.split(split);
    DevTranslation d = decode_split(ps, samples, tk, cfg);

    EvalResult res;
    res.scores = d.scores;
    fs::create_directories(out_dir);
    std::ofstream pred(out_dir + "/predictions.txt", std::ios::trunc);
    if (!pred) fail("cannot write predictions.txt in '" + out_dir + "'");
    for (size_t i = 0; i < samples.size(); ++i) {
        std::string line = samples[i].id + "\t" + join_words(samples[i].target) + "\t" +
                           join_words(d.hypotheses[i]);
        pred << line << "\n";
        res.prediction_lines.push_back(line);
    }
    pred.close();

    std::ofstream rep(out_dir + "/report.txt", std::ios::trunc);
    if (!rep) fail("cannot write report.txt in '" + out_dir + "'");
    rep << "config_fingerprint=" << cfg.fingerprint() << "\n"
        << "checkpoint=" << ckpt_path << "\n"
        << "split=" << split << "\n"
        << "samples=" << samples.size() << "\n"
        << "bleu1=" << d.scores.bleu1 << "\n"
        << "bleu2=" << d.scores.bleu2 << "\n"
        << "bleu3=" << d.scores.bleu3 << "\n"
        << "bleu4=" << d.scores.bleu4 << "\n"
        << "rouge_l=" << d.scores.rouge << "\n";
    return res;
}

std::string cmd_translate(const TrainConfig& cfg, const std::string& ckpt_path,
                          const std::string& sample_id) {
    cfg.validate();
    Corpus corpus = load_or_generate(cfg);
    const VideoSample* sample = nullptr;
    for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test})
        for (const auto& s : *split)
            if (s.id == sample_id) sample = &s;
    if (!sample) fail("unknown sample id '" + sample_id + "'");

    Tokenizer tk = build_tokenizer(corpus);
    ParamStore ps = make_finetune_store(cfg, tk.vocab_size());
    load_store_values(ps, load_checkpoint(ckpt_path));
    Tensor v = center_crop(sample->frames, cfg.data.frame_size);
    return join_words(tk.decode(greedy_decode(ps, v, cfg.model, cfg.model.max_target_len)));
}

Tensor cmd_export_attention(const TrainConfig& cfg, const std::string& ckpt_path,
                            const std::string& sample_id, const std::string& out_prefix) {
    cfg.validate();
    Corpus corpus = load_or_generate(cfg);
    const VideoSample* sample = nullptr;
    for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test})
        for (const auto& s : *split)
            if (s.id == sample_id) sample = &s;
    if (!sample) fail("unknown sample id '" + sample_id + "'");

    Tokenizer tk = build_tokenizer(corpus);
    ParamStore ps = make_finetune_store(cfg, tk.vocab_size());
    load_store_values(ps, load_checkpoint(ckpt_path));

    Tensor v = center_crop(sample->frames, cfg.data.frame_size);
    std::vector<int> ids = greedy_decode(ps, v, cfg.model, cfg.model.max_target_len);
    if (ids.empty()) fail("attention export: model generated no tokens for '" + sample_id + "'");
    Tensor A = export_attention(ps, v, ids, cfg.model); // [L_memory, U]

    int64_t L = A.dim(0), U = A.dim(1);
    std::ofstream csv(out_prefix + ".csv", std::ios::trunc);
    if (!csv) fail("cannot write '" + out_prefix + ".csv'");
    char buf[64];
    for (int64_t i = 0; i < L; ++i) {
        for (int64_t j = 0; j < U; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", A.data[static_cast<size_t>(i * U + j)]);
            csv << (j ? "," : "") << buf;
        }
        csv << "\n";
    }
    csv.close();

    double peak = 0.0;
    for (double x : A.data) peak = std::max(peak, x);
    if (peak <= 0.0) peak = 1.0;
    std::ofstream pgm(out_prefix + ".pgm", std::ios::trunc);
    if (!pgm) fail("cannot write '" + out_prefix + ".pgm'");
    pgm << "P2\n" << U << " " << L << "\n255\n";
    for (int64_t i = 0; i < L; ++i) {
        for (int64_t j = 0; j < U; ++j) {
            int g = static_cast<int>(
                std::lround(255.0 * A.data[static_cast<size_t>(i * U + j)] / peak));
            pgm << (j ? " " : "") << g;
        }
        pgm << "\n";
    }
    return A;
}

std::string cmd_ablate(const TrainConfig& cfg, const std::string& init_ckpt,
                       const std::string& grid, const std::string& out_dir) {
    struct Arm {
        std::string name;
        TrainConfig cfg;
        std::string init;
    };
    std::vector<Arm> arms;
    auto with = [&](const std::string& name, auto&& tweak, const std::string& init) {
        TrainConfig c = cfg;
        tweak(c);
        arms.push_back({name, c, init});
    };
    if (grid == "branch") {
        for (const char* b : {"dual", "spatial", "spatiotemporal"})
            with(b, [&](TrainConfig& c) { c.model.branch = b; }, init_ckpt);
        with("dual-random", [](TrainConfig&) {}, "none");
    } else if (grid == "fusion") {
        for (const char* f : {"sum", "concat", "xattn"})
            with(f, [&](TrainConfig& c) { c.model.fusion = f; }, init_ckpt);
    } else if (grid == "scheduler") {
        for (const char* s : {"cosine", "exponential", "onecycle"})
            with(s, [&](TrainConfig& c) { c.finetune.scheduler = s; }, init_ckpt);
    } else {
        fail("unknown ablation grid '" + grid + "' (branch | fusion | scheduler)");
    }

    fs::create_directories(out_dir);
    std::string table = "arm\tdev_bleu4\ttest_bleu4\ttest_rouge_l\n";
    for (const Arm& arm : arms) {
        std::string run_dir = out_dir + "/arm-" + arm.name;
        RunResult r = cmd_finetune(arm.cfg, arm.init, run_dir);
        EvalResult e = cmd_evaluate(arm.cfg, run_dir + "/ckpt-best", "test", run_dir);
        char row[256];
        std::snprintf(row, sizeof row, "%s\t%.4f\t%.4f\t%.4f\n", arm.name.c_str(),
                      r.best_metric, e.scores.bleu4, e.scores.rouge);
        table += row;
    }
    std::ofstream f(out_dir + "/ablation.txt", std::ios::trunc);
    if (!f) fail("cannot write ablation table in '" + out_dir + "'");
    f << table;
    return table;
}

} // namespace dveslt
