#include "config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <variant>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace dveslt {

namespace {

struct Field {
    std::string section;
    std::string key;
    std::variant<int64_t*, double*, std::string*, uint64_t*> ptr;
};

std::vector<Field> fields(TrainConfig& c) {
    return {
        {"data", "vocab_size", &c.data.vocab_size},
        {"data", "sentence_min", &c.data.sentence_min},
        {"data", "sentence_max", &c.data.sentence_max},
        {"data", "train_size", &c.data.train_size},
        {"data", "dev_size", &c.data.dev_size},
        {"data", "test_size", &c.data.test_size},
        {"data", "frame_size", &c.data.frame_size},
        {"data", "render_size", &c.data.render_size},
        {"data", "duration_min", &c.data.duration_min},
        {"data", "duration_max", &c.data.duration_max},
        {"data", "duration_jitter", &c.data.duration_jitter},
        {"data", "noise", &c.data.noise},
        {"data", "aug_prob", &c.data.aug_prob},
        {"data", "aug_max_rot", &c.data.aug_max_rot},
        {"data", "aug_max_scale", &c.data.aug_max_scale},
        {"data", "aug_max_shift", &c.data.aug_max_shift},
        {"data", "seed", &c.data.seed},
        {"data", "dir", &c.data.dir},
        {"model", "d_spatial", &c.model.d_spatial},
        {"model", "d_spatiotemporal", &c.model.d_spatiotemporal},
        {"model", "d_model", &c.model.d_model},
        {"model", "window", &c.model.window},
        {"model", "stride", &c.model.stride},
        {"model", "shared_layers", &c.model.shared_layers},
        {"model", "heads", &c.model.heads},
        {"model", "text_layers", &c.model.text_layers},
        {"model", "decoder_layers", &c.model.decoder_layers},
        {"model", "ffn_mult", &c.model.ffn_mult},
        {"model", "fusion", &c.model.fusion},
        {"model", "branch", &c.model.branch},
        {"model", "max_target_len", &c.model.max_target_len},
        {"model", "spatial_channels", &c.model.spatial_channels},
        {"model", "st_channels", &c.model.st_channels},
        {"pretrain", "epochs", &c.pretrain.epochs},
        {"pretrain", "batch_size", &c.pretrain.batch_size},
        {"pretrain", "lr", &c.pretrain.lr},
        {"pretrain", "momentum", &c.pretrain.momentum},
        {"pretrain", "scheduler", &c.pretrain.scheduler},
        {"pretrain", "lr_min", &c.pretrain.lr_min},
        {"pretrain", "gamma", &c.pretrain.gamma},
        {"pretrain", "pct_start", &c.pretrain.pct_start},
        {"pretrain", "tau_init", &c.pretrain.tau_init},
        {"pretrain", "tau_min", &c.pretrain.tau_min},
        {"pretrain", "mask_ratio", &c.pretrain.mask_ratio},
        {"pretrain", "lambda_rec", &c.pretrain.lambda_rec},
        {"pretrain", "early_stop_r1", &c.pretrain.early_stop_r1},
        {"finetune", "epochs", &c.finetune.epochs},
        {"finetune", "batch_size", &c.finetune.batch_size},
        {"finetune", "lr", &c.finetune.lr},
        {"finetune", "momentum", &c.finetune.momentum},
        {"finetune", "scheduler", &c.finetune.scheduler},
        {"finetune", "lr_min", &c.finetune.lr_min},
        {"finetune", "gamma", &c.finetune.gamma},
        {"finetune", "pct_start", &c.finetune.pct_start},
        {"finetune", "early_stop_bleu4", &c.finetune.early_stop_bleu4},
    };
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void check(bool cond, const std::string& msg) {
    if (!cond) fail("config: " + msg);
}

bool one_of(const std::string& v, std::initializer_list<const char*> opts) {
    for (const char* o : opts)
        if (v == o) return true;
    return false;
}

} // namespace

void TrainConfig::validate() const {
    check(data.vocab_size >= 2, "data.vocab_size must be >= 2");
    check(data.sentence_min >= 1 && data.sentence_min <= data.sentence_max,
          "data sentence length range invalid");
    check(data.train_size > 0 && data.dev_size > 0 && data.test_size > 0,
          "split sizes must be positive");
    check(data.frame_size >= 8, "data.frame_size must be >= 8");
    check(data.render_size >= data.frame_size, "data.render_size must be >= frame_size");
    check(data.duration_min >= 4 && data.duration_min <= data.duration_max,
          "duration range invalid (min >= 4)");
    check(data.duration_jitter >= 0.0 && data.duration_jitter < 0.5,
          "data.duration_jitter must be in [0,0.5)");
    check(data.noise >= 0.0 && data.noise <= 1.0, "data.noise must be in [0,1]");
    check(data.aug_prob >= 0.0 && data.aug_prob <= 1.0, "data.aug_prob must be in [0,1]");
    check(data.aug_max_scale >= 0.0 && data.aug_max_scale < 1.0,
          "data.aug_max_scale must be in [0,1)");
    check(data.aug_max_shift >= 0.0 && data.aug_max_shift < 1.0,
          "data.aug_max_shift must be in [0,1)");
    check(model.d_spatial > 0 && model.d_spatiotemporal > 0 && model.d_model > 0,
          "model dims must be positive");
    check(model.window > model.stride && model.stride >= 1,
          "model.window must exceed model.stride >= 1");
    check(model.d_model % model.heads == 0, "model.d_model must be divisible by heads");
    check(model.shared_layers >= 1 && model.text_layers >= 1 && model.decoder_layers >= 1,
          "layer counts must be >= 1");
    check(one_of(model.fusion, {"sum", "concat", "xattn"}),
          "model.fusion must be sum|concat|xattn");
    check(one_of(model.branch, {"spatial", "spatiotemporal", "dual"}),
          "model.branch must be spatial|spatiotemporal|dual");
    check(model.max_target_len >= 2, "model.max_target_len must be >= 2");
    check(model.spatial_channels >= 1 && model.st_channels >= 1,
          "backbone channel widths must be >= 1");
    auto check_phase = [&](const Phase& p, const std::string& who) {
        check(p.epochs >= 1, who + ".epochs must be >= 1");
        check(p.batch_size >= 1, who + ".batch_size must be >= 1");
        check(p.lr > 0.0, who + ".lr must be positive");
        check(p.momentum >= 0.0 && p.momentum < 1.0, who + ".momentum must be in [0,1)");
        check(one_of(p.scheduler, {"cosine", "exponential", "onecycle"}),
              who + ".scheduler must be cosine|exponential|onecycle");
        check(p.lr_min >= 0.0, who + ".lr_min must be >= 0");
        check(p.gamma > 0.0 && p.gamma <= 1.0, who + ".gamma must be in (0,1]");
        check(p.pct_start > 0.0 && p.pct_start < 1.0, who + ".pct_start must be in (0,1)");
    };
    check_phase(pretrain, "pretrain");
    check_phase(finetune, "finetune");
    check(pretrain.tau_init > 0.0 && pretrain.tau_min > 0.0 &&
              pretrain.tau_min <= pretrain.tau_init,
          "pretrain temperature settings invalid");
    check(pretrain.mask_ratio >= 0.0 && pretrain.mask_ratio <= 1.0,
          "pretrain.mask_ratio must be in [0,1]");
    check(pretrain.lambda_rec >= 0.0, "pretrain.lambda_rec must be >= 0");
}

std::string TrainConfig::canonical() const {
    TrainConfig& self = const_cast<TrainConfig&>(*this);
    auto fs = fields(self);
    std::stable_sort(fs.begin(), fs.end(), [](const Field& a, const Field& b) {
        return std::tie(a.section, a.key) < std::tie(b.section, b.key);
    });
    std::ostringstream os;
    std::string cur;
    for (const auto& f : fs) {
        if (f.section != cur) {
            cur = f.section;
            os << "[" << cur << "]\n";
        }
        os << f.key << " = ";
        std::visit(
            [&](auto* p) {
                using T = std::remove_pointer_t<decltype(p)>;
                if constexpr (std::is_same_v<T, double>)
                    os << fmt_double(*p);
                else
                    os << *p;
            },
            f.ptr);
        os << "\n";
    }
    return os.str();
}

std::string TrainConfig::fingerprint() const {
    std::string text = canonical();
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001B3ull;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

TrainConfig TrainConfig::parse(const std::string& text) {
    TrainConfig cfg;
    auto fs = fields(cfg);
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        size_t hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            check(line.back() == ']', "line " + std::to_string(lineno) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        size_t eq = line.find('=');
        check(eq != std::string::npos, "line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        bool found = false;
        for (auto& f : fs) {
            if (f.section != section || f.key != key) continue;
            found = true;
            std::visit(
                [&](auto* p) {
                    using T = std::remove_pointer_t<decltype(p)>;
                    try {
                        if constexpr (std::is_same_v<T, int64_t>)
                            *p = std::stoll(value);
                        else if constexpr (std::is_same_v<T, uint64_t>)
                            *p = std::stoull(value);
                        else if constexpr (std::is_same_v<T, double>)
                            *p = std::stod(value);
                        else
                            *p = value;
                    } catch (const std::exception&) {
                        fail("config: line " + std::to_string(lineno) + ": cannot parse value '" +
                             value + "' for " + section + "." + key);
                    }
                },
                f.ptr);
            break;
        }
        check(found, "line " + std::to_string(lineno) + ": unknown key '" + section + "." +
                         key + "'");
    }
    cfg.validate();
    return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("config: cannot open '" + path + "'");
    std::ostringstream os;
    os << is.rdbuf();
    return parse(os.str());
}

void TrainConfig::save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) fail("config: cannot write '" + path + "'");
    os << canonical();
}

} // namespace dveslt
