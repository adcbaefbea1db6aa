#include "translation.hpp"

#include "encoders.hpp"

namespace dveslt {

namespace {

Tensor causal_mask(int64_t U) {
    Tensor m = Tensor::zeros({U, U});
    for (int64_t i = 0; i < U; ++i)
        for (int64_t j = i + 1; j < U; ++j) m.data[static_cast<size_t>(i * U + j)] = -1e9;
    return m;
}

Var embed_with_positions(Tape& t, ParamStore& ps, const std::vector<int>& ids, int64_t d) {
    Var table = t.param(ps, "emb.table");
    Var x = embedding(table, ids);
    Var pos = t.leaf(sinusoidal_positions(static_cast<int64_t>(ids.size()), d));
    return add(x, pos);
}

} // namespace

void make_text_params(ParamStore& ps, Rng& rng, int64_t vocab, const TrainConfig::Model& m) {
    ps.create("emb.table", xavier(rng, {vocab, m.d_model}, vocab, m.d_model));
    make_transformer(ps, rng, "text_enc", m.text_layers, m.d_model, m.ffn_mult, /*cross=*/false);
    make_transformer(ps, rng, "dec", m.decoder_layers, m.d_model, m.ffn_mult, /*cross=*/true);
}

Var text_encode(Tape& t, ParamStore& ps, const std::vector<int>& ids,
                const TrainConfig::Model& m) {
    if (ids.empty()) fail("text_encode: empty id list");
    Var x = embed_with_positions(t, ps, ids, m.d_model);
    return transformer(t, ps, "text_enc", x, m.text_layers, m.heads);
}

Var decode_logits(Tape& t, ParamStore& ps, const std::vector<int>& input_ids, Var memory,
                  const TrainConfig::Model& m, Tensor* cross_attn_out) {
    if (input_ids.empty()) fail("decode_logits: empty input");
    int64_t U = static_cast<int64_t>(input_ids.size());
    Var x = embed_with_positions(t, ps, input_ids, m.d_model);
    Tensor mask = causal_mask(U);
    Var h = transformer(t, ps, "dec", x, m.decoder_layers, m.heads, &mask, memory,
                        cross_attn_out);
    // tied output projection: logits = H * emb_table^T
    return matmul(h, transpose2(t.param(ps, "emb.table")));
}

Var translation_encode(Tape& t, ParamStore& ps, const Tensor& video, const TrainConfig::Model& m,
                       bool train) {
    Var feat;
    if (m.branch == "spatial") {
        feat = temporal_encode(t, ps, "temp_spatial", spatial_encode(t, ps, video, m), m, train);
    } else if (m.branch == "spatiotemporal") {
        feat = temporal_encode(t, ps, "temp_st", spatiotemporal_encode(t, ps, video, m), m,
                               train);
    } else {
        Var a = temporal_encode(t, ps, "temp_spatial", spatial_encode(t, ps, video, m), m, train);
        Var b = temporal_encode(t, ps, "temp_st", spatiotemporal_encode(t, ps, video, m), m,
                                train);
        feat = fuse(t, ps, a, b, m);
    }
    return shared_encode(t, ps, vl_adapter(t, ps, feat), m);
}

Var translation_loss(Tape& t, ParamStore& ps, const Tensor& video, const std::vector<int>& target,
                     const TrainConfig::Model& m, bool train) {
    if (target.size() < 2) fail("translation_loss: framed target needs BOS and EOS");
    if (static_cast<int64_t>(target.size()) > m.max_target_len + 2)
        fail("translation_loss: target length " + std::to_string(target.size()) +
             " exceeds max_target_len");
    Var memory = translation_encode(t, ps, video, m, train);
    std::vector<int> input(target.begin(), target.end() - 1);
    std::vector<int> gold(target.begin() + 1, target.end());
    Var logits = decode_logits(t, ps, input, memory, m);
    return cross_entropy(logits, gold, tok::PAD);
}

std::vector<int> greedy_decode(ParamStore& ps, const Tensor& video, const TrainConfig::Model& m,
                               int64_t max_len) {
    if (max_len < 1) fail("greedy_decode: max_len must be >= 1");
    Tape t;
    Var memory = translation_encode(t, ps, video, m, /*train=*/false);
    std::vector<int> seq = {tok::BOS};
    std::vector<int> out;
    for (int64_t step = 0; step < max_len; ++step) {
        Var logits = decode_logits(t, ps, seq, memory, m);
        const Tensor& L = t.value(logits); // [|seq|, V]
        int64_t V = L.dim(1);
        const double* row = &L.data[static_cast<size_t>((L.dim(0) - 1) * V)];
        int best = 0;
        for (int64_t v = 1; v < V; ++v)
            if (row[v] > row[best]) best = static_cast<int>(v);
        if (best == tok::EOS) break;
        out.push_back(best);
        seq.push_back(best);
    }
    return out;
}

Tensor export_attention(ParamStore& ps, const Tensor& video, const std::vector<int>& generated,
                        const TrainConfig::Model& m) {
    if (generated.empty()) fail("export_attention: no generated tokens");
    Tape t;
    Var memory = translation_encode(t, ps, video, m, /*train=*/false);
    // query k (input position k) produced generated token k
    std::vector<int> input = {tok::BOS};
    input.insert(input.end(), generated.begin(), generated.end() - 1);
    Tensor attn; // [U, L]
    decode_logits(t, ps, input, memory, m, &attn);
    int64_t U = attn.dim(0), L = attn.dim(1);
    Tensor out = Tensor::zeros({L, U}); // frames on rows, tokens on columns
    for (int64_t u = 0; u < U; ++u)
        for (int64_t l = 0; l < L; ++l)
            out.data[static_cast<size_t>(l * U + u)] = attn.data[static_cast<size_t>(u * L + l)];
    return out;
}

std::vector<std::string> init_from_pretraining(ParamStore& ps,
                                               const std::map<std::string, Tensor>& ckpt) {
    // the translation model inherits the shared encoder and the text decoder
    // (with its tied embedding table); the visual backbones, temporal
    // encoders and fusion/adapter start fresh for the downstream task
    static const char* kPrefixes[] = {"shared.", "dec.", "emb."};
    auto transferable = [&](const std::string& name) {
        for (const char* p : kPrefixes)
            if (name.rfind(p, 0) == 0) return true;
        return false;
    };
    std::vector<std::string> moved;
    for (auto& [name, entry] : ps.entries()) {
        if (!transferable(name)) continue;
        auto it = ckpt.find(name);
        if (it == ckpt.end()) fail("init_from_pretraining: checkpoint missing entry '" + name +
                                   "'");
        if (it->second.shape != entry.value.shape)
            fail("init_from_pretraining: shape mismatch for '" + name + "': expected " +
                 shape_str(entry.value.shape) + ", checkpoint has " + shape_str(it->second.shape));
        entry.value = it->second;
        moved.push_back(name);
    }
    return moved;
}

} // namespace dveslt
