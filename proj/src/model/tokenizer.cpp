#include "tokenizer.hpp"

#include <algorithm>

#include "core/error.hpp"

namespace dveslt {

Tokenizer Tokenizer::build(const std::vector<std::vector<std::string>>& train_sentences) {
    if (train_sentences.empty()) fail("tokenizer: empty training corpus");
    std::map<std::string, int64_t> freq;
    for (const auto& s : train_sentences)
        for (const auto& w : s) ++freq[w];
    std::vector<std::pair<std::string, int64_t>> order(freq.begin(), freq.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Tokenizer t;
    t.id_to_word_ = {"<pad>", "<bos>", "<eos>", "<unk>", "<mask>"};
    for (const auto& [w, n] : order) t.id_to_word_.push_back(w);
    for (size_t i = 0; i < t.id_to_word_.size(); ++i)
        t.word_to_id_[t.id_to_word_[i]] = static_cast<int>(i);
    return t;
}

int Tokenizer::id_of(const std::string& word) const {
    auto it = word_to_id_.find(word);
    return it == word_to_id_.end() ? tok::UNK : it->second;
}

const std::string& Tokenizer::word_of(int id) const {
    if (id < 0 || id >= static_cast<int>(id_to_word_.size()))
        fail("tokenizer: id " + std::to_string(id) + " out of range");
    return id_to_word_[static_cast<size_t>(id)];
}

std::vector<int> Tokenizer::encode(const std::vector<std::string>& words) const {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(id_of(w));
    return ids;
}

std::vector<int> Tokenizer::encode_framed(const std::vector<std::string>& words) const {
    std::vector<int> ids;
    ids.reserve(words.size() + 2);
    ids.push_back(tok::BOS);
    for (const auto& w : words) ids.push_back(id_of(w));
    ids.push_back(tok::EOS);
    return ids;
}

std::vector<std::string> Tokenizer::decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    for (int id : ids) {
        if (id == tok::PAD || id == tok::BOS || id == tok::EOS || id == tok::MASK) continue;
        out.push_back(word_of(id));
    }
    return out;
}

} // namespace dveslt
