#pragma once

#include <map>
#include <string>
#include <vector>

namespace dveslt {

// Fixed special token ids, shared by every text component.
namespace tok {
inline constexpr int PAD = 0;
inline constexpr int BOS = 1;
inline constexpr int EOS = 2;
inline constexpr int UNK = 3;
inline constexpr int MASK = 4;
inline constexpr int kNumSpecial = 5;
} // namespace tok

// Whitespace-word vocabulary trimmed to the train split. Ids are assigned
// deterministically: specials first, then words by (frequency desc,
// lexicographic) so two builds over the same corpus agree exactly.
class Tokenizer {
public:
    static Tokenizer build(const std::vector<std::vector<std::string>>& train_sentences);

    int id_of(const std::string& word) const; // UNK for unknown words
    const std::string& word_of(int id) const;
    int64_t vocab_size() const { return static_cast<int64_t>(id_to_word_.size()); }

    std::vector<int> encode(const std::vector<std::string>& words) const;
    // BOS + ids + EOS
    std::vector<int> encode_framed(const std::vector<std::string>& words) const;
    // drops PAD/BOS/EOS/MASK, keeps UNK as its literal word
    std::vector<std::string> decode(const std::vector<int>& ids) const;

private:
    std::map<std::string, int> word_to_id_;
    std::vector<std::string> id_to_word_;
};

} // namespace dveslt
