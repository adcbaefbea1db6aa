#pragma once

#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace dveslt {

using TokenSeq = std::vector<std::string>;

// Corpus-level BLEU in [0,100]: geometric mean of modified n-gram
// precisions for n = 1..max_n, times brevity penalty min(1, exp(1 - r/c)).
// Zero precision numerators are smoothed with epsilon = 0.1.
double bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references,
            int max_n);

// Sentence-level LCS F1 (beta = 1).
double rouge_l(const TokenSeq& hypothesis, const TokenSeq& reference);
// Mean sentence ROUGE-L over the corpus.
double rouge_l_corpus(const std::vector<TokenSeq>& hypotheses,
                      const std::vector<TokenSeq>& references);

// Fraction of rows of the square similarity matrix whose diagonal entry
// ranks within the top k of its row (row_major=true, video->text) or of
// its column (row_major=false, text->video). Ties rank by lower index.
double recall_at_k(const Tensor& M, int64_t k, bool row_major);

struct EvalScores {
    double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
    double rouge = 0;
};

EvalScores evaluate_corpus(const std::vector<TokenSeq>& hypotheses,
                           const std::vector<TokenSeq>& references);

} // namespace dveslt
