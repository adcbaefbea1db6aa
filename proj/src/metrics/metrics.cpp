#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "core/error.hpp"

namespace dveslt {

namespace {

std::map<std::vector<std::string>, int64_t> ngram_counts(const TokenSeq& s, int n) {
    std::map<std::vector<std::string>, int64_t> counts;
    if (static_cast<int>(s.size()) < n) return counts;
    for (size_t i = 0; i + static_cast<size_t>(n) <= s.size(); ++i)
        ++counts[std::vector<std::string>(s.begin() + static_cast<int64_t>(i),
                                          s.begin() + static_cast<int64_t>(i) + n)];
    return counts;
}

int64_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
    size_t n = a.size(), m = b.size();
    std::vector<int64_t> prev(m + 1, 0), cur(m + 1, 0);
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[m];
}

} // namespace

double bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references,
            int max_n) {
    if (hypotheses.empty() || hypotheses.size() != references.size())
        fail("bleu: need equal nonzero hypothesis/reference counts");
    if (max_n < 1 || max_n > 4) fail("bleu: max_n must be in [1,4]");
    int64_t hyp_len = 0, ref_len = 0;
    std::vector<double> matched(static_cast<size_t>(max_n), 0.0);
    std::vector<double> total(static_cast<size_t>(max_n), 0.0);
    for (size_t s = 0; s < hypotheses.size(); ++s) {
        const TokenSeq& h = hypotheses[s];
        const TokenSeq& r = references[s];
        hyp_len += static_cast<int64_t>(h.size());
        ref_len += static_cast<int64_t>(r.size());
        for (int n = 1; n <= max_n; ++n) {
            auto hc = ngram_counts(h, n);
            auto rc = ngram_counts(r, n);
            for (const auto& [gram, cnt] : hc) {
                auto it = rc.find(gram);
                // modified precision: clip by the reference count
                matched[static_cast<size_t>(n - 1)] +=
                    static_cast<double>(std::min(cnt, it == rc.end() ? 0 : it->second));
                total[static_cast<size_t>(n - 1)] += static_cast<double>(cnt);
            }
        }
    }
    if (hyp_len == 0) return 0.0;
    double log_prec = 0.0;
    for (int n = 0; n < max_n; ++n) {
        double num = matched[static_cast<size_t>(n)];
        double den = total[static_cast<size_t>(n)];
        if (den == 0.0) return 0.0; // no n-grams of this order at all
        if (num == 0.0) num = 0.1;  // epsilon smoothing on zero numerators
        log_prec += std::log(num / den) / static_cast<double>(max_n);
    }
    double bp = hyp_len >= ref_len
                    ? 1.0
                    : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    return 100.0 * bp * std::exp(log_prec);
}

double rouge_l(const TokenSeq& hypothesis, const TokenSeq& reference) {
    if (hypothesis.empty() || reference.empty()) fail("rouge_l: empty input sequence");
    double lcs = static_cast<double>(lcs_length(hypothesis, reference));
    if (lcs == 0.0) return 0.0;
    double p = lcs / static_cast<double>(hypothesis.size());
    double r = lcs / static_cast<double>(reference.size());
    return 2.0 * p * r / (p + r);
}

double rouge_l_corpus(const std::vector<TokenSeq>& hypotheses,
                      const std::vector<TokenSeq>& references) {
    if (hypotheses.empty() || hypotheses.size() != references.size())
        fail("rouge_l_corpus: need equal nonzero hypothesis/reference counts");
    double sum = 0.0;
    for (size_t i = 0; i < hypotheses.size(); ++i) {
        // an empty hypothesis scores 0 rather than erroring at corpus level
        sum += hypotheses[i].empty() ? 0.0 : rouge_l(hypotheses[i], references[i]);
    }
    return sum / static_cast<double>(hypotheses.size());
}

double recall_at_k(const Tensor& M, int64_t k, bool row_major) {
    if (M.rank() != 2 || M.dim(0) != M.dim(1)) fail("recall_at_k: M must be square");
    int64_t N = M.dim(0);
    if (k < 1 || k > N) fail("recall_at_k: k out of range [1," + std::to_string(N) + "]");
    int64_t hits = 0;
    for (int64_t i = 0; i < N; ++i) {
        double self = M.data[static_cast<size_t>(i * N + i)];
        int64_t rank = 1;
        for (int64_t j = 0; j < N; ++j) {
            if (j == i) continue;
            double other = row_major ? M.data[static_cast<size_t>(i * N + j)]
                                     : M.data[static_cast<size_t>(j * N + i)];
            // ties rank by lower index
            if (other > self || (other == self && j < i)) ++rank;
        }
        if (rank <= k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(N);
}

EvalScores evaluate_corpus(const std::vector<TokenSeq>& hypotheses,
                           const std::vector<TokenSeq>& references) {
    EvalScores s;
    s.bleu1 = bleu(hypotheses, references, 1);
    s.bleu2 = bleu(hypotheses, references, 2);
    s.bleu3 = bleu(hypotheses, references, 3);
    s.bleu4 = bleu(hypotheses, references, 4);
    s.rouge = rouge_l_corpus(hypotheses, references);
    return s;
}

} // namespace dveslt
