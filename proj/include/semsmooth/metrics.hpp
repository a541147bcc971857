#pragma once

#include <string>
#include <vector>

#include "semsmooth/smoothing.hpp"

namespace semsmooth {

using TokenList = std::vector<std::string>;

/// Hypothesis/reference pair, already tokenized by the corpus tokenizer.
struct ScoredPair {
  TokenList hypothesis;
  TokenList reference;
};

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricReport {
  double bleu = 0.0;    // [0, 100]
  double rouge1 = 0.0;  // [0, 1]
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double meteor = 0.0;
};

/// Corpus BLEU-4: clipped modified n-gram precisions pooled over the corpus,
/// the m-th all-zero order smoothed to 1/(2^m * max(denominator, 1)),
/// geometric mean times the brevity penalty, scaled to [0, 100].
double bleu_corpus(const std::vector<ScoredPair>& pairs);

int lcs_length(const TokenList& a, const TokenList& b);

/// P = LCS/|hyp|, R = LCS/|ref|, F1 = 2PR/(P+R); zero when undefined.
RougeScore rouge_l(const ScoredPair& pair);

/// Clipped n-gram multiset overlap, n in {1, 2}.
RougeScore rouge_n(const ScoredPair& pair, int n);

/// Greedy three-stage unigram alignment (exact, suffix-strip stem, lexicon
/// synonym), alpha = 0.9, fragmentation penalty 0.5 * (chunks/m)^3.
double meteor(const ScoredPair& pair, const SynonymLexicon& lexicon);

/// Suffix-stripping stem used by the METEOR stage: removes the longest of
/// {ing, ed, es, ly, s} when at least two characters remain.
std::string meteor_stem(const std::string& word);

/// Corpus BLEU plus macro-averaged sentence-level ROUGE-1/2/L F1 and METEOR.
MetricReport evaluate_run(const std::vector<TokenList>& hypotheses,
                          const std::vector<TokenList>& references,
                          const SynonymLexicon& lexicon);

}  // namespace semsmooth
