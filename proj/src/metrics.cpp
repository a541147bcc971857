#include "semsmooth/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "semsmooth/errors.hpp"

namespace semsmooth {

namespace {

constexpr int kBleuOrder = 4;

using NgramCounts = std::map<std::vector<std::string_view>, long>;

NgramCounts count_ngrams(const TokenList& tokens, int n) {
  NgramCounts counts;
  if (static_cast<int>(tokens.size()) < n) {
    return counts;
  }
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::vector<std::string_view> gram(tokens.begin() + static_cast<long>(i),
                                       tokens.begin() + static_cast<long>(i) + n);
    ++counts[std::move(gram)];
  }
  return counts;
}

}  // namespace

double bleu_corpus(const std::vector<ScoredPair>& pairs) {
  if (pairs.empty()) {
    throw ConfigError("bleu_corpus requires at least one pair");
  }
  std::array<long, kBleuOrder> matches{};
  std::array<long, kBleuOrder> totals{};
  long hyp_len = 0;
  long ref_len = 0;
  for (const auto& pair : pairs) {
    hyp_len += static_cast<long>(pair.hypothesis.size());
    ref_len += static_cast<long>(pair.reference.size());
    for (int n = 1; n <= kBleuOrder; ++n) {
      const auto hyp_grams = count_ngrams(pair.hypothesis, n);
      const auto ref_grams = count_ngrams(pair.reference, n);
      totals[n - 1] +=
          std::max<long>(static_cast<long>(pair.hypothesis.size()) - n + 1, 0);
      for (const auto& [gram, count] : hyp_grams) {
        auto it = ref_grams.find(gram);
        if (it != ref_grams.end()) {
          matches[n - 1] += std::min(count, it->second);
        }
      }
    }
  }
  if (hyp_len == 0) {
    return 0.0;
  }
  int zeros = 0;
  double log_sum = 0.0;
  for (int n = 0; n < kBleuOrder; ++n) {
    double precision;
    if (matches[n] == 0) {
      ++zeros;
      precision = 1.0 / (std::pow(2.0, zeros) *
                         static_cast<double>(std::max<long>(totals[n], 1)));
    } else {
      precision = static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
    }
    log_sum += std::log(precision);
  }
  const double geometric_mean = std::exp(log_sum / kBleuOrder);
  const double brevity =
      hyp_len < ref_len
          ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len))
          : 1.0;
  return 100.0 * geometric_mean * brevity;
}

int lcs_length(const TokenList& a, const TokenList& b) {
  if (a.empty() || b.empty()) {
    return 0;
  }
  std::vector<int> prev(b.size() + 1, 0);
  std::vector<int> curr(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      curr[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

RougeScore rouge_l(const ScoredPair& pair) {
  RougeScore score;
  if (pair.hypothesis.empty() || pair.reference.empty()) {
    return score;
  }
  const double lcs = lcs_length(pair.hypothesis, pair.reference);
  score.precision = lcs / static_cast<double>(pair.hypothesis.size());
  score.recall = lcs / static_cast<double>(pair.reference.size());
  if (score.precision + score.recall > 0.0) {
    score.f1 = 2.0 * score.precision * score.recall / (score.precision + score.recall);
  }
  return score;
}

RougeScore rouge_n(const ScoredPair& pair, int n) {
  if (n != 1 && n != 2) {
    throw ConfigError("rouge_n supports n in {1, 2}");
  }
  RougeScore score;
  const auto hyp_grams = count_ngrams(pair.hypothesis, n);
  const auto ref_grams = count_ngrams(pair.reference, n);
  long hyp_total = 0;
  long ref_total = 0;
  for (const auto& [gram, count] : hyp_grams) {
    hyp_total += count;
  }
  for (const auto& [gram, count] : ref_grams) {
    ref_total += count;
  }
  if (hyp_total == 0 || ref_total == 0) {
    return score;
  }
  long matched = 0;
  for (const auto& [gram, count] : hyp_grams) {
    auto it = ref_grams.find(gram);
    if (it != ref_grams.end()) {
      matched += std::min(count, it->second);
    }
  }
  score.precision = static_cast<double>(matched) / static_cast<double>(hyp_total);
  score.recall = static_cast<double>(matched) / static_cast<double>(ref_total);
  if (score.precision + score.recall > 0.0) {
    score.f1 = 2.0 * score.precision * score.recall / (score.precision + score.recall);
  }
  return score;
}

std::string meteor_stem(const std::string& word) {
  static constexpr std::array<std::string_view, 5> suffixes = {"ing", "ed", "es", "ly",
                                                               "s"};
  for (auto suffix : suffixes) {
    if (word.size() >= suffix.size() + 2 &&
        word.compare(word.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return word.substr(0, word.size() - suffix.size());
    }
  }
  return word;
}

namespace {

constexpr double kMeteorAlpha = 0.9;
constexpr double kMeteorBeta = 3.0;
constexpr double kMeteorGamma = 0.5;

/// One greedy alignment stage: hypothesis tokens left to right, preferring
/// the reference position that continues the previous token's chunk, then
/// the lowest free matching position.
template <typename MatchFn>
void align_stage(const TokenList& hyp, const TokenList& ref, MatchFn&& matches,
                 std::vector<int>& hyp_to_ref, std::vector<bool>& ref_used) {
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    if (hyp_to_ref[i] >= 0) {
      continue;
    }
    int chosen = -1;
    if (i > 0 && hyp_to_ref[i - 1] >= 0) {
      const int follow = hyp_to_ref[i - 1] + 1;
      if (follow < static_cast<int>(ref.size()) && !ref_used[follow] &&
          matches(hyp[i], ref[follow])) {
        chosen = follow;
      }
    }
    if (chosen < 0) {
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (!ref_used[j] && matches(hyp[i], ref[j])) {
          chosen = static_cast<int>(j);
          break;
        }
      }
    }
    if (chosen >= 0) {
      hyp_to_ref[i] = chosen;
      ref_used[chosen] = true;
    }
  }
}

}  // namespace

double meteor(const ScoredPair& pair, const SynonymLexicon& lexicon) {
  const auto& hyp = pair.hypothesis;
  const auto& ref = pair.reference;
  if (hyp.empty() || ref.empty()) {
    return 0.0;
  }
  std::vector<int> hyp_to_ref(hyp.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);

  align_stage(hyp, ref, [](const std::string& a, const std::string& b) { return a == b; },
              hyp_to_ref, ref_used);
  align_stage(hyp, ref,
              [](const std::string& a, const std::string& b) {
                return meteor_stem(a) == meteor_stem(b);
              },
              hyp_to_ref, ref_used);
  align_stage(hyp, ref,
              [&lexicon](const std::string& a, const std::string& b) {
                return lexicon.are_synonyms(a, b);
              },
              hyp_to_ref, ref_used);

  int m = 0;
  int chunks = 0;
  int prev_ref = -2;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    if (hyp_to_ref[i] < 0) {
      prev_ref = -2;
      continue;
    }
    ++m;
    if (hyp_to_ref[i] != prev_ref + 1) {
      ++chunks;
    }
    prev_ref = hyp_to_ref[i];
  }
  if (m == 0) {
    return 0.0;
  }
  const double precision = static_cast<double>(m) / static_cast<double>(hyp.size());
  const double recall = static_cast<double>(m) / static_cast<double>(ref.size());
  const double fmean =
      precision * recall / (kMeteorAlpha * precision + (1.0 - kMeteorAlpha) * recall);
  const double penalty =
      kMeteorGamma * std::pow(static_cast<double>(chunks) / static_cast<double>(m),
                              kMeteorBeta);
  return fmean * (1.0 - penalty);
}

MetricReport evaluate_run(const std::vector<TokenList>& hypotheses,
                          const std::vector<TokenList>& references,
                          const SynonymLexicon& lexicon) {
  if (hypotheses.size() != references.size()) {
    throw ConfigError("hypothesis and reference lists must have equal length");
  }
  if (hypotheses.empty()) {
    throw ConfigError("evaluate_run requires at least one pair");
  }
  std::vector<ScoredPair> pairs;
  pairs.reserve(hypotheses.size());
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    pairs.push_back(ScoredPair{hypotheses[i], references[i]});
  }

  MetricReport report;
  report.bleu = bleu_corpus(pairs);
  for (const auto& pair : pairs) {
    report.rouge1 += rouge_n(pair, 1).f1;
    report.rouge2 += rouge_n(pair, 2).f1;
    report.rougeL += rouge_l(pair).f1;
    report.meteor += meteor(pair, lexicon);
  }
  const double count = static_cast<double>(pairs.size());
  report.rouge1 /= count;
  report.rouge2 /= count;
  report.rougeL /= count;
  report.meteor /= count;
  return report;
}

}  // namespace semsmooth
