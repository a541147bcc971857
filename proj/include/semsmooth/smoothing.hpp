#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "semsmooth/embeddings.hpp"
#include "semsmooth/types.hpp"
#include "semsmooth/vocab.hpp"

namespace semsmooth {

/// Controls how the smoothing mass s is spread over incorrect labels.
/// t absent means plain uniform smoothing (or none); t present means
/// similarity-weighted smoothing with the threshold mask applied.
struct SmoothingConfig {
  double s = 0.0;
  std::optional<double> t;
  bool use_synonym_mask = false;

  void validate() const;
};

/// Symmetric synonym relation between token strings. Self-references are
/// dropped at load and the closure a~b => b~a is applied.
class SynonymLexicon {
 public:
  void add(const std::string& token, const std::string& synonym);

  bool are_synonyms(const std::string& a, const std::string& b) const;

  const std::set<std::string>* synonyms_of(const std::string& token) const;

  std::size_t size() const { return entries_.size(); }

  const std::map<std::string, std::set<std::string>>& entries() const { return entries_; }

 private:
  std::map<std::string, std::set<std::string>> entries_;
};

/// `token<TAB>syn1,syn2,...` per line; `#` lines are comments.
SynonymLexicon load_synonyms(const std::string& path);

/// Sparse soft-target distribution for one correct label. Support holds only
/// the strictly positive incorrect-label probabilities.
struct TargetDistribution {
  int correct_index = 0;
  double correct_probability = 1.0;
  std::vector<std::pair<int, double>> support;  // sorted by index
  int vocab_size = 0;

  double total_mass() const;
  bool operator==(const TargetDistribution& other) const = default;
};

/// Binary keep-mask from the cosine threshold: zero where sims <= t, at the
/// target itself, and at exact-duplicate rows (sims >= 1 - 1e-6).
std::vector<std::uint8_t> threshold_mask(const SimilarityRow& simrow, double t);

/// Binary mask of lexicon synonyms of the target token; specials always 0.
std::vector<std::uint8_t> synonym_mask(const std::string& target_token,
                                       const Vocabulary& vocab,
                                       const SynonymLexicon& lexicon);

/// The similarity-weighted soft target: retained similarities are
/// sum-normalized, scaled by s, and 1-s goes to the correct label. If every
/// candidate is filtered the result degenerates to the one-hot target.
TargetDistribution build_target_distribution(int j_star, const SimilarityRow& simrow,
                                             const SmoothingConfig& config,
                                             const Vocabulary& vocab,
                                             const SynonymLexicon* lexicon = nullptr);

/// Plain label smoothing: 1-s on the correct label, s/(k-1) elsewhere.
TargetDistribution uniform_smoothed_distribution(int j_star, int k, double s);

TargetDistribution one_hot(int j_star, int k);

/// Per-vocabulary-entry distributions (the distribution depends only on the
/// word type). Special tokens map to one-hot.
struct TargetTable {
  SmoothingConfig config;
  std::vector<TargetDistribution> rows;

  int vocab_size() const { return static_cast<int>(rows.size()); }
};

/// Builds the full table. Worker count defaults to the hardware concurrency,
/// capped by the SEMSMOOTH_THREADS environment variable; results do not
/// depend on the worker count.
TargetTable precompute_target_table(const Vocabulary& vocab,
                                    const EmbeddingMatrix& embeddings,
                                    const SmoothingConfig& config,
                                    const SynonymLexicon* lexicon = nullptr);

/// JSON-friendly view of one word's distribution, support sorted by
/// descending probability.
struct InspectionRecord {
  std::string word;
  int index = 0;
  SmoothingConfig config;
  double correct_probability = 1.0;
  std::vector<std::pair<std::string, double>> support;  // descending probability
  int support_size = 0;
  std::string note;  // set when the support is empty
};

InspectionRecord inspect_distribution(const std::string& word, const TargetTable& table,
                                      const Vocabulary& vocab);

}  // namespace semsmooth
