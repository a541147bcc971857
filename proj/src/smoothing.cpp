#include "semsmooth/smoothing.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <thread>

#include "semsmooth/errors.hpp"

namespace semsmooth {

namespace {

constexpr double kDuplicateSimCutoff = 1.0 - 1e-6;

int worker_count(int jobs_wanted) {
  int jobs = jobs_wanted > 0 ? jobs_wanted
                             : static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) {
    jobs = 1;
  }
  if (const char* env = std::getenv("SEMSMOOTH_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1 && jobs > cap) {
      jobs = cap;
    }
  }
  return jobs;
}

}  // namespace

void SmoothingConfig::validate() const {
  if (s < 0.0 || s >= 1.0) {
    throw ConfigError("smoothing factor s must be in [0, 1), got " + std::to_string(s));
  }
  if (t.has_value() && (*t < 0.0 || *t > 1.0)) {
    throw ConfigError("threshold t must be in [0, 1], got " + std::to_string(*t));
  }
}

void SynonymLexicon::add(const std::string& token, const std::string& synonym) {
  if (token == synonym) {
    entries_[token];  // keep the key so the entry exists, but drop the self-pair
    return;
  }
  entries_[token].insert(synonym);
  entries_[synonym].insert(token);
}

bool SynonymLexicon::are_synonyms(const std::string& a, const std::string& b) const {
  auto it = entries_.find(a);
  return it != entries_.end() && it->second.count(b) > 0;
}

const std::set<std::string>* SynonymLexicon::synonyms_of(const std::string& token) const {
  auto it = entries_.find(token);
  return it == entries_.end() ? nullptr : &it->second;
}

SynonymLexicon load_synonyms(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open synonym file: " + path);
  }
  SynonymLexicon lexicon;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty() || line.front() == '#') {
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(path, line_no, "expected `token<TAB>syn1,syn2,...`");
    }
    const std::string token = line.substr(0, tab);
    std::size_t pos = tab + 1;
    while (pos <= line.size()) {
      std::size_t next = line.find(',', pos);
      if (next == std::string::npos) {
        next = line.size();
      }
      const std::string synonym = line.substr(pos, next - pos);
      if (!synonym.empty()) {
        lexicon.add(token, synonym);
      }
      pos = next + 1;
    }
  }
  return lexicon;
}

double TargetDistribution::total_mass() const {
  return std::accumulate(
      support.begin(), support.end(), correct_probability,
      [](double acc, const auto& entry) { return acc + entry.second; });
}

std::vector<std::uint8_t> threshold_mask(const SimilarityRow& simrow, double t) {
  const int k = static_cast<int>(simrow.sims.size());
  std::vector<std::uint8_t> mask(k, 0);
  for (int m = 0; m < k; ++m) {
    const double sim = simrow.sims[m];
    if (m == simrow.target_index || sim <= t || sim >= kDuplicateSimCutoff) {
      continue;
    }
    mask[m] = 1;
  }
  return mask;
}

std::vector<std::uint8_t> synonym_mask(const std::string& target_token,
                                       const Vocabulary& vocab,
                                       const SynonymLexicon& lexicon) {
  if (!vocab.contains(target_token)) {
    throw std::out_of_range("token not in vocabulary: '" + target_token + "'");
  }
  std::vector<std::uint8_t> mask(vocab.size(), 0);
  const auto* synonyms = lexicon.synonyms_of(target_token);
  if (synonyms == nullptr) {
    return mask;
  }
  for (const auto& synonym : *synonyms) {
    if (auto idx = vocab.index_of(synonym);
        idx.has_value() && !Vocabulary::is_special_index(*idx)) {
      mask[*idx] = 1;
    }
  }
  return mask;
}

TargetDistribution build_target_distribution(int j_star, const SimilarityRow& simrow,
                                             const SmoothingConfig& config,
                                             const Vocabulary& vocab,
                                             const SynonymLexicon* lexicon) {
  config.validate();
  if (!config.t.has_value()) {
    throw ConfigError(
        "build_target_distribution requires a threshold t; use "
        "uniform_smoothed_distribution or one_hot for the t=NA settings");
  }
  if (simrow.target_index != j_star) {
    throw ConfigError("similarity row was computed for a different target index");
  }
  if (config.use_synonym_mask && lexicon == nullptr) {
    throw ConfigError("synonym mask requested but no lexicon supplied");
  }

  const int k = vocab.size();
  auto keep = threshold_mask(simrow, *config.t);
  std::vector<std::uint8_t> syn;
  if (config.use_synonym_mask) {
    syn = synonym_mask(vocab.token(j_star), vocab, *lexicon);
  }

  double weight_sum = 0.0;
  for (int m = 0; m < k; ++m) {
    if (!keep[m] || Vocabulary::is_special_index(m)) {
      keep[m] = 0;
      continue;
    }
    if (config.use_synonym_mask && !syn[m]) {
      keep[m] = 0;
      continue;
    }
    weight_sum += simrow.sims[m];
  }

  TargetDistribution dist;
  dist.correct_index = j_star;
  dist.vocab_size = k;
  if (weight_sum <= 0.0) {
    dist.correct_probability = 1.0;
    return dist;
  }
  for (int m = 0; m < k; ++m) {
    if (!keep[m]) {
      continue;
    }
    const double p = config.s * (simrow.sims[m] / weight_sum);
    if (p > 0.0) {
      dist.support.emplace_back(m, p);
    }
  }
  dist.correct_probability = dist.support.empty() ? 1.0 : 1.0 - config.s;
  return dist;
}

TargetDistribution uniform_smoothed_distribution(int j_star, int k, double s) {
  if (k < 2) {
    throw ConfigError("uniform smoothing needs a vocabulary of at least 2");
  }
  if (j_star < 0 || j_star >= k) {
    throw std::out_of_range("target index out of range");
  }
  if (s < 0.0 || s >= 1.0) {
    throw ConfigError("smoothing factor s must be in [0, 1)");
  }
  TargetDistribution dist;
  dist.correct_index = j_star;
  dist.vocab_size = k;
  if (s == 0.0) {
    dist.correct_probability = 1.0;
    return dist;
  }
  dist.correct_probability = 1.0 - s;
  const double share = s / (k - 1);
  dist.support.reserve(k - 1);
  for (int m = 0; m < k; ++m) {
    if (m != j_star) {
      dist.support.emplace_back(m, share);
    }
  }
  return dist;
}

TargetDistribution one_hot(int j_star, int k) {
  if (j_star < 0 || j_star >= k) {
    throw std::out_of_range("target index out of range");
  }
  TargetDistribution dist;
  dist.correct_index = j_star;
  dist.correct_probability = 1.0;
  dist.vocab_size = k;
  return dist;
}

TargetTable precompute_target_table(const Vocabulary& vocab,
                                    const EmbeddingMatrix& embeddings,
                                    const SmoothingConfig& config,
                                    const SynonymLexicon* lexicon) {
  config.validate();
  if (embeddings.rows() != vocab.size()) {
    throw ConfigError("embedding row count does not match vocabulary size");
  }
  if (config.use_synonym_mask && lexicon == nullptr) {
    throw ConfigError("synonym mask requested but no lexicon supplied");
  }
  const int k = vocab.size();
  TargetTable table;
  table.config = config;
  table.rows.resize(k);

  auto build_row = [&](int j) {
    if (Vocabulary::is_special_index(j)) {
      table.rows[j] = one_hot(j, k);
    } else {
      table.rows[j] =
          build_target_distribution(j, cosine_row(embeddings, j), config, vocab, lexicon);
    }
  };

  const int jobs = std::min(worker_count(0), k);
  if (jobs <= 1) {
    for (int j = 0; j < k; ++j) {
      build_row(j);
    }
    return table;
  }
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  std::atomic<int> next{0};
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (int j = next.fetch_add(1); j < k; j = next.fetch_add(1)) {
        build_row(j);
      }
    });
  }
  for (auto& worker : workers) {
    worker.join();
  }
  return table;
}

InspectionRecord inspect_distribution(const std::string& word, const TargetTable& table,
                                      const Vocabulary& vocab) {
  auto index = vocab.index_of(word);
  if (!index.has_value()) {
    throw std::out_of_range("word not in vocabulary: '" + word + "'");
  }
  const TargetDistribution& dist = table.rows.at(*index);

  InspectionRecord record;
  record.word = word;
  record.index = *index;
  record.config = table.config;
  record.correct_probability = dist.correct_probability;
  record.support.reserve(dist.support.size());
  for (const auto& [idx, p] : dist.support) {
    record.support.emplace_back(vocab.token(idx), p);
  }
  std::stable_sort(record.support.begin(), record.support.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  record.support_size = static_cast<int>(record.support.size());
  if (record.support.empty()) {
    record.note = "equivalent to vanilla CE targets";
  }
  return record;
}

}  // namespace semsmooth
