#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "semsmooth/smoothing.hpp"
#include "semsmooth/types.hpp"
#include "semsmooth/vocab.hpp"

namespace semsmooth {

inline constexpr int kMaxContextTokens = 50;

/// An alternating-speaker conversation; turn 1 belongs to [speaker1].
struct Conversation {
  std::vector<std::string> turns;
};

/// One next-utterance prediction instance: the speaker-tagged context
/// (truncated to the most recent 50 tokens) and the response ending in [eos].
struct TrainingExample {
  TokenIds context_ids;
  TokenIds response_ids;
};

/// Lowercases, splits punctuation characters into standalone tokens, and
/// otherwise splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);

/// JSON lines, each object exactly {"turns": [string, ...]}.
std::vector<Conversation> load_corpus(const std::string& path);

void save_corpus(const std::vector<Conversation>& conversations, const std::string& path);

/// Speaker-tagged token ids for a sequence of turns ([speaker1] starts),
/// suffix-truncated to the most recent 50 tokens.
TokenIds build_context_ids(const std::vector<std::string>& turns, const Vocabulary& vocab);

/// One example per turn i >= 2: context is the speaker-tagged concatenation
/// of turns 1..i-1 (suffix-truncated to 50 tokens), response is turn i plus
/// [eos]. Out-of-vocabulary tokens map to [unk].
std::vector<TrainingExample> build_examples(const Conversation& conversation,
                                            const Vocabulary& vocab);

std::vector<TrainingExample> build_examples(const std::vector<Conversation>& conversations,
                                            const Vocabulary& vocab);

/// Specials first, then tokens with frequency >= min_count ordered by
/// descending frequency with lexicographic tie-break.
Vocabulary build_vocab(const std::vector<Conversation>& conversations, int min_count = 1);

/// Synonym clusters used by the synthetic corpus: members of one cluster are
/// mutually substitutable response words.
using ClusterSpec = std::vector<std::vector<std::string>>;

ClusterSpec default_clusters();

/// Parses "good,great,awesome;bad,terrible,awful" into clusters.
ClusterSpec parse_clusters(std::string_view text);

/// Template-generated two-turn dialogues whose response slot is filled from
/// a synonym cluster, plus the matching lexicon. Fully determined by seed.
std::pair<std::vector<Conversation>, SynonymLexicon> synthetic_corpus(
    std::uint64_t seed, int n_conversations, const ClusterSpec& clusters);

/// Embedding rows for the synthetic vocabulary: cluster members share a base
/// direction (high mutual cosine), everything else is independent noise.
/// Written in the word-vector text format by the CLI.
std::vector<std::pair<std::string, Vector>> synthetic_embeddings(
    std::uint64_t seed, const std::vector<Conversation>& conversations,
    const ClusterSpec& clusters, int dim);

}  // namespace semsmooth
