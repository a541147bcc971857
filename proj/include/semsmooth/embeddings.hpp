#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "semsmooth/types.hpp"
#include "semsmooth/vocab.hpp"

namespace semsmooth {

/// Word vectors for every vocabulary entry, one row per token.
struct EmbeddingMatrix {
  Matrix values;  // k x dim
  int dim = 0;

  int rows() const { return static_cast<int>(values.rows()); }
};

/// Cosine similarities of one vocabulary row against all rows, clamped to
/// [-1, 1]. Rows with zero norm have similarity 0 to everything.
struct SimilarityRow {
  int target_index = 0;
  Vector sims;  // length k
};

/// Deterministic pseudo-random vector for a token that has no entry in the
/// vector file. Seeded by FNV-1a of the token string; uniform(-0.1, 0.1).
Vector seeded_embedding_vector(std::string_view token, int dim);

/// Loads a GloVe-style text file: one `token v1 v2 ... vd` entry per line,
/// single-space separated, no header. The vocabulary is the six specials
/// followed by the file tokens in file order. Specials, and any token listed
/// without numbers, get seeded pseudo-random rows so loading is reproducible.
std::pair<Vocabulary, EmbeddingMatrix> load_embeddings(
    const std::string& path, std::optional<int> expected_dim = std::nullopt);

/// Assembles an embedding matrix for an arbitrary vocabulary: rows come from
/// the loaded file where the token matches, seeded pseudo-random otherwise.
EmbeddingMatrix embeddings_for_vocabulary(const Vocabulary& vocab,
                                          const Vocabulary& file_vocab,
                                          const EmbeddingMatrix& file_matrix);

/// Cosine similarity of row j_star against every row.
SimilarityRow cosine_row(const EmbeddingMatrix& embeddings, int j_star);

/// Number of cosine_row invocations since the last reset. Lets tests verify
/// that baseline (no-smoothing) paths never touch similarities.
std::uint64_t cosine_row_call_count();
void reset_cosine_row_call_count();

}  // namespace semsmooth
