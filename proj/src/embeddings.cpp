#include "semsmooth/embeddings.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <vector>

#include "semsmooth/errors.hpp"
#include "semsmooth/rng.hpp"

namespace semsmooth {

namespace {

std::atomic<std::uint64_t> g_cosine_row_calls{0};

double parse_double(std::string_view field, const std::string& path, long line) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = first + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw FormatError(path, line,
                      "non-numeric field '" + std::string(field) + "'");
  }
  return value;
}

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    std::size_t next = line.find(' ', pos);
    if (next == std::string_view::npos) {
      next = line.size();
    }
    if (next > pos) {
      fields.push_back(line.substr(pos, next - pos));
    }
    pos = next + 1;
  }
  return fields;
}

}  // namespace

Vector seeded_embedding_vector(std::string_view token, int dim) {
  SplitMix64 rng(fnv1a64(token));
  Vector v(dim);
  for (int i = 0; i < dim; ++i) {
    v[i] = rng.uniform(-0.1, 0.1);
  }
  return v;
}

std::pair<Vocabulary, EmbeddingMatrix> load_embeddings(
    const std::string& path, std::optional<int> expected_dim) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open embedding file: " + path);
  }

  std::vector<std::string> tokens;
  std::vector<std::vector<double>> rows;  // empty row = seeded later
  int dim = expected_dim.value_or(-1);

  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    auto fields = split_spaces(line);
    if (fields.empty()) {
      continue;
    }
    tokens.emplace_back(fields.front());
    std::vector<double> row;
    row.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      row.push_back(parse_double(fields[i], path, line_no));
    }
    if (!row.empty()) {
      if (dim < 0) {
        dim = static_cast<int>(row.size());
      } else if (static_cast<int>(row.size()) != dim) {
        throw FormatError(path, line_no,
                          "vector dimension " + std::to_string(row.size()) +
                              " does not match expected " + std::to_string(dim));
      }
    }
    rows.push_back(std::move(row));
  }
  if (tokens.empty()) {
    throw FormatError("embedding file is empty: " + path);
  }
  if (dim < 0) {
    throw FormatError(
        "embedding file has no vectors and no expected dimension was given: " +
        path);
  }

  Vocabulary vocab(tokens);
  EmbeddingMatrix matrix;
  matrix.dim = dim;
  matrix.values.resize(vocab.size(), dim);
  for (int i = 0; i < kNumSpecialTokens; ++i) {
    matrix.values.row(i) = seeded_embedding_vector(kSpecialTokens[i], dim).transpose();
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const int row = kNumSpecialTokens + static_cast<int>(i);
    if (rows[i].empty()) {
      matrix.values.row(row) = seeded_embedding_vector(tokens[i], dim).transpose();
    } else {
      matrix.values.row(row) =
          Eigen::Map<const Vector>(rows[i].data(), dim).transpose();
    }
  }
  if (!matrix.values.allFinite()) {
    throw FormatError("embedding file contains non-finite values: " + path);
  }
  return {std::move(vocab), std::move(matrix)};
}

EmbeddingMatrix embeddings_for_vocabulary(const Vocabulary& vocab,
                                          const Vocabulary& file_vocab,
                                          const EmbeddingMatrix& file_matrix) {
  EmbeddingMatrix out;
  out.dim = file_matrix.dim;
  out.values.resize(vocab.size(), out.dim);
  for (int i = 0; i < vocab.size(); ++i) {
    const std::string& token = vocab.token(i);
    auto src = file_vocab.index_of(token);
    if (src.has_value() && !Vocabulary::is_special_index(*src)) {
      out.values.row(i) = file_matrix.values.row(*src);
    } else {
      out.values.row(i) = seeded_embedding_vector(token, out.dim).transpose();
    }
  }
  return out;
}

SimilarityRow cosine_row(const EmbeddingMatrix& embeddings, int j_star) {
  const int k = embeddings.rows();
  if (j_star < 0 || j_star >= k) {
    throw std::out_of_range("embedding row " + std::to_string(j_star) +
                            " out of range [0, " + std::to_string(k) + ")");
  }
  g_cosine_row_calls.fetch_add(1, std::memory_order_relaxed);

  SimilarityRow row;
  row.target_index = j_star;
  row.sims = Vector::Zero(k);

  const double target_norm = embeddings.values.row(j_star).norm();
  if (target_norm == 0.0) {
    return row;
  }
  Vector dots = embeddings.values * embeddings.values.row(j_star).transpose();
  for (int m = 0; m < k; ++m) {
    const double norm_m = embeddings.values.row(m).norm();
    if (norm_m == 0.0) {
      continue;
    }
    row.sims[m] = std::clamp(dots[m] / (target_norm * norm_m), -1.0, 1.0);
  }
  return row;
}

std::uint64_t cosine_row_call_count() {
  return g_cosine_row_calls.load(std::memory_order_relaxed);
}

void reset_cosine_row_call_count() {
  g_cosine_row_calls.store(0, std::memory_order_relaxed);
}

}  // namespace semsmooth
