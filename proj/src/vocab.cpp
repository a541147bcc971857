#include "semsmooth/vocab.hpp"

#include "semsmooth/errors.hpp"

namespace semsmooth {

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  tokens_.reserve(tokens.size() + kNumSpecialTokens);
  for (auto special : kSpecialTokens) {
    tokens_.emplace_back(special);
  }
  for (const auto& token : tokens) {
    tokens_.push_back(token);
  }
  index_.reserve(tokens_.size());
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], i);
    if (!inserted) {
      throw FormatError("duplicate token in vocabulary: '" + tokens_[i] + "'");
    }
  }
}

const std::string& Vocabulary::token(int index) const {
  if (index < 0 || index >= size()) {
    throw std::out_of_range("vocabulary index " + std::to_string(index) +
                            " out of range [0, " + std::to_string(size()) + ")");
  }
  return tokens_[index];
}

std::optional<int> Vocabulary::index_of(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) {
    return std::nullopt;
  }
  return it->second;
}

int Vocabulary::index_or_unk(std::string_view token) const {
  return index_of(token).value_or(kUnkIndex);
}

}  // namespace semsmooth
