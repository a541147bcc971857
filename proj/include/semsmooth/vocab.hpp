#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace semsmooth {

inline constexpr int kPadIndex = 0;
inline constexpr int kUnkIndex = 1;
inline constexpr int kBosIndex = 2;
inline constexpr int kEosIndex = 3;
inline constexpr int kSpeaker1Index = 4;
inline constexpr int kSpeaker2Index = 5;
inline constexpr int kNumSpecialTokens = 6;

inline constexpr std::array<std::string_view, kNumSpecialTokens> kSpecialTokens = {
    "[pad]", "[unk]", "[bos]", "[eos]", "[speaker1]", "[speaker2]"};

/// Bijective token <-> index map. The six reserved tokens always occupy
/// indices 0-5; all other tokens follow in construction order.
class Vocabulary {
 public:
  /// Builds the vocabulary from the non-special tokens, in order.
  /// Throws FormatError if a token repeats or collides with a special token.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  int size() const { return static_cast<int>(tokens_.size()); }

  const std::string& token(int index) const;

  /// Index of an exact token, or nullopt.
  std::optional<int> index_of(std::string_view token) const;

  /// Index of the token, falling back to [unk].
  int index_or_unk(std::string_view token) const;

  bool contains(std::string_view token) const { return index_of(token).has_value(); }

  static bool is_special_index(int index) { return index >= 0 && index < kNumSpecialTokens; }

  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const {
      return std::hash<std::string_view>{}(s);
    }
  };

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int, StringHash, std::equal_to<>> index_;
};

}  // namespace semsmooth
