#include "semsmooth/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "semsmooth/errors.hpp"
#include "semsmooth/rng.hpp"

namespace semsmooth {

namespace {

bool is_ascii_punct(unsigned char c) { return c < 128 && std::ispunct(c); }
bool is_ascii_space(unsigned char c) { return c < 128 && std::isspace(c); }

void validate_conversation(const Conversation& conversation, const std::string& path,
                           long line_no) {
  if (conversation.turns.size() < 2) {
    throw FormatError(path, line_no, "conversation has fewer than 2 turns");
  }
  for (const auto& turn : conversation.turns) {
    if (tokenize(turn).empty()) {
      throw FormatError(path, line_no, "turn is empty after tokenization");
    }
  }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (unsigned char c : text) {
    if (is_ascii_space(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

std::vector<Conversation> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open corpus file: " + path);
  }
  std::vector<Conversation> conversations;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object() || !record.contains("turns") || !record["turns"].is_array()) {
      throw FormatError(path, line_no, "expected an object with a \"turns\" array");
    }
    Conversation conversation;
    for (const auto& turn : record["turns"]) {
      if (!turn.is_string()) {
        throw FormatError(path, line_no, "turns must be strings");
      }
      conversation.turns.push_back(turn.get<std::string>());
    }
    validate_conversation(conversation, path, line_no);
    conversations.push_back(std::move(conversation));
  }
  return conversations;
}

void save_corpus(const std::vector<Conversation>& conversations, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw FormatError("cannot write corpus file: " + path);
  }
  for (const auto& conversation : conversations) {
    nlohmann::json record;
    record["turns"] = conversation.turns;
    out << record.dump() << '\n';
  }
}

TokenIds build_context_ids(const std::vector<std::string>& turns, const Vocabulary& vocab) {
  TokenIds context;
  for (std::size_t j = 0; j < turns.size(); ++j) {
    context.push_back(j % 2 == 0 ? kSpeaker1Index : kSpeaker2Index);
    for (const auto& token : tokenize(turns[j])) {
      context.push_back(vocab.index_or_unk(token));
    }
  }
  if (context.size() > kMaxContextTokens) {
    context.erase(context.begin(),
                  context.begin() + static_cast<long>(context.size() - kMaxContextTokens));
  }
  return context;
}

std::vector<TrainingExample> build_examples(const Conversation& conversation,
                                            const Vocabulary& vocab) {
  std::vector<std::vector<std::string>> turn_tokens;
  turn_tokens.reserve(conversation.turns.size());
  for (const auto& turn : conversation.turns) {
    turn_tokens.push_back(tokenize(turn));
  }

  std::vector<TrainingExample> examples;
  TokenIds context;
  for (std::size_t i = 1; i < turn_tokens.size(); ++i) {
    // Append turn i-1 (with its speaker tag) to the running context.
    context.push_back((i - 1) % 2 == 0 ? kSpeaker1Index : kSpeaker2Index);
    for (const auto& token : turn_tokens[i - 1]) {
      context.push_back(vocab.index_or_unk(token));
    }

    TrainingExample example;
    const std::size_t start =
        context.size() > kMaxContextTokens ? context.size() - kMaxContextTokens : 0;
    example.context_ids.assign(context.begin() + static_cast<long>(start), context.end());
    example.response_ids.reserve(turn_tokens[i].size() + 1);
    for (const auto& token : turn_tokens[i]) {
      example.response_ids.push_back(vocab.index_or_unk(token));
    }
    example.response_ids.push_back(kEosIndex);
    examples.push_back(std::move(example));
  }
  return examples;
}

std::vector<TrainingExample> build_examples(const std::vector<Conversation>& conversations,
                                            const Vocabulary& vocab) {
  std::vector<TrainingExample> all;
  for (const auto& conversation : conversations) {
    auto examples = build_examples(conversation, vocab);
    all.insert(all.end(), std::make_move_iterator(examples.begin()),
               std::make_move_iterator(examples.end()));
  }
  return all;
}

Vocabulary build_vocab(const std::vector<Conversation>& conversations, int min_count) {
  if (conversations.empty()) {
    throw ConfigError("cannot build a vocabulary from an empty corpus");
  }
  if (min_count < 1) {
    throw ConfigError("min_count must be >= 1");
  }
  std::unordered_map<std::string, long> counts;
  for (const auto& conversation : conversations) {
    for (const auto& turn : conversation.turns) {
      for (auto& token : tokenize(turn)) {
        ++counts[token];
      }
    }
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) {
      return a.second > b.second;
    }
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  for (auto& [token, count] : ranked) {
    if (count >= min_count) {
      tokens.push_back(std::move(token));
    }
  }
  return Vocabulary(tokens);
}

ClusterSpec default_clusters() {
  return {{"good", "great", "awesome"},
          {"bad", "terrible", "awful"},
          {"fun", "play", "enjoyable"},
          {"sad", "unhappy", "gloomy"}};
}

ClusterSpec parse_clusters(std::string_view text) {
  ClusterSpec clusters;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t next = text.find(';', pos);
    if (next == std::string_view::npos) {
      next = text.size();
    }
    std::string_view group = text.substr(pos, next - pos);
    std::vector<std::string> members;
    std::size_t gpos = 0;
    while (gpos <= group.size()) {
      std::size_t gnext = group.find(',', gpos);
      if (gnext == std::string_view::npos) {
        gnext = group.size();
      }
      std::string_view member = group.substr(gpos, gnext - gpos);
      if (!member.empty()) {
        members.emplace_back(member);
      }
      gpos = gnext + 1;
    }
    if (!members.empty()) {
      clusters.push_back(std::move(members));
    }
    pos = next + 1;
  }
  if (clusters.empty()) {
    throw ConfigError("cluster spec is empty");
  }
  return clusters;
}

namespace {

const std::vector<std::string>& topic_nouns() {
  static const std::vector<std::string> nouns = {
      "movie",    "game",     "dinner",   "party",    "concert",  "book",
      "trip",     "meeting",  "lecture",  "show",     "match",    "picnic",
      "museum",   "beach",    "hike",     "recipe",   "garden",   "market",
      "wedding",  "holiday",  "song",     "album",    "play",     "festival",
      "exhibit",  "workshop", "class",    "seminar",  "brunch",   "barbecue",
      "parade",   "carnival", "aquarium", "zoo",      "circus",   "opera",
      "ballet",   "musical",  "podcast",  "video",    "stream",   "tournament",
      "race",     "marathon", "practice", "rehearsal", "audition", "interview",
      "project",  "report",   "essay",    "painting", "sketch",   "photo",
      "camera",   "phone",    "laptop",   "tablet",   "keyboard", "monitor",
      "bicycle",  "car",      "train",    "flight",   "cruise",   "hotel",
      "hostel",   "cabin",    "tent",     "campfire", "sunset",   "sunrise",
      "storm",    "snowfall", "rainbow",  "forest",   "mountain", "river",
      "lake",     "island",   "desert",   "canyon",   "valley",   "meadow",
      "bakery",   "cafe",     "diner",    "bistro",   "buffet",   "dessert",
      "pizza",    "pasta",    "salad",    "soup",     "sandwich", "burger",
      "taco",     "curry",    "noodles",  "dumpling", "pancake",  "waffle",
      "smoothie", "coffee",   "tea",      "juice",    "cake",     "cookie",
      "library",  "bookstore", "arcade",  "theater",  "stadium",  "gym",
      "pool",     "spa",      "salon",    "clinic",   "office",   "studio",
      "garage",   "workshop", "attic",    "basement", "balcony",  "porch",
      "kitchen",  "garden",   "yard",     "park",     "plaza",    "square",
      "bridge",   "tower",    "castle",   "palace",   "temple",   "church",
      "harbor",   "dock",     "ferry",    "sailboat", "kayak",    "canoe",
      "puzzle",   "riddle",   "quiz",     "contest",  "raffle",   "auction",
      "sale",     "bargain",  "gift",     "souvenir", "postcard", "letter",
      "journal",  "diary",    "novel",    "comic",    "magazine", "newspaper",
  };
  return nouns;
}

const std::vector<std::string>& question_templates() {
  static const std::vector<std::string> templates = {
      "how was the {} ?",
      "what did you think of the {} ?",
      "did you enjoy the {} ?",
      "tell me about the {} .",
      "so how did the {} go ?",
  };
  return templates;
}

const std::vector<std::string>& answer_templates() {
  static const std::vector<std::string> templates = {
      "it was {} .",
      "i thought it was really {} .",
      "the whole thing felt {} .",
      "honestly it seemed {} to me .",
      "pretty {} overall .",
  };
  return templates;
}

std::string fill_template(const std::string& tmpl, const std::string& value) {
  std::string out = tmpl;
  const auto pos = out.find("{}");
  out.replace(pos, 2, value);
  return out;
}

// Cluster member 0 dominates the corpus; the rest split the remainder. The
// skew is what gives the semantic-smoothing signature something to improve
// on: rare members are under-observed but embedding-similar.
constexpr double kDominantMemberShare = 0.85;

}  // namespace

std::pair<std::vector<Conversation>, SynonymLexicon> synthetic_corpus(
    std::uint64_t seed, int n_conversations, const ClusterSpec& clusters) {
  if (n_conversations < 1) {
    throw ConfigError("n_conversations must be >= 1");
  }
  if (clusters.empty()) {
    throw ConfigError("cluster spec is empty");
  }

  SynonymLexicon lexicon;
  for (const auto& cluster : clusters) {
    for (std::size_t a = 0; a < cluster.size(); ++a) {
      for (std::size_t b = a + 1; b < cluster.size(); ++b) {
        lexicon.add(cluster[a], cluster[b]);
      }
    }
  }

  Rng rng(seed);
  std::vector<Conversation> conversations;
  conversations.reserve(n_conversations);
  for (int i = 0; i < n_conversations; ++i) {
    const auto& noun = topic_nouns()[rng.uniform_int(topic_nouns().size())];
    const auto& question =
        question_templates()[rng.uniform_int(question_templates().size())];
    const auto& answer = answer_templates()[rng.uniform_int(answer_templates().size())];
    const auto& cluster = clusters[rng.uniform_int(clusters.size())];
    std::size_t member = 0;
    if (cluster.size() > 1 && rng.uniform() >= kDominantMemberShare) {
      member = 1 + rng.uniform_int(cluster.size() - 1);
    }
    Conversation conversation;
    conversation.turns.push_back(fill_template(question, noun));
    conversation.turns.push_back(fill_template(answer, cluster[member]));
    conversations.push_back(std::move(conversation));
  }
  return {std::move(conversations), std::move(lexicon)};
}

std::vector<std::pair<std::string, Vector>> synthetic_embeddings(
    std::uint64_t seed, const std::vector<Conversation>& conversations,
    const ClusterSpec& clusters, int dim) {
  if (dim < 2) {
    throw ConfigError("embedding dimension must be >= 2");
  }
  std::unordered_set<std::string> seen;
  std::vector<std::string> words;
  for (const auto& conversation : conversations) {
    for (const auto& turn : conversation.turns) {
      for (auto& token : tokenize(turn)) {
        if (seen.insert(token).second) {
          words.push_back(std::move(token));
        }
      }
    }
  }
  for (const auto& cluster : clusters) {
    for (const auto& member : cluster) {
      if (seen.insert(member).second) {
        words.push_back(member);
      }
    }
  }
  std::sort(words.begin(), words.end());

  std::unordered_map<std::string, std::size_t> cluster_of;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (const auto& member : clusters[c]) {
      cluster_of[member] = c;
    }
  }

  Rng rng(seed);
  std::vector<Vector> bases;
  bases.reserve(clusters.size());
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    Vector base(dim);
    for (int i = 0; i < dim; ++i) {
      base[i] = rng.normal();
    }
    base.normalize();
    bases.push_back(std::move(base));
  }

  // Noise norm ~0.4 relative to the unit base keeps within-cluster cosine
  // around 0.85: above the t=0.5 threshold, below the duplicate cutoff.
  const double noise_scale = 0.4 / std::sqrt(static_cast<double>(dim));
  std::vector<std::pair<std::string, Vector>> rows;
  rows.reserve(words.size());
  for (const auto& word : words) {
    Vector v(dim);
    for (int i = 0; i < dim; ++i) {
      v[i] = rng.normal();
    }
    auto it = cluster_of.find(word);
    if (it != cluster_of.end()) {
      v = bases[it->second] + noise_scale * v;
    } else {
      v /= std::sqrt(static_cast<double>(dim));
    }
    rows.emplace_back(word, std::move(v));
  }
  return rows;
}

}  // namespace semsmooth
