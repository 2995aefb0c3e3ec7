#pragma once

// Corpus ingestion (JSON lines), tag inventory, vocabulary and example
// assembly with the 5-before / 2-after context window.
//
// Corpus format, one conversation per line:
//   {"id": "c1", "utterances": [{"tokens": ["a", "b"], "tags": ["None", "他"]}, ...]}
// The tag on token n names the pronoun dropped immediately before token n.
// "None" (or null) marks no dropped pronoun.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ndpr/errors.hpp"
#include "ndpr/rng.hpp"

namespace ndpr {

inline constexpr std::size_t kContextBefore = 5;
inline constexpr std::size_t kContextAfter = 2;

class TagSet {
 public:
  static constexpr int kNone = 0;

  TagSet() : TagSet(default_names()) {}

  explicit TagSet(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty() || names_.front() != "None") {
      throw ConfigError("tag set must start with \"None\"");
    }
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (!index_.emplace(names_[i], static_cast<int>(i)).second) {
        throw ConfigError("duplicate tag '" + names_[i] + "'");
      }
    }
  }

  // None, ten concrete pronouns, five abstract types, and a catch-all.
  static std::vector<std::string> default_names() {
    return {"None", "我",   "我们", "你",    "你们",      "他",      "她",          "它",         "他们",
            "她们", "它们", "event", "previous_utterance", "generic", "existential", "pleonastic", "other"};
  }

  // None plus the ten concrete pronouns.
  static TagSet concrete() {
    return TagSet({"None", "我", "我们", "你", "你们", "他", "她", "它", "他们", "她们", "它们"});
  }

  // "default", "concrete", or a comma-separated list starting with None.
  static TagSet from_spec(const std::string& spec) {
    if (spec.empty() || spec == "default") return TagSet();
    if (spec == "concrete") return concrete();
    std::vector<std::string> names;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) names.push_back(item);
    return TagSet(std::move(names));
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& names() const { return names_; }

  // -1 when unknown.
  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }
  int other() const { return find("other"); }

  // FNV-1a over the ordered names; identifies the label space in checkpoints.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& n : names_) {
      for (unsigned char c : n) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
      h ^= 0xff;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  bool operator==(const TagSet& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

struct Utterance {
  std::vector<std::string> tokens;
  std::vector<int> tags;  // TagSet ids, one per token
};

struct Conversation {
  std::string id;
  std::vector<Utterance> utterances;
};

struct LoadedCorpus {
  std::vector<Conversation> conversations;
  std::vector<std::string> warnings;

  std::size_t dropped_pronouns() const {
    std::size_t n = 0;
    for (const auto& c : conversations) {
      for (const auto& u : c.utterances) {
        n += static_cast<std::size_t>(std::count_if(u.tags.begin(), u.tags.end(), [](int t) {
          return t != TagSet::kNone;
        }));
      }
    }
    return n;
  }
  std::size_t sentence_count() const {
    std::size_t n = 0;
    for (const auto& c : conversations) n += c.utterances.size();
    return n;
  }
};

namespace detail {

inline int resolve_tag(const nlohmann::json& tag, const TagSet& tags, const std::string& where,
                       std::vector<std::string>& warnings) {
  if (tag.is_null()) return TagSet::kNone;
  if (!tag.is_string()) throw DataError(where + ": tag must be a string or null");
  const auto name = tag.get<std::string>();
  const int id = tags.find(name);
  if (id >= 0) return id;
  const int other = tags.other();
  if (other < 0) throw DataError(where + ": unknown tag '" + name + "' and the tag set has no 'other'");
  warnings.push_back(where + ": unknown tag '" + name + "' mapped to 'other'");
  return other;
}

}  // namespace detail

// Parses one JSON line. `line_no` is used in error messages only.
inline Conversation parse_conversation(const std::string& line, std::size_t line_no, const TagSet& tags,
                                       std::vector<std::string>& warnings) {
  const std::string at = "line " + std::to_string(line_no);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(at + ": malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object() || !j.contains("utterances") || !j["utterances"].is_array()) {
    throw DataError(at + ": expected an object with an \"utterances\" array");
  }
  Conversation conv;
  if (j.contains("id")) {
    conv.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  } else {
    conv.id = std::to_string(line_no);
  }
  const auto& utts = j["utterances"];
  for (std::size_t u = 0; u < utts.size(); ++u) {
    const std::string where = at + ", conversation '" + conv.id + "', utterance " + std::to_string(u);
    const auto& uj = utts[u];
    if (!uj.is_object() || !uj.contains("tokens") || !uj["tokens"].is_array()) {
      throw DataError(where + ": expected an object with a \"tokens\" array");
    }
    const auto& toks = uj["tokens"];
    nlohmann::json tag_list = uj.contains("tags") ? uj["tags"] : nlohmann::json::array();
    if (!tag_list.is_array()) throw DataError(where + ": \"tags\" must be an array");
    if (!uj.contains("tags")) tag_list = nlohmann::json(std::vector<nlohmann::json>(toks.size(), nullptr));
    if (tag_list.size() != toks.size()) {
      throw DataError(where + ": " + std::to_string(toks.size()) + " tokens but " +
                      std::to_string(tag_list.size()) + " tags");
    }
    if (toks.empty()) {
      warnings.push_back(where + ": empty utterance dropped");
      continue;
    }
    Utterance utt;
    for (std::size_t k = 0; k < toks.size(); ++k) {
      if (!toks[k].is_string()) throw DataError(where + ": token " + std::to_string(k) + " is not a string");
      utt.tokens.push_back(toks[k].get<std::string>());
      utt.tags.push_back(detail::resolve_tag(tag_list[k], tags, where, warnings));
    }
    conv.utterances.push_back(std::move(utt));
  }
  return conv;
}

inline LoadedCorpus read_corpus(std::istream& in, const TagSet& tags) {
  LoadedCorpus out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.conversations.push_back(parse_conversation(line, line_no, tags, out.warnings));
  }
  return out;
}

inline LoadedCorpus load_corpus(const std::string& path, const TagSet& tags) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus '" + path + "'");
  return read_corpus(in, tags);
}

inline nlohmann::json conversation_to_json(const Conversation& conv, const TagSet& tags) {
  nlohmann::json utts = nlohmann::json::array();
  for (const auto& u : conv.utterances) {
    nlohmann::json names = nlohmann::json::array();
    for (int t : u.tags) names.push_back(tags.name(t));
    utts.push_back({{"tokens", u.tokens}, {"tags", names}});
  }
  return {{"id", conv.id}, {"utterances", utts}};
}

inline void write_corpus(std::ostream& out, const std::vector<Conversation>& convs, const TagSet& tags) {
  for (const auto& c : convs) out << conversation_to_json(c, tags).dump() << '\n';
}

inline void save_corpus(const std::string& path, const std::vector<Conversation>& convs, const TagSet& tags) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus '" + path + "'");
  write_corpus(out, convs, tags);
}

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary() : tokens_{"<pad>", "<unk>"} { rebuild_index(); }

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 2 || tokens_[0] != "<pad>" || tokens_[1] != "<unk>") {
      throw ConfigError("vocabulary must start with <pad>, <unk>");
    }
    rebuild_index();
  }

  // Tokens seen at least `min_count` times, in lexicographic order after the
  // reserved ids.
  static Vocabulary build(const std::vector<Conversation>& train, std::size_t min_count = 1) {
    std::map<std::string, std::size_t> counts;
    for (const auto& c : train)
      for (const auto& u : c.utterances)
        for (const auto& t : u.tokens) ++counts[t];
    std::vector<std::string> tokens{"<pad>", "<unk>"};
    for (const auto& [tok, n] : counts) {
      if (n >= min_count && tok != "<pad>" && tok != "<unk>") tokens.push_back(tok);
    }
    return Vocabulary(std::move(tokens));
  }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::unordered_map<std::string, int>& index() const { return index_; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
  }

 private:
  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct Example {
  std::vector<int> tokens;
  std::vector<int> tags;
  std::vector<std::vector<int>> context;
  std::vector<std::size_t> context_index;  // utterance index of each context entry
  std::string conversation_id;
  std::size_t sentence_index = 0;
};

// Context utterance indices for sentence t of a conversation of length L:
// [max(0, t-5), t) followed by (t, min(L, t+3)).
inline std::vector<std::size_t> context_window(std::size_t t, std::size_t length) {
  std::vector<std::size_t> idx;
  const std::size_t lo = t >= kContextBefore ? t - kContextBefore : 0;
  for (std::size_t i = lo; i < t; ++i) idx.push_back(i);
  const std::size_t hi = std::min(length, t + kContextAfter + 1);
  for (std::size_t i = t + 1; i < hi; ++i) idx.push_back(i);
  return idx;
}

inline std::vector<Example> make_examples(const std::vector<Conversation>& convs, const Vocabulary& vocab) {
  std::vector<Example> out;
  for (const auto& conv : convs) {
    const std::size_t L = conv.utterances.size();
    for (std::size_t t = 0; t < L; ++t) {
      Example ex;
      ex.tokens = vocab.encode(conv.utterances[t].tokens);
      ex.tags = conv.utterances[t].tags;
      ex.context_index = context_window(t, L);
      for (std::size_t i : ex.context_index) ex.context.push_back(vocab.encode(conv.utterances[i].tokens));
      ex.conversation_id = conv.id;
      ex.sentence_index = t;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

// Holds out `fraction` of the conversations (chosen by a seeded shuffle) as
// a development split. Returns {train, dev}; both keep corpus order.
inline std::pair<std::vector<Conversation>, std::vector<Conversation>> split_dev(
    const std::vector<Conversation>& convs, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(convs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::size_t n_dev = static_cast<std::size_t>(static_cast<double>(convs.size()) * fraction + 0.5);
  if (convs.size() >= 2) n_dev = std::clamp<std::size_t>(n_dev, 1, convs.size() - 1);
  else n_dev = 0;
  std::vector<bool> is_dev(convs.size(), false);
  for (std::size_t i = 0; i < n_dev; ++i) is_dev[order[i]] = true;
  std::pair<std::vector<Conversation>, std::vector<Conversation>> out;
  for (std::size_t i = 0; i < convs.size(); ++i) (is_dev[i] ? out.second : out.first).push_back(convs[i]);
  return out;
}

}  // namespace ndpr
