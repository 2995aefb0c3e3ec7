#pragma once

// Seeded generator of symbolic pro-drop conversations.
//
// Every conversation is a sequence of two utterance kinds:
//   mention:  [w?] t_a e_x v [t_b e_y ...] [w ...]
//             topic tokens t_* each followed by the entity they introduce
//   pro-drop: [w?] t_k v [w ...]
//             the subject before v is dropped; it refers to the entity that
//             follows t_k in the one earlier utterance mentioning t_k
// The gold tag on v is the pronoun for that entity's person/number/gender.
// Topics and entities are never reused inside a conversation, so the
// referent token occurs in exactly one utterance of the context window.

#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ndpr/data.hpp"
#include "ndpr/rng.hpp"

namespace ndpr {

struct EntityAttributes {
  int person = 3;        // 1, 2 or 3
  bool plural = false;
  char gender = 'm';     // 'm', 'f' or 'n'; ignored for persons 1 and 2
};

inline std::string pronoun_for(const EntityAttributes& a) {
  if (a.person == 1) return a.plural ? "我们" : "我";
  if (a.person == 2) return a.plural ? "你们" : "你";
  switch (a.gender) {
    case 'f': return a.plural ? "她们" : "她";
    case 'n': return a.plural ? "它们" : "它";
    default: return a.plural ? "他们" : "他";
  }
}

inline EntityAttributes attributes_for(const std::string& pronoun) {
  static const std::map<std::string, EntityAttributes> table = {
      {"我", {1, false, 'm'}},  {"我们", {1, true, 'm'}}, {"你", {2, false, 'm'}},  {"你们", {2, true, 'm'}},
      {"他", {3, false, 'm'}},  {"她", {3, false, 'f'}},  {"它", {3, false, 'n'}},  {"他们", {3, true, 'm'}},
      {"她们", {3, true, 'f'}}, {"它们", {3, true, 'n'}}};
  auto it = table.find(pronoun);
  if (it == table.end()) throw ConfigError("no entity attributes realise pronoun '" + pronoun + "'");
  return it->second;
}

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t conversations = 100;
  std::size_t utterances = 8;
  double drop_probability = 0.5;
  std::size_t min_distance = 2;
  std::size_t max_distance = 5;
  double out_of_window_fraction = 0.0;  // referents placed 6-7 utterances back
  double distractor_overlap = 0.3;      // chance a distractor shares the DP sentence's verb
  std::vector<std::string> pronouns = {"他", "她", "它", "他们"};
  std::size_t entities_per_pronoun = 12;
  std::size_t pairs_per_mention = 2;
  std::size_t topics = 48;
  std::size_t verbs = 10;
  std::size_t fillers = 16;
  std::size_t max_trailing_fillers = 2;
  double leading_filler_probability = 0.3;

  void validate() const {
    if (conversations == 0 || utterances == 0) throw ConfigError("synth: need at least one utterance");
    if (min_distance < 1 || min_distance > max_distance || max_distance > kContextBefore) {
      throw ConfigError("synth: distances must satisfy 1 <= min <= max <= " + std::to_string(kContextBefore));
    }
    auto prob = [](double p, const char* what) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("synth: ") + what + " must be in [0, 1]");
    };
    prob(drop_probability, "drop_probability");
    prob(out_of_window_fraction, "out_of_window_fraction");
    prob(distractor_overlap, "distractor_overlap");
    prob(leading_filler_probability, "leading_filler_probability");
    if (pronouns.empty()) throw ConfigError("synth: need at least one pronoun type");
    for (const auto& p : pronouns) (void)attributes_for(p);
    if (pairs_per_mention == 0) throw ConfigError("synth: pairs_per_mention must be positive");
    const std::size_t needed = utterances * pairs_per_mention;
    if (entities_per_pronoun * pronouns.size() < needed) {
      throw ConfigError("synth: entity inventory too small for " + std::to_string(needed) + " mentions");
    }
    if (topics < needed) throw ConfigError("synth: topic inventory too small");
    if (verbs == 0 || fillers == 0) throw ConfigError("synth: need verbs and fillers");
  }
};

struct SynthEntity {
  std::string token;
  EntityAttributes attributes;
  std::string pronoun;
};

struct SynthInventory {
  std::vector<SynthEntity> entities;
  std::vector<std::string> topics;
  std::vector<std::string> verbs;
  std::vector<std::string> fillers;

  bool is_topic(const std::string& t) const { return has_prefix(t, 't'); }
  bool is_verb(const std::string& t) const { return has_prefix(t, 'v'); }
  std::optional<std::string> entity_pronoun(const std::string& t) const {
    auto it = by_token.find(t);
    if (it == by_token.end()) return std::nullopt;
    return entities[it->second].pronoun;
  }

  std::unordered_map<std::string, std::size_t> by_token;

 private:
  static bool has_prefix(const std::string& t, char c) {
    return t.size() > 1 && t[0] == c && std::isdigit(static_cast<unsigned char>(t[1]));
  }
};

// Ground truth for one generated dropped pronoun.
struct SynthDp {
  std::size_t conversation = 0;
  std::size_t utterance = 0;
  std::size_t position = 0;  // token index carrying the tag
  std::size_t referent_utterance = 0;
  std::size_t referent_position = 0;
  std::size_t distance = 0;
  std::string entity;
  std::string pronoun;
};

struct SynthCorpus {
  std::vector<Conversation> conversations;
  std::vector<SynthDp> dropped;
  SynthInventory inventory;
};

inline SynthInventory make_inventory(const SynthConfig& cfg) {
  SynthInventory inv;
  for (const auto& p : cfg.pronouns) {
    const EntityAttributes a = attributes_for(p);
    for (std::size_t k = 0; k < cfg.entities_per_pronoun; ++k) {
      SynthEntity e{"e" + std::to_string(inv.entities.size()), a, pronoun_for(a)};
      inv.by_token.emplace(e.token, inv.entities.size());
      inv.entities.push_back(std::move(e));
    }
  }
  for (std::size_t k = 0; k < cfg.topics; ++k) inv.topics.push_back("t" + std::to_string(k));
  for (std::size_t k = 0; k < cfg.verbs; ++k) inv.verbs.push_back("v" + std::to_string(k));
  for (std::size_t k = 0; k < cfg.fillers; ++k) inv.fillers.push_back("w" + std::to_string(k));
  return inv;
}

inline SynthCorpus generate(const SynthConfig& cfg, const TagSet& tags) {
  cfg.validate();
  for (const auto& p : cfg.pronouns) {
    if (tags.find(p) < 0) throw ConfigError("synth: pronoun '" + p + "' is not in the tag set");
  }
  SynthCorpus out;
  out.inventory = make_inventory(cfg);
  const SynthInventory& inv = out.inventory;
  Rng rng(cfg.seed);

  struct Pair {
    std::size_t topic;
    std::size_t entity;
    std::size_t position;  // index of the entity token
    bool referenced = false;
  };
  struct Plan {
    bool drop = false;
    std::vector<Pair> pairs;
    std::size_t verb_position = 0;
  };

  for (std::size_t c = 0; c < cfg.conversations; ++c) {
    std::vector<std::size_t> topic_pool(inv.topics.size());
    for (std::size_t i = 0; i < topic_pool.size(); ++i) topic_pool[i] = i;
    rng.shuffle(topic_pool);
    std::vector<std::size_t> entity_pool(inv.entities.size());
    for (std::size_t i = 0; i < entity_pool.size(); ++i) entity_pool[i] = i;
    rng.shuffle(entity_pool);
    std::size_t next_topic = 0, next_entity = 0;

    Conversation conv;
    conv.id = "synth-" + std::to_string(cfg.seed) + "-" + std::to_string(c);
    std::vector<Plan> plans;
    const std::size_t first_dp = out.dropped.size();

    for (std::size_t t = 0; t < cfg.utterances; ++t) {
      Utterance utt;
      Plan plan;
      if (rng.uniform() < cfg.leading_filler_probability) {
        utt.tokens.push_back(inv.fillers[rng.below(inv.fillers.size())]);
      }
      const std::size_t verb = rng.below(inv.verbs.size());

      bool made_drop = false;
      if (rng.uniform() < cfg.drop_probability) {
        const bool outside = rng.uniform() < cfg.out_of_window_fraction;
        const std::size_t distance = outside ? kContextBefore + 1 + rng.below(2)
                                             : cfg.min_distance + rng.below(cfg.max_distance - cfg.min_distance + 1);
        if (t >= distance && !plans[t - distance].drop) {
          auto& ref_pairs = plans[t - distance].pairs;
          std::vector<std::size_t> free;
          for (std::size_t p = 0; p < ref_pairs.size(); ++p)
            if (!ref_pairs[p].referenced) free.push_back(p);
          if (!free.empty()) {
            Pair& ref = ref_pairs[free[rng.below(free.size())]];
            ref.referenced = true;
            utt.tokens.push_back(inv.topics[ref.topic]);
            plan.verb_position = utt.tokens.size();
            utt.tokens.push_back(inv.verbs[verb]);
            plan.drop = true;
            made_drop = true;
            const SynthEntity& ent = inv.entities[ref.entity];
            out.dropped.push_back({c, t, plan.verb_position, t - distance, ref.position, distance, ent.token,
                                   ent.pronoun});
          }
        }
      }
      if (!made_drop) {
        for (std::size_t p = 0; p < cfg.pairs_per_mention; ++p) {
          Pair pair{topic_pool[next_topic++], entity_pool[next_entity++], 0};
          utt.tokens.push_back(inv.topics[pair.topic]);
          pair.position = utt.tokens.size();
          utt.tokens.push_back(inv.entities[pair.entity].token);
          if (p == 0) {
            plan.verb_position = utt.tokens.size();
            utt.tokens.push_back(inv.verbs[verb]);
          }
          plan.pairs.push_back(pair);
        }
      }
      const std::size_t trailing = rng.below(cfg.max_trailing_fillers + 1);
      for (std::size_t k = 0; k < trailing; ++k) utt.tokens.push_back(inv.fillers[rng.below(inv.fillers.size())]);
      utt.tags.assign(utt.tokens.size(), TagSet::kNone);
      if (plan.drop) utt.tags[plan.verb_position] = tags.find(out.dropped.back().pronoun);
      conv.utterances.push_back(std::move(utt));
      plans.push_back(std::move(plan));
    }

    // Distractor utterances in a DP's window borrow the DP sentence's verb.
    for (std::size_t d = first_dp; d < out.dropped.size(); ++d) {
      const SynthDp& dp = out.dropped[d];
      const std::string& verb = conv.utterances[dp.utterance].tokens[dp.position];
      for (std::size_t i : context_window(dp.utterance, conv.utterances.size())) {
        if (i == dp.referent_utterance || plans[i].drop) continue;
        if (rng.uniform() < cfg.distractor_overlap) conv.utterances[i].tokens[plans[i].verb_position] = verb;
      }
    }
    out.conversations.push_back(std::move(conv));
  }
  return out;
}

}  // namespace ndpr
