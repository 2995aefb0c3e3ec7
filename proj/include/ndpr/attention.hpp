#pragma once

// Referent modelling: sentence-level attention over context utterances,
// DP-state update, per-utterance word-level attention, and the sentence-
// weighted referent representation.

#include <string>
#include <vector>

#include "ndpr/encoder.hpp"

namespace ndpr {

enum class AttentionMode { Full, SentenceOnly, WordOnly, None };

inline const char* to_string(AttentionMode m) {
  switch (m) {
    case AttentionMode::Full: return "full";
    case AttentionMode::SentenceOnly: return "sentence";
    case AttentionMode::WordOnly: return "word";
    case AttentionMode::None: return "none";
  }
  return "?";
}

inline AttentionMode parse_attention_mode(const std::string& s) {
  if (s == "full") return AttentionMode::Full;
  if (s == "sentence" || s == "sentence-only") return AttentionMode::SentenceOnly;
  if (s == "word" || s == "word-only") return AttentionMode::WordOnly;
  if (s == "none") return AttentionMode::None;
  throw ConfigError("unknown attention mode '" + s + "' (expected full|sentence|word|none)");
}

// W_update: 2d x 4d, b_update: 2d (DP-state update)
// w_rel: 1 x 2d, b_rel: 1 (word relevance)
// Pointers are null when the mode does not use them.
struct AttentionParams {
  Parameter* W_update = nullptr;
  Parameter* b_update = nullptr;
  Parameter* w_rel = nullptr;
  Parameter* b_rel = nullptr;

  static AttentionParams create(ParameterSet& params, AttentionMode mode, std::size_t hidden_dim) {
    AttentionParams a;
    const std::size_t d2 = 2 * hidden_dim;
    if (mode == AttentionMode::Full) {
      a.W_update = &params.add("attn.W_update", d2, 2 * d2);
      a.b_update = &params.add("attn.b_update", d2, 1);
    }
    if (mode == AttentionMode::Full || mode == AttentionMode::WordOnly) {
      a.w_rel = &params.add("attn.w_rel", 1, d2);
      a.b_rel = &params.add("attn.b_rel", 1, 1);
    }
    return a;
  }

  static AttentionParams bind(ParameterSet& params, AttentionMode mode) {
    AttentionParams a;
    if (mode == AttentionMode::Full) {
      a.W_update = &params.at("attn.W_update");
      a.b_update = &params.at("attn.b_update");
    }
    if (mode == AttentionMode::Full || mode == AttentionMode::WordOnly) {
      a.w_rel = &params.at("attn.w_rel");
      a.b_rel = &params.at("attn.b_rel");
    }
    return a;
  }
};

struct SentenceAttention {
  Tensor scores;   // rs_{n,.}; invalid when m = 0
  Tensor weights;  // as_{n,.}; invalid when m = 0
  Tensor summary;  // s_n
};

// rs_i = h^T cs_i, as = softmax(rs), s = sum_i as_i cs_i.
// With no context, s is the zero vector.
inline SentenceAttention sentence_attention(Tensor h, const ContextMemory& memory) {
  Tape& tape = *h.tape();
  SentenceAttention out;
  if (memory.empty()) {
    out.summary = tape.zeros(h.rows(), 1);
    return out;
  }
  std::vector<Tensor> scores;
  scores.reserve(memory.size());
  for (const Tensor& cs : memory.sentences) scores.push_back(ad::dot(h, cs));
  out.scores = tape.concat(scores);
  out.weights = ad::softmax(out.scores);
  out.summary = ad::weighted_sum(out.weights, memory.sentences);
  return out;
}

// hs = W_update [h; s] + b_update
inline Tensor update_dp_state(const AttentionParams& p, Tensor h, Tensor s) {
  Tape& tape = *h.tape();
  if (h.size() != s.size()) {
    throw ShapeError("update_dp_state: h is " + ad::shape_str(h.rows(), h.cols()) + ", s is " +
                     ad::shape_str(s.rows(), s.cols()));
  }
  return ad::add(ad::matmul(tape.param(*p.W_update), tape.concat({h, s})), tape.param(*p.b_update));
}

struct WordAttention {
  std::vector<Tensor> scores;     // rw_{n,i,.}
  std::vector<Tensor> weights;    // aw_{n,i,.}
  std::vector<Tensor> summaries;  // tw_{n,i}
};

// rw_{i,j} = w_rel (query * cw_{i,j}) + b_rel, normalised within each
// utterance; tw_i = sum_j aw_{i,j} cw_{i,j}.
inline WordAttention word_attention(const AttentionParams& p, Tensor query, const ContextMemory& memory) {
  Tape& tape = *query.tape();
  WordAttention out;
  const Tensor w = tape.param(*p.w_rel);
  const Tensor b = tape.param(*p.b_rel);
  std::vector<Tensor> scores;
  for (std::size_t i = 0; i < memory.size(); ++i) {
    const auto& words = memory.words[i];
    if (words.empty()) throw DataError("word_attention: context utterance " + std::to_string(i) + " is empty");
    scores.clear();
    for (const Tensor& cw : words) scores.push_back(ad::add(ad::matmul(w, ad::mul(query, cw)), b));
    Tensor rw = tape.concat(scores);
    Tensor aw = ad::softmax(rw);
    out.scores.push_back(rw);
    out.weights.push_back(aw);
    out.summaries.push_back(ad::weighted_sum(aw, words));
  }
  return out;
}

// w = sum_i as_i tw_i; zero when there is no context.
inline Tensor referent_representation(Tensor sentence_weights, std::span<const Tensor> summaries,
                                      std::size_t dim, Tape& tape) {
  if (summaries.empty()) return tape.zeros(dim, 1);
  return ad::weighted_sum(sentence_weights, summaries);
}

// Everything computed for one DP slot; tensors are invalid for stages the
// mode skips.
struct ReferentResult {
  SentenceAttention sentence;
  Tensor updated_state;  // hs_n
  WordAttention word;
  Tensor utterance_weights;  // weights used to combine tw (as, or uniform)
  Tensor feature;            // what the classifier sees next to h_n
};

// full:     w_n from the whole pipeline
// sentence: s_n
// word:     h_n queries the words directly; utterances weighted uniformly
// none:     no feature (invalid tensor)
inline ReferentResult referent_feature(AttentionMode mode, const AttentionParams& p, Tensor h,
                                       const ContextMemory& memory) {
  Tape& tape = *h.tape();
  ReferentResult r;
  switch (mode) {
    case AttentionMode::None:
      return r;
    case AttentionMode::SentenceOnly:
      r.sentence = sentence_attention(h, memory);
      r.feature = r.sentence.summary;
      return r;
    case AttentionMode::Full:
      r.sentence = sentence_attention(h, memory);
      if (memory.empty()) {
        r.feature = tape.zeros(h.rows(), 1);
        return r;
      }
      r.updated_state = update_dp_state(p, h, r.sentence.summary);
      r.word = word_attention(p, r.updated_state, memory);
      r.utterance_weights = r.sentence.weights;
      r.feature = referent_representation(r.utterance_weights, r.word.summaries, h.rows(), tape);
      return r;
    case AttentionMode::WordOnly: {
      if (memory.empty()) {
        r.feature = tape.zeros(h.rows(), 1);
        return r;
      }
      r.word = word_attention(p, h, memory);
      const std::vector<double> uniform(memory.size(), 1.0 / static_cast<double>(memory.size()));
      r.utterance_weights = tape.vector(uniform);
      r.feature = referent_representation(r.utterance_weights, r.word.summaries, h.rows(), tape);
      return r;
    }
  }
  throw ConfigError("referent_feature: unknown attention mode");
}

// Plain-value snapshot of one token's attention, for inspection output.
struct AttentionTrace {
  std::vector<double> sentence_scores;
  std::vector<double> sentence_weights;
  std::vector<std::vector<double>> word_scores;
  std::vector<std::vector<double>> word_weights;
  std::vector<double> utterance_weights;
  std::vector<double> sentence_summary;
  std::vector<double> updated_state;
  std::vector<std::vector<double>> utterance_summaries;
  std::vector<double> referent;

  static AttentionTrace capture(const ReferentResult& r) {
    AttentionTrace t;
    auto grab = [](Tensor x) { return x.valid() ? x.to_vector() : std::vector<double>{}; };
    t.sentence_scores = grab(r.sentence.scores);
    t.sentence_weights = grab(r.sentence.weights);
    t.sentence_summary = grab(r.sentence.summary);
    t.updated_state = grab(r.updated_state);
    for (const Tensor& x : r.word.scores) t.word_scores.push_back(x.to_vector());
    for (const Tensor& x : r.word.weights) t.word_weights.push_back(x.to_vector());
    for (const Tensor& x : r.word.summaries) t.utterance_summaries.push_back(x.to_vector());
    t.utterance_weights = grab(r.utterance_weights);
    t.referent = grab(r.feature);
    return t;
  }
};

}  // namespace ndpr
