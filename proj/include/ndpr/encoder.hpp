#pragma once

// GRU cells, bidirectional sentence encoders (plain and pronoun-centred) and
// construction of the sentence/word context memories.

#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ndpr/autodiff.hpp"

namespace ndpr {

using ad::Parameter;
using ad::ParameterSet;
using ad::Tape;
using ad::Tensor;

enum class EncoderMode { BiGru, PcBiGru };

inline const char* to_string(EncoderMode m) { return m == EncoderMode::BiGru ? "bigru" : "pc-bigru"; }

inline EncoderMode parse_encoder_mode(const std::string& s) {
  if (s == "bigru") return EncoderMode::BiGru;
  if (s == "pc-bigru") return EncoderMode::PcBiGru;
  throw ConfigError("unknown encoder mode '" + s + "' (expected bigru|pc-bigru)");
}

// Gates: z (update), r (reset), h (candidate).
//   z = sigmoid(W_z x + U_z h + b_z)
//   r = sigmoid(W_r x + U_r h + b_r)
//   c = tanh(W_h x + U_h (r * h) + b_h)
//   h' = (1 - z) * h + z * c
struct GruCell {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Parameter* W_z = nullptr;
  Parameter* W_r = nullptr;
  Parameter* W_h = nullptr;
  Parameter* U_z = nullptr;
  Parameter* U_r = nullptr;
  Parameter* U_h = nullptr;
  Parameter* b_z = nullptr;
  Parameter* b_r = nullptr;
  Parameter* b_h = nullptr;

  static GruCell create(ParameterSet& params, const std::string& prefix, std::size_t input_dim,
                        std::size_t hidden_dim) {
    GruCell c;
    c.input_dim = input_dim;
    c.hidden_dim = hidden_dim;
    c.W_z = &params.add(prefix + ".W_z", hidden_dim, input_dim);
    c.W_r = &params.add(prefix + ".W_r", hidden_dim, input_dim);
    c.W_h = &params.add(prefix + ".W_h", hidden_dim, input_dim);
    c.U_z = &params.add(prefix + ".U_z", hidden_dim, hidden_dim);
    c.U_r = &params.add(prefix + ".U_r", hidden_dim, hidden_dim);
    c.U_h = &params.add(prefix + ".U_h", hidden_dim, hidden_dim);
    c.b_z = &params.add(prefix + ".b_z", hidden_dim, 1);
    c.b_r = &params.add(prefix + ".b_r", hidden_dim, 1);
    c.b_h = &params.add(prefix + ".b_h", hidden_dim, 1);
    return c;
  }

  // Binds to parameters that already exist in `params` (e.g. after loading).
  static GruCell bind(ParameterSet& params, const std::string& prefix) {
    GruCell c;
    c.W_z = &params.at(prefix + ".W_z");
    c.W_r = &params.at(prefix + ".W_r");
    c.W_h = &params.at(prefix + ".W_h");
    c.U_z = &params.at(prefix + ".U_z");
    c.U_r = &params.at(prefix + ".U_r");
    c.U_h = &params.at(prefix + ".U_h");
    c.b_z = &params.at(prefix + ".b_z");
    c.b_r = &params.at(prefix + ".b_r");
    c.b_h = &params.at(prefix + ".b_h");
    c.hidden_dim = c.W_z->rows;
    c.input_dim = c.W_z->cols;
    return c;
  }
};

inline Tensor gru_step(const GruCell& cell, Tensor x, Tensor h_prev) {
  if (x.size() != cell.input_dim || x.cols() != 1) {
    throw ShapeError("gru_step: input is " + ad::shape_str(x.rows(), x.cols()) + ", cell expects " +
                     std::to_string(cell.input_dim) + "x1");
  }
  if (h_prev.size() != cell.hidden_dim || h_prev.cols() != 1) {
    throw ShapeError("gru_step: hidden state is " + ad::shape_str(h_prev.rows(), h_prev.cols()) +
                     ", cell expects " + std::to_string(cell.hidden_dim) + "x1");
  }
  Tape& t = *x.tape();
  using namespace ad;
  const Tensor z = sigmoid(add(add(matmul(t.param(*cell.W_z), x), matmul(t.param(*cell.U_z), h_prev)),
                               t.param(*cell.b_z)));
  const Tensor r = sigmoid(add(add(matmul(t.param(*cell.W_r), x), matmul(t.param(*cell.U_r), h_prev)),
                               t.param(*cell.b_r)));
  const Tensor c = tanh(add(add(matmul(t.param(*cell.W_h), x), matmul(t.param(*cell.U_h), mul(r, h_prev))),
                            t.param(*cell.b_h)));
  // (1 - z) * h + z * c  ==  h + z * (c - h)
  return add(h_prev, mul(z, sub(c, h_prev)));
}

struct BiGruEncoder {
  GruCell forward;
  GruCell backward;

  static BiGruEncoder create(ParameterSet& params, const std::string& prefix, std::size_t input_dim,
                             std::size_t hidden_dim) {
    return {GruCell::create(params, prefix + ".fwd", input_dim, hidden_dim),
            GruCell::create(params, prefix + ".bwd", input_dim, hidden_dim)};
  }
  static BiGruEncoder bind(ParameterSet& params, const std::string& prefix) {
    return {GruCell::bind(params, prefix + ".fwd"), GruCell::bind(params, prefix + ".bwd")};
  }
  std::size_t hidden_dim() const { return forward.hidden_dim; }
};

struct EncodedSentence {
  EncoderMode mode = EncoderMode::BiGru;
  std::vector<Tensor> forward;   // ->h_n
  std::vector<Tensor> backward;  // <-h_n
  std::vector<Tensor> states;    // h_n, 2d each
  std::size_t size() const { return states.size(); }
};

inline std::vector<Tensor> embed_tokens(Tape& tape, Parameter& table, std::span<const int> ids) {
  std::vector<Tensor> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0) throw ShapeError("embedding_lookup: negative token id");
    out.push_back(tape.embedding_row(table, static_cast<std::size_t>(id)));
  }
  return out;
}

// Runs both directions over pre-embedded tokens and combines per `mode`:
//   bigru:    h_n = [<-h_n, ->h_n]
//   pc-bigru: h_n = [<-h_n, ->h_{n-1}], with ->h_0 = 0
inline EncodedSentence encode_sentence(const BiGruEncoder& enc, std::span<const Tensor> inputs,
                                       EncoderMode mode) {
  if (inputs.empty()) throw DataError("encode: empty sentence");
  Tape& tape = *inputs.front().tape();
  const std::size_t d = enc.hidden_dim();
  const std::size_t n = inputs.size();
  EncodedSentence out;
  out.mode = mode;
  out.forward.resize(n);
  out.backward.resize(n);
  const Tensor zero = tape.zeros(d, 1);
  Tensor h = zero;
  for (std::size_t i = 0; i < n; ++i) {
    h = gru_step(enc.forward, inputs[i], h);
    out.forward[i] = h;
  }
  h = zero;
  for (std::size_t i = n; i-- > 0;) {
    h = gru_step(enc.backward, inputs[i], h);
    out.backward[i] = h;
  }
  out.states.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (mode == EncoderMode::BiGru) {
      out.states.push_back(tape.concat({out.backward[i], out.forward[i]}));
    } else {
      out.states.push_back(tape.concat({out.backward[i], i == 0 ? zero : out.forward[i - 1]}));
    }
  }
  return out;
}

inline EncodedSentence encode_bigru(const BiGruEncoder& enc, std::span<const Tensor> inputs) {
  return encode_sentence(enc, inputs, EncoderMode::BiGru);
}

inline EncodedSentence encode_pc_bigru(const BiGruEncoder& enc, std::span<const Tensor> inputs) {
  return encode_sentence(enc, inputs, EncoderMode::PcBiGru);
}

// Sentence memory cs_i = [<-cs_i, ->cs_i] (final state of each direction) and
// word memory cw_{i,j} = [<-h_j, ->h_j] for every context utterance.
struct ContextMemory {
  std::vector<Tensor> sentences;
  std::vector<std::vector<Tensor>> words;

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
  std::size_t length(std::size_t i) const { return words[i].size(); }
};

inline constexpr std::size_t kMaxContext = 7;

inline ContextMemory encode_context(const BiGruEncoder& enc, Parameter& table,
                                    const std::vector<std::vector<int>>& utterances, Tape& tape) {
  if (utterances.size() > kMaxContext) {
    throw DataError("encode_context: " + std::to_string(utterances.size()) +
                    " context utterances exceeds the window of " + std::to_string(kMaxContext));
  }
  ContextMemory mem;
  mem.sentences.reserve(utterances.size());
  mem.words.reserve(utterances.size());
  for (const auto& utt : utterances) {
    const auto inputs = embed_tokens(tape, table, utt);
    EncodedSentence e = encode_sentence(enc, inputs, EncoderMode::BiGru);
    mem.sentences.push_back(tape.concat({e.backward.front(), e.forward.back()}));
    mem.words.push_back(std::move(e.states));
  }
  return mem;
}

// Loads whitespace-separated "token v1 ... vE" lines into matching rows of
// `table`. Returns the number of rows overwritten.
inline std::size_t load_pretrained_embeddings(const std::string& path,
                                              const std::unordered_map<std::string, int>& token_ids,
                                              Parameter& table) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  std::size_t loaded = 0;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    row.clear();
    double v;
    while (ss >> v) row.push_back(v);
    if (!ss.eof()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed number");
    }
    if (row.size() != table.cols) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(table.cols) + " values, got " + std::to_string(row.size()));
    }
    auto it = token_ids.find(token);
    if (it == token_ids.end()) continue;
    std::copy(row.begin(), row.end(), table.value.begin() + static_cast<std::ptrdiff_t>(it->second * table.cols));
    ++loaded;
  }
  return loaded;
}

}  // namespace ndpr
