#pragma once

// The full dropped-pronoun recovery network: embeddings, sentence and
// context encoders, referent modelling and the output classifier.

#include <string>
#include <vector>

#include <json.hpp>

#include "ndpr/attention.hpp"
#include "ndpr/classifier.hpp"
#include "ndpr/data.hpp"
#include "ndpr/encoder.hpp"

namespace ndpr {

struct ModelConfig {
  EncoderMode encoder = EncoderMode::BiGru;
  AttentionMode attention = AttentionMode::Full;
  std::size_t hidden = 150;            // d
  std::size_t embedding = 300;         // E
  std::size_t classifier_hidden = 0;   // H; 0 means 2d
  double init_range = 0.08;
  double dropout = 0.2;
  bool share_context_encoder = true;
  std::size_t vocab_size = 0;
  std::size_t tag_count = 0;

  std::size_t resolved_classifier_hidden() const {
    return classifier_hidden == 0 ? 2 * hidden : classifier_hidden;
  }
  std::size_t classifier_input() const {
    return attention == AttentionMode::None ? 2 * hidden : 4 * hidden;
  }

  void validate() const {
    if (hidden == 0 || embedding == 0) throw ConfigError("model dims must be positive");
    if (vocab_size < 2) throw ConfigError("vocabulary must contain at least the reserved ids");
    if (tag_count < 2) throw ConfigError("tag set must contain at least two tags");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    if (!(init_range > 0.0)) throw ConfigError("init range must be positive");
  }

  nlohmann::json to_json() const {
    return {{"encoder", to_string(encoder)},
            {"attention", to_string(attention)},
            {"hidden", hidden},
            {"embedding", embedding},
            {"classifier_hidden", classifier_hidden},
            {"init_range", init_range},
            {"dropout", dropout},
            {"share_context_encoder", share_context_encoder},
            {"vocab_size", vocab_size},
            {"tag_count", tag_count}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.encoder = parse_encoder_mode(j.at("encoder").get<std::string>());
    c.attention = parse_attention_mode(j.at("attention").get<std::string>());
    c.hidden = j.at("hidden").get<std::size_t>();
    c.embedding = j.at("embedding").get<std::size_t>();
    c.classifier_hidden = j.at("classifier_hidden").get<std::size_t>();
    c.init_range = j.at("init_range").get<double>();
    c.dropout = j.at("dropout").get<double>();
    c.share_context_encoder = j.at("share_context_encoder").get<bool>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.tag_count = j.at("tag_count").get<std::size_t>();
    return c;
  }
};

// Everything recorded for one sentence.
struct ForwardPass {
  EncodedSentence sentence;
  ContextMemory memory;
  std::vector<ReferentResult> referents;  // per token
  std::vector<Tensor> logits;             // per token
};

class NdprModel {
 public:
  // Fresh model: weights uniform in +-init_range, biases zero.
  NdprModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    create();
    Rng rng(seed);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter& p = params_[k];
      if (is_bias(p.name)) continue;
      for (double& v : p.value) v = rng.uniform(-config_.init_range, config_.init_range);
    }
  }

  // Adopts an existing parameter set (e.g. from a checkpoint); every
  // expected tensor must be present with the expected shape.
  NdprModel(const ModelConfig& config, ParameterSet&& params) : config_(config) {
    config_.validate();
    create();
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter& dst = params_[k];
      const Parameter* src = params.find(dst.name);
      if (src == nullptr) throw CheckpointError("missing tensor '" + dst.name + "'");
      if (src->rows != dst.rows || src->cols != dst.cols) {
        throw CheckpointError("tensor '" + dst.name + "' has shape " + ad::shape_str(src->rows, src->cols) +
                              ", expected " + ad::shape_str(dst.rows, dst.cols));
      }
      dst.value = src->value;
    }
    if (params.size() != params_.size()) throw CheckpointError("checkpoint holds unexpected tensors");
  }

  NdprModel(const NdprModel&) = delete;
  NdprModel& operator=(const NdprModel&) = delete;
  NdprModel(NdprModel&&) = default;
  NdprModel& operator=(NdprModel&&) = default;

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  Parameter& embedding() { return *embedding_; }

  ForwardPass forward(Tape& tape, const Example& ex, bool train, Rng& rng) const {
    if (ex.tokens.empty()) throw DataError("forward: empty sentence");
    ForwardPass fp;
    const auto inputs = embed_tokens(tape, *embedding_, ex.tokens);
    fp.sentence = encode_sentence(sentence_encoder_, inputs, config_.encoder);
    if (config_.attention != AttentionMode::None) {
      fp.memory = encode_context(context_encoder_, *embedding_, ex.context, tape);
    }
    fp.referents.reserve(ex.tokens.size());
    fp.logits.reserve(ex.tokens.size());
    for (const Tensor& h : fp.sentence.states) {
      ReferentResult r = referent_feature(config_.attention, attention_, h, fp.memory);
      const Tensor input = r.feature.valid() ? tape.concat({h, r.feature}) : h;
      fp.logits.push_back(classifier_logits(classifier_, input, config_.dropout, train, rng));
      fp.referents.push_back(std::move(r));
    }
    return fp;
  }

  // Summed cross-entropy of one sentence; accumulates parameter gradients.
  double accumulate_gradients(Tape& tape, const Example& ex, Rng& rng) const {
    tape.clear();
    ForwardPass fp = forward(tape, ex, true, rng);
    Tensor loss = sequence_loss(fp.logits, ex.tags);
    tape.backward(loss);
    return loss.item();
  }

  // Loss without dropout and without touching gradients.
  double loss(const Example& ex) const {
    Tape tape;
    Rng rng(0);
    ForwardPass fp = forward(tape, ex, false, rng);
    return sequence_loss(fp.logits, ex.tags).item();
  }

  std::vector<std::vector<double>> distributions(const Example& ex) const {
    Tape tape;
    Rng rng(0);
    ForwardPass fp = forward(tape, ex, false, rng);
    std::vector<std::vector<double>> out;
    for (const Tensor& z : fp.logits) {
      std::vector<double> p(z.size());
      Tape::softmax_into(z.values().data(), p.data(), z.size());
      out.push_back(std::move(p));
    }
    return out;
  }

  std::vector<int> predict(const Example& ex, Tape& tape) const {
    tape.clear();
    Rng rng(0);
    ForwardPass fp = forward(tape, ex, false, rng);
    std::vector<int> tags;
    tags.reserve(fp.logits.size());
    for (const Tensor& z : fp.logits) {
      auto v = z.values();
      tags.push_back(static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin()));
    }
    return tags;
  }

  std::vector<int> predict(const Example& ex) const {
    Tape tape;
    return predict(ex, tape);
  }

  struct Inspection {
    std::vector<int> predicted;
    std::vector<std::vector<double>> distributions;
    std::vector<AttentionTrace> traces;
  };

  Inspection inspect(const Example& ex) const {
    Tape tape;
    Rng rng(0);
    ForwardPass fp = forward(tape, ex, false, rng);
    Inspection out;
    for (std::size_t n = 0; n < fp.logits.size(); ++n) {
      std::vector<double> p(fp.logits[n].size());
      Tape::softmax_into(fp.logits[n].values().data(), p.data(), p.size());
      out.predicted.push_back(static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
      out.distributions.push_back(std::move(p));
      out.traces.push_back(AttentionTrace::capture(fp.referents[n]));
    }
    return out;
  }

  static bool is_bias(const std::string& name) {
    const auto dot = name.rfind('.');
    const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
    return !leaf.empty() && leaf[0] == 'b';
  }

 private:
  void create() {
    const std::size_t d = config_.hidden;
    embedding_ = &params_.add("embedding", config_.vocab_size, config_.embedding);
    sentence_encoder_ = BiGruEncoder::create(params_, "encoder", config_.embedding, d);
    if (config_.attention != AttentionMode::None && !config_.share_context_encoder) {
      context_encoder_ = BiGruEncoder::create(params_, "context_encoder", config_.embedding, d);
    } else {
      context_encoder_ = sentence_encoder_;
    }
    attention_ = AttentionParams::create(params_, config_.attention, d);
    classifier_ = ClassifierParams::create(params_, config_.classifier_input(),
                                           config_.resolved_classifier_hidden(), config_.tag_count);
  }

  ModelConfig config_;
  ParameterSet params_;
  Parameter* embedding_ = nullptr;
  BiGruEncoder sentence_encoder_;
  BiGruEncoder context_encoder_;
  AttentionParams attention_;
  ClassifierParams classifier_;
};

}  // namespace ndpr
