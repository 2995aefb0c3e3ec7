#pragma once

// Training loop: Adam on the summed per-sentence cross-entropy, per-epoch
// development evaluation, and selection of the best-scoring epoch.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ndpr/evaluation.hpp"
#include "ndpr/model.hpp"

namespace ndpr {

struct TrainConfig {
  ModelConfig model;
  double lr = 3e-4;
  std::size_t epochs = 8;
  std::uint64_t seed = 1;
  std::size_t min_count = 1;
  std::size_t eval_every = 1;
  std::size_t batch_size = 1;  // sentences per optimizer step
  double clip_norm = 0.0;      // 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double dev_fraction = 0.167;  // held out when no dev split is supplied
  std::string embeddings_file;  // optional word2vec-style text file, "token v1 ... vE" per line

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
    if (epochs == 0) throw ConfigError("train.epochs must be positive");
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (eval_every == 0) throw ConfigError("train.eval_every must be positive");
    if (clip_norm < 0.0) throw ConfigError("train.clip_norm must be >= 0");
    if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw ConfigError("train.dev_fraction must be in (0, 1)");
    if (!(model.dropout >= 0.0 && model.dropout < 1.0)) throw ConfigError("train.dropout must be in [0, 1)");
    if (model.hidden == 0 || model.embedding == 0) throw ConfigError("model dims must be positive");
  }

  nlohmann::json to_json() const {
    return {{"model", model.to_json()},
            {"lr", lr},
            {"epochs", epochs},
            {"seed", seed},
            {"min_count", min_count},
            {"eval_every", eval_every},
            {"batch_size", batch_size},
            {"clip_norm", clip_norm},
            {"beta1", beta1},
            {"beta2", beta2},
            {"eps", eps},
            {"dev_fraction", dev_fraction},
            {"embeddings_file", embeddings_file}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.model = ModelConfig::from_json(j.at("model"));
    c.lr = j.at("lr").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.min_count = j.at("min_count").get<std::size_t>();
    c.eval_every = j.at("eval_every").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.eps = j.at("eps").get<double>();
    c.dev_fraction = j.at("dev_fraction").get<double>();
    c.embeddings_file = j.value("embeddings_file", std::string());
    return c;
  }
};

struct NamedTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
};

struct Checkpoint {
  TrainConfig config;
  Vocabulary vocab;
  TagSet tags;
  std::vector<NamedTensor> tensors;
  double dev_f = 0.0;
  std::size_t epoch = 0;

  static std::vector<NamedTensor> snapshot(const ParameterSet& params) {
    std::vector<NamedTensor> out;
    out.reserve(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto& p = params[k];
      out.push_back({p.name, p.rows, p.cols, p.value});
    }
    return out;
  }

  NdprModel model() const {
    ParameterSet ps;
    for (const auto& t : tensors) {
      if (t.values.size() != t.rows * t.cols) throw CheckpointError("tensor '" + t.name + "' has wrong size");
      ps.add(t.name, t.rows, t.cols).value = t.values;
    }
    return NdprModel(config.model, std::move(ps));
  }

  std::vector<Example> examples(const std::vector<Conversation>& convs) const {
    return make_examples(convs, vocab);
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // summed over the epoch
  bool evaluated = false;
  double dev_f = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Trains from scratch. When `dev` is empty a seeded dev_fraction of the
// training conversations is held out. Returns the checkpoint of the epoch
// with the highest dev F (earliest epoch on ties).
inline TrainResult train(const TrainConfig& base, const std::vector<Conversation>& train_convs,
                         const std::vector<Conversation>& dev_convs, const TagSet& tags,
                         const EpochCallback& on_epoch = {}) {
  base.validate();
  if (train_convs.empty()) throw TrainingError("training set is empty");

  std::vector<Conversation> train_set = train_convs;
  std::vector<Conversation> dev_set = dev_convs;
  if (dev_set.empty()) {
    auto split = split_dev(train_convs, base.dev_fraction, base.seed);
    train_set = std::move(split.first);
    dev_set = std::move(split.second);
  }

  TrainConfig config = base;
  Vocabulary vocab = Vocabulary::build(train_set, config.min_count);
  config.model.vocab_size = vocab.size();
  config.model.tag_count = tags.size();

  const auto train_examples = make_examples(train_set, vocab);
  const auto dev_examples = make_examples(dev_set, vocab);
  if (train_examples.empty()) throw TrainingError("training set has no sentences");

  Rng master(config.seed);
  const std::uint64_t init_seed = master.next();
  Rng order_rng = master.fork(1);
  Rng dropout_rng = master.fork(2);

  NdprModel model(config.model, init_seed);
  if (!config.embeddings_file.empty()) {
    load_pretrained_embeddings(config.embeddings_file, vocab.index(), model.params().at("embedding"));
  }
  const ad::AdamOptions adam{config.lr, config.beta1, config.beta2, config.eps};

  TrainResult result;
  bool have_best = false;
  std::vector<std::size_t> order(train_examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Tape tape;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order);
    EpochLog log;
    log.epoch = epoch;
    std::size_t pending = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const Example& ex = train_examples[order[k]];
      double loss = 0.0;
      try {
        loss = model.accumulate_gradients(tape, ex, dropout_rng);
      } catch (const NumericalError& e) {
        throw TrainingError("non-finite value in epoch " + std::to_string(epoch) + ", conversation '" +
                            ex.conversation_id + "' sentence " + std::to_string(ex.sentence_index) + ": " +
                            e.what());
      }
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) + ", conversation '" +
                            ex.conversation_id + "' sentence " + std::to_string(ex.sentence_index));
      }
      log.train_loss += loss;
      if (++pending == config.batch_size || k + 1 == order.size()) {
        if (config.clip_norm > 0.0) ad::clip_grad_norm(model.params(), config.clip_norm);
        ad::adam_step(model.params(), adam);
        pending = 0;
      }
    }
    if (epoch % config.eval_every == 0 || epoch == config.epochs) {
      log.evaluated = true;
      log.dev_f = evaluate(model, dev_examples, tags).micro.f;
      if (!have_best || log.dev_f > result.best.dev_f) {
        have_best = true;
        result.best.dev_f = log.dev_f;
        result.best.epoch = epoch;
        result.best.tensors = Checkpoint::snapshot(model.params());
      }
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  result.best.config = config;
  result.best.vocab = std::move(vocab);
  result.best.tags = tags;
  return result;
}

}  // namespace ndpr
