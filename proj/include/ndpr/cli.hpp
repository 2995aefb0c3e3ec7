#pragma once

// Command-line front end: train, eval, predict, inspect-attention, gen-synth.
//
// Settings use one flat dotted-key schema ("train.lr", "model.encoder", ...)
// both in the JSON config file and on the command line (--set key=value, or
// the dedicated shortcut flags). Precedence: defaults < config file < flags.
// Failures print a single line "ndpr: error[<kind>]: <message>" to stderr
// and return a nonzero status.

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "ndpr/checkpoint.hpp"
#include "ndpr/evaluation.hpp"
#include "ndpr/synthgen.hpp"
#include "ndpr/training.hpp"

namespace ndpr::cli {

// Everything a subcommand may read, after defaults, file and flags.
struct Settings {
  TrainConfig train;
  SynthConfig synth;
  std::string tagset = "default";
  std::string train_path;
  std::string dev_path;
  std::string test_path;
};

struct RunConfig {
  std::string subcommand;
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;  // in flag order
  Settings settings;
};

namespace detail {

enum class KeyType { String, UInt, Real, Bool };

struct KeySpec {
  KeyType type;
  std::function<void(Settings&, const nlohmann::json&)> apply;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline const std::map<std::string, KeySpec>& schema() {
  using J = nlohmann::json;
  static const std::map<std::string, KeySpec> keys = {
      {"model.encoder", {KeyType::String, [](Settings& s, const J& v) { s.train.model.encoder = parse_encoder_mode(v.get<std::string>()); }}},
      {"model.attention", {KeyType::String, [](Settings& s, const J& v) { s.train.model.attention = parse_attention_mode(v.get<std::string>()); }}},
      {"model.hidden", {KeyType::UInt, [](Settings& s, const J& v) { s.train.model.hidden = v.get<std::size_t>(); }}},
      {"model.embedding", {KeyType::UInt, [](Settings& s, const J& v) { s.train.model.embedding = v.get<std::size_t>(); }}},
      {"model.classifier_hidden", {KeyType::UInt, [](Settings& s, const J& v) { s.train.model.classifier_hidden = v.get<std::size_t>(); }}},
      {"model.init_range", {KeyType::Real, [](Settings& s, const J& v) { s.train.model.init_range = v.get<double>(); }}},
      {"model.share_context_encoder", {KeyType::Bool, [](Settings& s, const J& v) { s.train.model.share_context_encoder = v.get<bool>(); }}},
      {"model.embeddings_file", {KeyType::String, [](Settings& s, const J& v) { s.train.embeddings_file = v.get<std::string>(); }}},
      {"train.lr", {KeyType::Real, [](Settings& s, const J& v) { s.train.lr = v.get<double>(); }}},
      {"train.epochs", {KeyType::UInt, [](Settings& s, const J& v) { s.train.epochs = v.get<std::size_t>(); }}},
      {"train.seed", {KeyType::UInt, [](Settings& s, const J& v) { s.train.seed = v.get<std::uint64_t>(); }}},
      {"train.dropout", {KeyType::Real, [](Settings& s, const J& v) { s.train.model.dropout = v.get<double>(); }}},
      {"train.min_count", {KeyType::UInt, [](Settings& s, const J& v) { s.train.min_count = v.get<std::size_t>(); }}},
      {"train.eval_every", {KeyType::UInt, [](Settings& s, const J& v) { s.train.eval_every = v.get<std::size_t>(); }}},
      {"train.batch_size", {KeyType::UInt, [](Settings& s, const J& v) { s.train.batch_size = v.get<std::size_t>(); }}},
      {"train.clip_norm", {KeyType::Real, [](Settings& s, const J& v) { s.train.clip_norm = v.get<double>(); }}},
      {"train.beta1", {KeyType::Real, [](Settings& s, const J& v) { s.train.beta1 = v.get<double>(); }}},
      {"train.beta2", {KeyType::Real, [](Settings& s, const J& v) { s.train.beta2 = v.get<double>(); }}},
      {"train.eps", {KeyType::Real, [](Settings& s, const J& v) { s.train.eps = v.get<double>(); }}},
      {"train.dev_fraction", {KeyType::Real, [](Settings& s, const J& v) { s.train.dev_fraction = v.get<double>(); }}},
      {"data.train", {KeyType::String, [](Settings& s, const J& v) { s.train_path = v.get<std::string>(); }}},
      {"data.dev", {KeyType::String, [](Settings& s, const J& v) { s.dev_path = v.get<std::string>(); }}},
      {"data.test", {KeyType::String, [](Settings& s, const J& v) { s.test_path = v.get<std::string>(); }}},
      {"data.tagset", {KeyType::String, [](Settings& s, const J& v) { s.tagset = v.get<std::string>(); }}},
      {"synth.seed", {KeyType::UInt, [](Settings& s, const J& v) { s.synth.seed = v.get<std::uint64_t>(); }}},
      {"synth.conversations", {KeyType::UInt, [](Settings& s, const J& v) { s.synth.conversations = v.get<std::size_t>(); }}},
      {"synth.utterances", {KeyType::UInt, [](Settings& s, const J& v) { s.synth.utterances = v.get<std::size_t>(); }}},
      {"synth.drop_probability", {KeyType::Real, [](Settings& s, const J& v) { s.synth.drop_probability = v.get<double>(); }}},
      {"synth.min_distance", {KeyType::UInt, [](Settings& s, const J& v) { s.synth.min_distance = v.get<std::size_t>(); }}},
      {"synth.max_distance", {KeyType::UInt, [](Settings& s, const J& v) { s.synth.max_distance = v.get<std::size_t>(); }}},
      {"synth.out_of_window_fraction", {KeyType::Real, [](Settings& s, const J& v) { s.synth.out_of_window_fraction = v.get<double>(); }}},
      {"synth.distractor_overlap", {KeyType::Real, [](Settings& s, const J& v) { s.synth.distractor_overlap = v.get<double>(); }}},
      {"synth.pronouns", {KeyType::String, [](Settings& s, const J& v) { s.synth.pronouns = split_list(v.get<std::string>()); }}},
      {"synth.entities_per_pronoun", {KeyType::UInt, [](Settings& s, const J& v) { s.synth.entities_per_pronoun = v.get<std::size_t>(); }}},
      {"synth.pairs_per_mention", {KeyType::UInt, [](Settings& s, const J& v) { s.synth.pairs_per_mention = v.get<std::size_t>(); }}},
      {"synth.topics", {KeyType::UInt, [](Settings& s, const J& v) { s.synth.topics = v.get<std::size_t>(); }}},
      {"synth.verbs", {KeyType::UInt, [](Settings& s, const J& v) { s.synth.verbs = v.get<std::size_t>(); }}},
      {"synth.fillers", {KeyType::UInt, [](Settings& s, const J& v) { s.synth.fillers = v.get<std::size_t>(); }}},
      {"synth.max_trailing_fillers", {KeyType::UInt, [](Settings& s, const J& v) { s.synth.max_trailing_fillers = v.get<std::size_t>(); }}},
      {"synth.leading_filler_probability", {KeyType::Real, [](Settings& s, const J& v) { s.synth.leading_filler_probability = v.get<double>(); }}},
  };
  return keys;
}

// Converts a command-line string to the JSON type the key expects.
inline nlohmann::json parse_flag_value(const std::string& key, KeyType type, const std::string& raw) {
  try {
    std::size_t used = 0;
    switch (type) {
      case KeyType::String:
        return raw;
      case KeyType::UInt: {
        if (raw.empty() || raw[0] == '-') break;
        const unsigned long long v = std::stoull(raw, &used);
        if (used != raw.size()) break;
        return static_cast<std::uint64_t>(v);
      }
      case KeyType::Real: {
        const double v = std::stod(raw, &used);
        if (used != raw.size()) break;
        return v;
      }
      case KeyType::Bool:
        if (raw == "true" || raw == "1") return true;
        if (raw == "false" || raw == "0") return false;
        break;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("invalid value '" + raw + "' for " + key);
}

inline void apply_value(Settings& s, const std::string& key, const nlohmann::json& value) {
  const auto& keys = schema();
  auto it = keys.find(key);
  if (it == keys.end()) throw ConfigError("unknown config key '" + key + "'");
  const KeyType t = it->second.type;
  const bool ok = (t == KeyType::String && value.is_string()) ||
                  (t == KeyType::UInt && value.is_number_unsigned()) ||
                  (t == KeyType::Real && value.is_number()) || (t == KeyType::Bool && value.is_boolean());
  if (!ok) throw ConfigError("config key '" + key + "' has the wrong type");
  it->second.apply(s, value);
}

}  // namespace detail

// Applies the config file (if any) then the overrides, in order.
inline Settings resolve_settings(const std::string& config_path,
                                 const std::vector<std::pair<std::string, std::string>>& overrides) {
  Settings s;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file '" + config_path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config file '" + config_path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a flat JSON object");
    for (const auto& [key, value] : j.items()) detail::apply_value(s, key, value);
  }
  for (const auto& [key, raw] : overrides) {
    const auto& keys = detail::schema();
    auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError("unknown config key '" + key + "'");
    detail::apply_value(s, key, detail::parse_flag_value(key, it->second.type, raw));
  }
  return s;
}

inline std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& [k, v] : detail::schema()) out.push_back(k);
  return out;
}

inline std::shared_ptr<spdlog::logger> logger() {
  auto log = spdlog::get("ndpr");
  if (!log) {
    log = spdlog::stderr_logger_mt("ndpr");
    log->set_pattern("[%l] %v");
    const char* level = std::getenv("NDPR_LOG");
    log->set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
  }
  return log;
}

namespace detail {

inline LoadedCorpus load_logged(const std::string& path, const TagSet& tags) {
  LoadedCorpus c = load_corpus(path, tags);
  for (const auto& w : c.warnings) logger()->warn("{}: {}", path, w);
  logger()->info("{}: {} conversations, {} sentences, {} dropped pronouns", path, c.conversations.size(),
                 c.sentence_count(), c.dropped_pronouns());
  return c;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
}

inline std::string require(const std::string& value, const std::string& what) {
  if (value.empty()) throw ConfigError("missing " + what);
  return value;
}

}  // namespace detail

inline int cmd_train(const RunConfig& rc, const std::string& out_path) {
  const Settings& s = rc.settings;
  const TagSet tags = TagSet::from_spec(s.tagset);
  const auto train_c = detail::load_logged(detail::require(s.train_path, "training corpus (--train / data.train)"), tags);
  std::vector<Conversation> dev;
  if (!s.dev_path.empty()) dev = detail::load_logged(s.dev_path, tags).conversations;
  const std::string out = detail::require(out_path, "output checkpoint path (--out)");

  TrainConfig cfg = s.train;
  nlohmann::json log = nlohmann::json::array();
  TrainResult result = train(cfg, train_c.conversations, dev, tags, [&](const EpochLog& e) {
    logger()->info("epoch {}: train loss {:.6f}{}", e.epoch, e.train_loss,
                   e.evaluated ? fmt::format(", dev F {:.4f}", e.dev_f) : std::string());
    log.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"evaluated", e.evaluated}, {"dev_f", e.dev_f}});
  });
  save_checkpoint(out, result.best);
  const nlohmann::json summary = {{"epochs", log}, {"best_epoch", result.best.epoch}, {"best_dev_f", result.best.dev_f}};
  detail::write_text(out + ".log.json", summary.dump(2) + "\n");
  logger()->info("saved checkpoint {} (epoch {}, dev F {:.4f})", out, result.best.epoch, result.best.dev_f);
  return 0;
}

inline int cmd_eval(const RunConfig& rc, const std::string& checkpoint, const std::string& data,
                    const std::string& out_prefix) {
  const Checkpoint ck = load_checkpoint(detail::require(checkpoint, "checkpoint (--checkpoint)"));
  const std::string path = data.empty() ? rc.settings.test_path : data;
  const auto corpus = detail::load_logged(detail::require(path, "evaluation corpus (--data / data.test)"), ck.tags);
  const NdprModel model = ck.model();
  const EvalReport report = evaluate(model, ck.examples(corpus.conversations), ck.tags);
  const std::string row = table_row(to_string(ck.config.model.attention) + std::string("/") +
                                        to_string(ck.config.model.encoder),
                                    report.micro);
  const std::string text = table_header() + "\n" + row + "\n\n" + report.to_text();
  std::cout << text;
  if (!out_prefix.empty()) {
    detail::write_text(out_prefix + ".json", report.to_json().dump(2) + "\n");
    detail::write_text(out_prefix + ".txt", text);
  }
  return 0;
}

inline int cmd_predict(const std::string& checkpoint, const std::string& data, const std::string& out_path) {
  const Checkpoint ck = load_checkpoint(detail::require(checkpoint, "checkpoint (--checkpoint)"));
  auto corpus = detail::load_logged(detail::require(data, "input corpus (--data)"), ck.tags);
  const NdprModel model = ck.model();
  Tape tape;
  for (auto& conv : corpus.conversations) {
    const auto examples = ck.examples({conv});
    for (std::size_t t = 0; t < examples.size(); ++t) conv.utterances[t].tags = model.predict(examples[t], tape);
  }
  save_corpus(detail::require(out_path, "output path (--out)"), corpus.conversations, ck.tags);
  return 0;
}

inline nlohmann::json trace_json(const NdprModel& model, const Checkpoint& ck, const Conversation& conv,
                                 const Example& ex) {
  const auto ins = model.inspect(ex);
  nlohmann::json context = nlohmann::json::array();
  for (std::size_t i : ex.context_index) {
    context.push_back({{"index", i}, {"tokens", conv.utterances[i].tokens}});
  }
  nlohmann::json tokens = nlohmann::json::array();
  const auto& utt = conv.utterances[ex.sentence_index];
  for (std::size_t n = 0; n < ex.tokens.size(); ++n) {
    const auto& tr = ins.traces[n];
    tokens.push_back({{"position", n},
                      {"token", utt.tokens[n]},
                      {"gold", ck.tags.name(ex.tags[n])},
                      {"predicted", ck.tags.name(ins.predicted[n])},
                      {"probability", ins.distributions[n][static_cast<std::size_t>(ins.predicted[n])]},
                      {"sentence_weights", tr.sentence_weights},
                      {"word_weights", tr.word_weights},
                      {"utterance_weights", tr.utterance_weights}});
  }
  return {{"conversation", conv.id},
          {"sentence", ex.sentence_index},
          {"tokens", utt.tokens},
          {"context", context},
          {"trace", tokens}};
}

inline int cmd_inspect(const std::string& checkpoint, const std::string& data, const std::string& out_path,
                       const std::string& conversation, std::optional<std::size_t> sentence) {
  const Checkpoint ck = load_checkpoint(detail::require(checkpoint, "checkpoint (--checkpoint)"));
  const auto corpus = detail::load_logged(detail::require(data, "input corpus (--data)"), ck.tags);
  const NdprModel model = ck.model();
  nlohmann::json examples = nlohmann::json::array();
  for (const auto& conv : corpus.conversations) {
    if (!conversation.empty() && conv.id != conversation) continue;
    const auto exs = ck.examples({conv});
    for (const auto& ex : exs) {
      if (sentence && ex.sentence_index != *sentence) continue;
      examples.push_back(trace_json(model, ck, conv, ex));
    }
  }
  if (examples.empty()) throw DataError("no sentence matched the requested conversation/sentence");
  const nlohmann::json doc = {{"attention", to_string(ck.config.model.attention)},
                              {"encoder", to_string(ck.config.model.encoder)},
                              {"tags", ck.tags.names()},
                              {"examples", examples}};
  const std::string text = doc.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    detail::write_text(out_path, text);
  }
  return 0;
}

inline int cmd_gensynth(const RunConfig& rc, const std::string& out_path) {
  const TagSet tags = TagSet::from_spec(rc.settings.tagset);
  const SynthCorpus corpus = generate(rc.settings.synth, tags);
  save_corpus(detail::require(out_path, "output path (--out)"), corpus.conversations, tags);
  logger()->info("wrote {} conversations with {} dropped pronouns to {}", corpus.conversations.size(),
                 corpus.dropped.size(), out_path);
  return 0;
}

inline int run(int argc, const char* const* argv) {
  CLI::App app{"Dropped pronoun recovery with structured attention", "ndpr"};
  app.require_subcommand(1);

  std::string config_path, out, checkpoint, data, conversation;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, sentence;
  std::optional<double> lr;
  std::optional<std::string> encoder, attention, train_path, dev_path, tagset;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat JSON config file");
    sub->add_option("--set", sets, "override a config key: key=value (repeatable)");
    sub->add_option("--out", out, "output path");
  };
  auto model_flags = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "random seed (train.seed / synth.seed)");
    sub->add_option("--encoder", encoder, "bigru | pc-bigru")->check(CLI::IsMember({"bigru", "pc-bigru"}));
    sub->add_option("--attention", attention, "full | sentence | word | none")
        ->check(CLI::IsMember({"full", "sentence", "word", "none"}));
    sub->add_option("--epochs", epochs, "training epochs");
    sub->add_option("--lr", lr, "Adam learning rate");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  common(train_cmd);
  model_flags(train_cmd);
  train_cmd->add_option("--train", train_path, "training corpus (JSON lines)");
  train_cmd->add_option("--dev", dev_path, "development corpus (JSON lines)");
  train_cmd->add_option("--tagset", tagset, "default | concrete | comma-separated names");

  CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a gold corpus");
  common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--data", data, "gold corpus (JSON lines)");

  CLI::App* predict_cmd = app.add_subcommand("predict", "tag a corpus with a checkpoint");
  common(predict_cmd);
  predict_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  predict_cmd->add_option("--data", data, "input corpus (JSON lines)")->required();

  CLI::App* inspect_cmd = app.add_subcommand("inspect-attention", "dump per-token attention weights");
  common(inspect_cmd);
  inspect_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  inspect_cmd->add_option("--data", data, "input corpus (JSON lines)")->required();
  inspect_cmd->add_option("--conversation", conversation, "only this conversation id");
  inspect_cmd->add_option("--sentence", sentence, "only this sentence index");

  CLI::App* synth_cmd = app.add_subcommand("gen-synth", "write a synthetic pro-drop corpus");
  common(synth_cmd);
  synth_cmd->add_option("--seed", seed, "generator seed (synth.seed)");
  synth_cmd->add_option("--tagset", tagset, "default | concrete | comma-separated names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ndpr: error[usage]: " << e.what() << "\n";
    return 2;
  }

  try {
    RunConfig rc;
    rc.subcommand = app.get_subcommands().front()->get_name();
    rc.config_path = config_path;
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      rc.overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) {
      rc.overrides.emplace_back(rc.subcommand == "gen-synth" ? "synth.seed" : "train.seed", std::to_string(*seed));
    }
    if (encoder) rc.overrides.emplace_back("model.encoder", *encoder);
    if (attention) rc.overrides.emplace_back("model.attention", *attention);
    if (epochs) rc.overrides.emplace_back("train.epochs", std::to_string(*epochs));
    if (lr) {
      std::ostringstream os;
      os.precision(17);
      os << *lr;
      rc.overrides.emplace_back("train.lr", os.str());
    }
    if (train_path) rc.overrides.emplace_back("data.train", *train_path);
    if (dev_path) rc.overrides.emplace_back("data.dev", *dev_path);
    if (tagset) rc.overrides.emplace_back("data.tagset", *tagset);
    rc.settings = resolve_settings(rc.config_path, rc.overrides);

    if (rc.subcommand == "train") return cmd_train(rc, out);
    if (rc.subcommand == "eval") return cmd_eval(rc, checkpoint, data, out);
    if (rc.subcommand == "predict") return cmd_predict(checkpoint, data, out);
    if (rc.subcommand == "inspect-attention") return cmd_inspect(checkpoint, data, out, conversation, sentence);
    return cmd_gensynth(rc, out);
  } catch (const Error& e) {
    std::cerr << "ndpr: error[" << e.kind() << "]: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "ndpr: error[internal]: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace ndpr::cli
