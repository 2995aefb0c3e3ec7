#pragma once

// Micro precision / recall / F over dropped pronouns. A prediction counts as
// correct only when both the position and the pronoun type match the gold
// annotation; None predictions and None golds never enter the counts.

#include <cstdio>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ndpr/data.hpp"
#include "ndpr/model.hpp"

namespace ndpr {

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;

  static Prf from_counts(std::size_t correct, std::size_t predicted, std::size_t gold) {
    Prf s;
    s.precision = predicted > 0 ? static_cast<double>(correct) / static_cast<double>(predicted) : 0.0;
    s.recall = gold > 0 ? static_cast<double>(correct) / static_cast<double>(gold) : 0.0;
    s.f = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
  }
};

struct TagScore {
  std::string tag;
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t correct = 0;
  Prf score;
};

struct EvalReport {
  std::vector<std::string> tags;
  std::size_t sentences = 0;
  std::size_t tokens = 0;
  std::size_t gold_dps = 0;
  std::size_t predicted_dps = 0;
  std::size_t correct = 0;
  Prf micro;
  // Supplementary: a non-None prediction at a gold DP position, any type.
  std::size_t position_correct = 0;
  Prf position;
  std::vector<TagScore> per_tag;                  // non-None tags, tag-set order
  std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]

  nlohmann::json to_json() const {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& t : per_tag) {
      per.push_back({{"tag", t.tag},
                     {"gold", t.gold},
                     {"predicted", t.predicted},
                     {"correct", t.correct},
                     {"precision", t.score.precision},
                     {"recall", t.score.recall},
                     {"f", t.score.f}});
    }
    return {{"sentences", sentences},
            {"tokens", tokens},
            {"gold_dps", gold_dps},
            {"predicted_dps", predicted_dps},
            {"correct", correct},
            {"precision", micro.precision},
            {"recall", micro.recall},
            {"f", micro.f},
            {"position_only", {{"correct", position_correct},
                               {"precision", position.precision},
                               {"recall", position.recall},
                               {"f", position.f}}},
            {"tags", tags},
            {"per_tag", per},
            {"confusion", confusion}};
  }

  std::string to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "sentences " << sentences << ", tokens " << tokens << ", gold DPs " << gold_dps
       << ", predicted DPs " << predicted_dps << ", correct " << correct << "\n";
    os << "micro  P " << 100.0 * micro.precision << "  R " << 100.0 * micro.recall << "  F "
       << 100.0 * micro.f << "\n";
    os << "position-only  P " << 100.0 * position.precision << "  R " << 100.0 * position.recall
       << "  F " << 100.0 * position.f << "\n";
    os << "per tag (gold / pred / correct  P R F):\n";
    for (const auto& t : per_tag) {
      if (t.gold == 0 && t.predicted == 0) continue;
      os << "  " << std::left << std::setw(20) << t.tag << std::right << std::setw(6) << t.gold
         << std::setw(6) << t.predicted << std::setw(6) << t.correct << "  " << std::setw(6)
         << 100.0 * t.score.precision << std::setw(8) << 100.0 * t.score.recall << std::setw(8)
         << 100.0 * t.score.f << "\n";
    }
    return os.str();
  }
};

// Formats a results-table row: model name, then P(%), R(%), F in percent.
inline std::string table_row(const std::string& model, const Prf& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s | %6.2f %6.2f %6.2f", model.c_str(), 100.0 * s.precision,
                100.0 * s.recall, 100.0 * s.f);
  return buf;
}

inline std::string table_header() { return "Model            |   P(%)   R(%)      F"; }

class EvalAccumulator {
 public:
  explicit EvalAccumulator(const TagSet& tags)
      : tags_(tags), confusion_(tags.size(), std::vector<std::size_t>(tags.size(), 0)) {}

  void add(std::span<const int> gold, std::span<const int> predicted) {
    if (gold.size() != predicted.size()) {
      throw ShapeError("evaluate: " + std::to_string(gold.size()) + " gold tags vs " +
                       std::to_string(predicted.size()) + " predictions");
    }
    ++sentences_;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const int g = gold[i], p = predicted[i];
      if (g < 0 || p < 0 || static_cast<std::size_t>(g) >= tags_.size() ||
          static_cast<std::size_t>(p) >= tags_.size()) {
        throw DataError("evaluate: tag id outside the tag set");
      }
      ++confusion_[g][p];
      ++tokens_;
    }
  }

  EvalReport finish() const {
    EvalReport r;
    r.tags = tags_.names();
    r.sentences = sentences_;
    r.tokens = tokens_;
    r.confusion = confusion_;
    const std::size_t T = tags_.size();
    for (std::size_t g = 0; g < T; ++g) {
      for (std::size_t p = 0; p < T; ++p) {
        const std::size_t n = confusion_[g][p];
        if (g != 0) r.gold_dps += n;
        if (p != 0) r.predicted_dps += n;
        if (g != 0 && p == g) r.correct += n;
        if (g != 0 && p != 0) r.position_correct += n;
      }
    }
    r.micro = Prf::from_counts(r.correct, r.predicted_dps, r.gold_dps);
    r.position = Prf::from_counts(r.position_correct, r.predicted_dps, r.gold_dps);
    for (std::size_t t = 1; t < T; ++t) {
      TagScore s;
      s.tag = tags_.name(static_cast<int>(t));
      for (std::size_t k = 0; k < T; ++k) {
        s.gold += confusion_[t][k];
        s.predicted += confusion_[k][t];
      }
      s.correct = confusion_[t][t];
      s.score = Prf::from_counts(s.correct, s.predicted, s.gold);
      r.per_tag.push_back(s);
    }
    return r;
  }

 private:
  TagSet tags_;
  std::size_t sentences_ = 0;
  std::size_t tokens_ = 0;
  std::vector<std::vector<std::size_t>> confusion_;
};

inline EvalReport score(const std::vector<std::vector<int>>& gold, const std::vector<std::vector<int>>& predicted,
                        const TagSet& tags) {
  if (gold.size() != predicted.size()) throw ShapeError("evaluate: sentence counts differ");
  EvalAccumulator acc(tags);
  for (std::size_t i = 0; i < gold.size(); ++i) acc.add(gold[i], predicted[i]);
  return acc.finish();
}

inline EvalReport evaluate(const NdprModel& model, const std::vector<Example>& examples, const TagSet& tags) {
  if (model.config().tag_count != tags.size()) {
    throw ConfigError("evaluate: model predicts " + std::to_string(model.config().tag_count) +
                      " tags but the tag set has " + std::to_string(tags.size()));
  }
  EvalAccumulator acc(tags);
  Tape tape;
  for (const auto& ex : examples) acc.add(ex.tags, model.predict(ex, tape));
  return acc.finish();
}

}  // namespace ndpr
