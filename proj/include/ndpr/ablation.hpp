#pragma once

// Trains and scores the model variants side by side on shared corpora and
// seeds, and lays the results out as a results table.

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ndpr/evaluation.hpp"
#include "ndpr/training.hpp"

namespace ndpr {

struct Variant {
  std::string name;
  EncoderMode encoder = EncoderMode::BiGru;
  AttentionMode attention = AttentionMode::Full;
};

inline std::vector<Variant> standard_variants() {
  return {{"BiGRU", EncoderMode::BiGru, AttentionMode::None},
          {"NDPR-PC-BiGRU", EncoderMode::PcBiGru, AttentionMode::Full},
          {"NDPR-W", EncoderMode::BiGru, AttentionMode::WordOnly},
          {"NDPR-S", EncoderMode::BiGru, AttentionMode::SentenceOnly},
          {"NDPR", EncoderMode::BiGru, AttentionMode::Full}};
}

struct AblationRow {
  Variant variant;
  std::vector<std::uint64_t> seeds;
  std::vector<EvalReport> reports;  // one per seed, on the test split
  Prf mean;                         // component-wise mean over seeds
};

using AblationProgress = std::function<void(const Variant&, std::uint64_t seed, const EvalReport&)>;

inline std::vector<AblationRow> ablation_grid(const std::vector<Variant>& variants, const TrainConfig& base,
                                              const std::vector<std::uint64_t>& seeds,
                                              const std::vector<Conversation>& train_convs,
                                              const std::vector<Conversation>& dev_convs,
                                              const std::vector<Conversation>& test_convs, const TagSet& tags,
                                              const AblationProgress& progress = {}) {
  if (seeds.empty()) throw ConfigError("ablation: need at least one seed");
  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    AblationRow row;
    row.variant = v;
    row.seeds = seeds;
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      cfg.model.encoder = v.encoder;
      cfg.model.attention = v.attention;
      const TrainResult result = train(cfg, train_convs, dev_convs, tags);
      const NdprModel model = result.best.model();
      EvalReport report = evaluate(model, result.best.examples(test_convs), tags);
      if (progress) progress(v, seed, report);
      row.mean.precision += report.micro.precision / static_cast<double>(seeds.size());
      row.mean.recall += report.micro.recall / static_cast<double>(seeds.size());
      row.mean.f += report.micro.f / static_cast<double>(seeds.size());
      row.reports.push_back(std::move(report));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string format_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << table_header() << "\n";
  for (const auto& r : rows) os << table_row(r.variant.name, r.mean) << "\n";
  return os.str();
}

}  // namespace ndpr
