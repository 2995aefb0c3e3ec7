#include <gtest/gtest.h>

#include "ndpr/ablation.hpp"
#include "ndpr/evaluation.hpp"
#include "support.hpp"

using namespace ndpr;

TEST(Score, PerfectPredictions) {
  TagSet tags;
  const std::vector<std::vector<int>> gold{{0, 5, 0}, {1, 0}};
  auto r = score(gold, gold, tags);
  EXPECT_EQ(r.micro.precision, 1.0);
  EXPECT_EQ(r.micro.recall, 1.0);
  EXPECT_EQ(r.micro.f, 1.0);
  EXPECT_EQ(r.gold_dps, 2u);
}

TEST(Score, AllNonePredictions) {
  TagSet tags;
  const std::vector<std::vector<int>> gold{{0, 5, 0}, {1, 0}}, pred{{0, 0, 0}, {0, 0}};
  auto r = score(gold, pred, tags);
  EXPECT_EQ(r.predicted_dps, 0u);
  EXPECT_EQ(r.micro.precision, 0.0);
  EXPECT_EQ(r.micro.recall, 0.0);
  EXPECT_EQ(r.micro.f, 0.0);
}

TEST(Score, OneRightOneSpurious) {
  TagSet tags;
  // Gold DPs at (0,1) and (1,0); prediction gets (0,1) and invents (0,2).
  const std::vector<std::vector<int>> gold{{0, 5, 0}, {1, 0}}, pred{{0, 5, 7}, {0, 0}};
  auto r = score(gold, pred, tags);
  EXPECT_EQ(r.correct, 1u);
  EXPECT_DOUBLE_EQ(r.micro.precision, 0.5);
  EXPECT_DOUBLE_EQ(r.micro.recall, 0.5);
  EXPECT_DOUBLE_EQ(r.micro.f, 0.5);
}

TEST(Score, WrongTypeAtRightPosition) {
  TagSet tags;
  const std::vector<std::vector<int>> gold{{0, 5}}, pred{{0, 6}};
  auto r = score(gold, pred, tags);
  EXPECT_EQ(r.micro.f, 0.0);
  EXPECT_EQ(r.position.f, 1.0);
  EXPECT_EQ(r.confusion[5][6], 1u);
  EXPECT_EQ(r.per_tag[4].tag, "他");
  EXPECT_EQ(r.per_tag[4].gold, 1u);
  EXPECT_EQ(r.per_tag[5].predicted, 1u);
}

TEST(Score, NoneNeverCounted) {
  TagSet tags;
  const std::vector<std::vector<int>> gold{{0, 0, 0, 0}}, pred{{0, 0, 0, 0}};
  auto r = score(gold, pred, tags);
  EXPECT_EQ(r.gold_dps + r.predicted_dps + r.correct, 0u);
  EXPECT_EQ(r.tokens, 4u);
}

TEST(Score, BoundsOnRandomInputs) {
  TagSet tags;
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<int>> gold(5), pred(5);
    for (std::size_t s = 0; s < 5; ++s) {
      for (std::size_t n = 0; n < 6; ++n) {
        gold[s].push_back(rng.bernoulli(0.3) ? 1 + static_cast<int>(rng.below(16)) : 0);
        pred[s].push_back(rng.bernoulli(0.3) ? 1 + static_cast<int>(rng.below(16)) : 0);
      }
    }
    auto r = score(gold, pred, tags);
    for (double v : {r.micro.precision, r.micro.recall, r.micro.f}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Score, RejectsMisalignedInput) {
  TagSet tags;
  EXPECT_THROW(score({{0, 1}}, {{0}}, tags), ShapeError);
  EXPECT_THROW(score({{0}}, {{0}, {0}}, tags), ShapeError);
  EXPECT_THROW(score({{40}}, {{0}}, tags), DataError);
}

TEST(Report, TableRowFormat) {
  EXPECT_EQ(table_row("NDPR", Prf{0.4939, 0.4489, 0.4639}), "NDPR             |  49.39  44.89  46.39");
  TagSet tags;
  auto r = score({{0, 5}}, {{0, 5}}, tags);
  auto j = r.to_json();
  EXPECT_EQ(j["f"], 1.0);
  EXPECT_EQ(j["tags"].size(), tags.size());
  EXPECT_NE(r.to_text().find("他"), std::string::npos);
}

TEST(Evaluate, PureAndChecksTagCount) {
  auto cfg = testsupport::toy_config();
  NdprModel model(cfg, 1);
  testsupport::randomize(model, 2);
  Rng rng(3);
  std::vector<Example> exs;
  for (int i = 0; i < 10; ++i) exs.push_back(testsupport::random_example(rng, cfg, 4, 2));
  const TagSet tags({"None", "a", "b", "c", "d"});
  auto a = evaluate(model, exs, tags), b = evaluate(model, exs, tags);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_THROW(evaluate(model, exs, TagSet()), ConfigError);
}

TEST(Ablation, TwoVariantsGiveTwoRows) {
  Conversation conv{"c", {{{"a", "b"}, {0, 1}}, {{"c"}, {0}}, {{"a", "c"}, {2, 0}}}};
  const std::vector<Conversation> data{conv, conv, conv};
  TrainConfig base;
  base.model.hidden = 3;
  base.model.embedding = 4;
  base.epochs = 2;
  const std::vector<Variant> variants{{"BiGRU", EncoderMode::BiGru, AttentionMode::None},
                                      {"NDPR", EncoderMode::BiGru, AttentionMode::Full}};
  auto rows = ablation_grid(variants, base, {1}, data, data, data, TagSet());
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].reports.size(), 1u);
  EXPECT_NE(format_table(rows).find("NDPR"), std::string::npos);
}
