#include <filesystem>

#include <gtest/gtest.h>

#include "ndpr/checkpoint.hpp"
#include "ndpr/synthgen.hpp"
#include "support.hpp"

using namespace ndpr;

namespace {

std::vector<Conversation> small_corpus(std::uint64_t seed, std::size_t conversations = 6) {
  SynthConfig sc;
  sc.seed = seed;
  sc.conversations = conversations;
  sc.utterances = 5;
  sc.pairs_per_mention = 1;
  sc.topics = 10;
  return generate(sc, TagSet()).conversations;
}

TrainConfig small_config() {
  TrainConfig c;
  c.model.hidden = 4;
  c.model.embedding = 5;
  c.epochs = 3;
  c.lr = 1e-2;
  return c;
}

}  // namespace

TEST(Train, SameSeedSameEverything) {
  const auto data = small_corpus(1);
  auto cfg = small_config();
  auto a = train(cfg, data, {}, TagSet());
  auto b = train(cfg, data, {}, TagSet());
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t e = 0; e < a.log.size(); ++e) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a.log[e].train_loss), std::bit_cast<std::uint64_t>(b.log[e].train_loss));
  }
  EXPECT_EQ(serialize_checkpoint(a.best), serialize_checkpoint(b.best));
  cfg.seed = 2;
  auto c = train(cfg, data, {}, TagSet());
  EXPECT_NE(serialize_checkpoint(a.best), serialize_checkpoint(c.best));
}

TEST(Train, BestEpochIsMaximalDevFEarliestOnTies) {
  const auto data = small_corpus(2);
  auto cfg = small_config();
  cfg.epochs = 5;
  auto r = train(cfg, data, small_corpus(3, 3), TagSet());
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (const auto& e : r.log) {
    ASSERT_TRUE(e.evaluated);
    if (e.dev_f > best) {
      best = e.dev_f;
      best_epoch = e.epoch;
    }
  }
  EXPECT_EQ(r.best.epoch, best_epoch);
  EXPECT_EQ(r.best.dev_f, best);
}

TEST(Train, EvalEveryLimitsEvaluations) {
  auto cfg = small_config();
  cfg.epochs = 5;
  cfg.eval_every = 2;
  auto r = train(cfg, small_corpus(4), {}, TagSet());
  std::vector<bool> evaluated;
  for (const auto& e : r.log) evaluated.push_back(e.evaluated);
  EXPECT_EQ(evaluated, (std::vector<bool>{false, true, false, true, true}));
}

TEST(Train, InvalidConfigAndEmptyData) {
  auto cfg = small_config();
  cfg.lr = 0.0;
  EXPECT_THROW(train(cfg, small_corpus(1), {}, TagSet()), ConfigError);
  EXPECT_THROW(train(small_config(), {}, {}, TagSet()), TrainingError);
}

TEST(Train, DivergenceIsReportedAsTrainingError) {
  auto cfg = small_config();
  cfg.lr = 1e306;
  cfg.epochs = 2;
  try {
    train(cfg, small_corpus(1), {}, TagSet());
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}

TEST(Train, LossFallsOnTinyCorpus) {
  auto cfg = small_config();
  cfg.epochs = 15;
  cfg.model.dropout = 0.0;
  auto r = train(cfg, small_corpus(5, 4), small_corpus(5, 4), TagSet());
  EXPECT_LT(r.log.back().train_loss, 0.5 * r.log.front().train_loss);
}

TEST(Checkpoint, RoundTripPredictions) {
  auto cfg = small_config();
  cfg.model.attention = AttentionMode::Full;
  auto r = train(cfg, small_corpus(6), {}, TagSet());
  const auto dir = testsupport::scratch_dir("ckpt");
  const auto path = (dir / "model.ckpt").string();
  save_checkpoint(path, r.best);
  const Checkpoint loaded = load_checkpoint(path, TagSet());
  EXPECT_EQ(serialize_checkpoint(loaded), serialize_checkpoint(r.best));

  const NdprModel a = r.best.model();
  const NdprModel b = loaded.model();
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    auto ex = testsupport::random_example(rng, a.config(), 1 + rng.below(6), rng.below(8));
    ASSERT_EQ(a.distributions(ex), b.distributions(ex));
  }
}

TEST(Checkpoint, WrongTagSetRejected) {
  auto r = train(small_config(), small_corpus(7), {}, TagSet());
  const std::string bytes = serialize_checkpoint(r.best);
  try {
    deserialize_checkpoint(bytes, TagSet::concrete());
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("tag-set"), std::string::npos);
  }
}

TEST(Checkpoint, TruncatedOrCorruptFilesRejected) {
  auto r = train(small_config(), small_corpus(8), {}, TagSet());
  const std::string bytes = serialize_checkpoint(r.best);
  for (std::size_t keep : {std::size_t{0}, std::size_t{10}, std::size_t{30}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, keep)), CheckpointError) << keep;
  }
  std::string flipped = bytes;
  flipped[flipped.size() - 20] ^= 0x01;
  EXPECT_THROW(deserialize_checkpoint(flipped), CheckpointError);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(magic), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), CheckpointError);
}

TEST(Checkpoint, MissingTensorRejected) {
  auto r = train(small_config(), small_corpus(9), {}, TagSet());
  Checkpoint ck = r.best;
  ck.tensors.pop_back();
  EXPECT_THROW(ck.model(), CheckpointError);
  ck = r.best;
  ck.tensors[0].rows += 1;
  ck.tensors[0].values.resize(ck.tensors[0].rows * ck.tensors[0].cols);
  EXPECT_THROW(ck.model(), CheckpointError);
}

TEST(ModelConfigJson, RoundTrip) {
  TrainConfig c = small_config();
  c.model.encoder = EncoderMode::PcBiGru;
  c.model.attention = AttentionMode::WordOnly;
  c.clip_norm = 5.0;
  const auto j = c.to_json();
  EXPECT_EQ(TrainConfig::from_json(j).to_json(), j);
}
