#include <gtest/gtest.h>

#include "ndpr/attention.hpp"
#include "ndpr/model.hpp"
#include "oracle/reference.hpp"
#include "support.hpp"

using namespace ndpr;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Memory of m utterances with the given lengths, built from constants.
struct RawMemory {
  std::vector<std::vector<std::vector<double>>> words;  // [i][j] -> 2d
  std::vector<std::vector<double>> sentences;           // [i] -> 2d

  ContextMemory on(Tape& t) const {
    ContextMemory mem;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      mem.sentences.push_back(t.vector(sentences[i]));
      std::vector<Tensor> ws;
      for (const auto& w : words[i]) ws.push_back(t.vector(w));
      mem.words.push_back(std::move(ws));
    }
    return mem;
  }
};

RawMemory random_memory(Rng& rng, std::size_t dim, const std::vector<std::size_t>& lengths) {
  RawMemory m;
  for (std::size_t k : lengths) {
    m.sentences.push_back(random_vec(rng, dim));
    std::vector<std::vector<double>> ws;
    for (std::size_t j = 0; j < k; ++j) ws.push_back(random_vec(rng, dim));
    m.words.push_back(std::move(ws));
  }
  return m;
}

struct Params {
  ParameterSet ps;
  AttentionParams a;
  Params(std::size_t d, std::uint64_t seed) {
    a = AttentionParams::create(ps, AttentionMode::Full, d);
    Rng rng(seed);
    for (std::size_t k = 0; k < ps.size(); ++k)
      for (double& v : ps[k].value) v = rng.uniform(-0.5, 0.5);
  }
};

}  // namespace

TEST(SentenceAttention, SingleUtterance) {
  Rng rng(1);
  auto raw = random_memory(rng, 6, {3});
  Tape t;
  auto h = t.vector(random_vec(rng, 6));
  auto sa = sentence_attention(h, raw.on(t));
  EXPECT_DOUBLE_EQ(sa.weights[0], 1.0);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_DOUBLE_EQ(sa.summary[k], raw.sentences[0][k]);
}

TEST(SentenceAttention, OrthogonalQueryIsUniform) {
  RawMemory raw;
  raw.sentences = {{1, 0, 0, 0}, {0, 2, 0, 0}, {0, 0, -3, 0}};
  raw.words = {{{1, 0, 0, 0}}, {{1, 0, 0, 0}}, {{1, 0, 0, 0}}};
  Tape t;
  const std::vector<double> h{0, 0, 0, 5};
  auto sa = sentence_attention(t.vector(h), raw.on(t));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(sa.weights[i], 1.0 / 3.0, 1e-15);
}

TEST(SentenceAttention, MatchesBruteForce) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    auto raw = random_memory(rng, 8, {2, 4, 1});
    const auto h = random_vec(rng, 8);
    Tape t;
    auto sa = sentence_attention(t.vector(h), raw.on(t));
    std::vector<double> rs;
    for (const auto& c : raw.sentences) rs.push_back(oracle::dotp(h, c));
    const auto as = oracle::softmax(rs);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(sa.weights[i], as[i], 1e-12);
    for (std::size_t k = 0; k < 8; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) s += as[i] * raw.sentences[i][k];
      EXPECT_NEAR(sa.summary[k], s, 1e-12);
    }
  }
}

TEST(SentenceAttention, ScalingAPositiveScoreRaisesItsWeight) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto raw = random_memory(rng, 6, {2, 2, 2});
    const auto h = random_vec(rng, 6);
    const std::size_t i = rng.below(3);
    if (oracle::dotp(h, raw.sentences[i]) <= 0.0) {
      for (double& v : raw.sentences[i]) v = -v;
    }
    Tape t;
    const double before = sentence_attention(t.vector(h), raw.on(t)).weights[i];
    for (double& v : raw.sentences[i]) v *= 10.0;
    const double after = sentence_attention(t.vector(h), raw.on(t)).weights[i];
    EXPECT_GT(after, before);
  }
}

TEST(UpdateState, ZeroAndIdentityBlocks) {
  ParameterSet ps;
  auto a = AttentionParams::create(ps, AttentionMode::Full, 2);
  Tape t;
  const std::vector<double> h{0.3, -0.2, 1.0, 2.0}, s{9, 9, 9, 9};
  auto zero = update_dp_state(a, t.vector(h), t.vector(s));
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);

  Tape t2;
  for (std::size_t r = 0; r < 4; ++r) a.W_update->value[r * 8 + r] = 1.0;
  auto id = update_dp_state(a, t2.vector(h), t2.vector(s));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(id[k], h[k]);
}

TEST(UpdateState, MatchesOracle) {
  Params p(3, 4);
  Rng rng(9);
  const auto h = random_vec(rng, 6), s = random_vec(rng, 6);
  Tape t;
  auto hs = update_dp_state(p.a, t.vector(h), t.vector(s));
  auto expected = oracle::mv(oracle::mat(p.ps, "attn.W_update"), oracle::cat(h, s));
  for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(hs[k], expected[k] + p.a.b_update->value[k], 1e-12);
}

TEST(WordAttention, SingleWordUtterance) {
  Params p(2, 1);
  Rng rng(2);
  auto raw = random_memory(rng, 4, {1, 3});
  Tape t;
  auto wa = word_attention(p.a, t.vector(random_vec(rng, 4)), raw.on(t));
  EXPECT_DOUBLE_EQ(wa.weights[0][0], 1.0);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(wa.summaries[0][k], raw.words[0][0][k]);
}

TEST(WordAttention, ZeroQueryGivesUniformWeights) {
  Params p(2, 3);
  Rng rng(4);
  auto raw = random_memory(rng, 4, {3, 5});
  Tape t;
  auto wa = word_attention(p.a, t.zeros(4, 1), raw.on(t));
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < raw.words[i].size(); ++j) {
      EXPECT_DOUBLE_EQ(wa.scores[i][j], p.a.b_rel->value[0]);
      EXPECT_NEAR(wa.weights[i][j], 1.0 / static_cast<double>(raw.words[i].size()), 1e-15);
    }
  }
}

TEST(WordAttention, MatchesBruteForce) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Params p(3, seed);
    Rng rng(seed + 50);
    auto raw = random_memory(rng, 6, {3, 2});
    const auto q = random_vec(rng, 6);
    Tape t;
    auto wa = word_attention(p.a, t.vector(q), raw.on(t));
    for (std::size_t i = 0; i < 2; ++i) {
      std::vector<double> rw;
      for (const auto& w : raw.words[i]) {
        double s = p.a.b_rel->value[0];
        for (std::size_t k = 0; k < 6; ++k) s += p.a.w_rel->value[k] * q[k] * w[k];
        rw.push_back(s);
      }
      const auto aw = oracle::softmax(rw);
      for (std::size_t j = 0; j < aw.size(); ++j) EXPECT_NEAR(wa.weights[i][j], aw[j], 1e-12);
      for (std::size_t k = 0; k < 6; ++k) {
        double tw = 0.0;
        for (std::size_t j = 0; j < aw.size(); ++j) tw += aw[j] * raw.words[i][j][k];
        EXPECT_NEAR(wa.summaries[i][k], tw, 1e-12);
      }
    }
  }
}

TEST(Referent, SingleUtteranceAndOneHot) {
  Tape t;
  const std::vector<double> a{1, 2}, b{3, 4}, c{5, 6}, one{1.0}, hot{0.0, 1.0, 0.0};
  std::vector<Tensor> single{t.vector(a)};
  auto w1 = referent_representation(t.vector(one), single, 2, t);
  EXPECT_EQ(w1[0], 1.0);
  EXPECT_EQ(w1[1], 2.0);
  std::vector<Tensor> three{t.vector(a), t.vector(b), t.vector(c)};
  auto w2 = referent_representation(t.vector(hot), three, 2, t);
  EXPECT_EQ(w2[0], 3.0);
  EXPECT_EQ(w2[1], 4.0);
  std::vector<Tensor> none;
  auto w0 = referent_representation(Tensor(), none, 2, t);
  EXPECT_EQ(w0[0], 0.0);
}

TEST(Referent, VariantFeaturesWithSingleContext) {
  Params p(2, 6);
  Rng rng(3);
  auto raw = random_memory(rng, 4, {1});
  Tape t;
  auto mem = raw.on(t);
  auto h = t.vector(random_vec(rng, 4));
  auto s = referent_feature(AttentionMode::SentenceOnly, p.a, h, mem);
  auto w = referent_feature(AttentionMode::WordOnly, p.a, h, mem);
  auto none = referent_feature(AttentionMode::None, p.a, h, mem);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_DOUBLE_EQ(s.feature[k], raw.sentences[0][k]);
    EXPECT_DOUBLE_EQ(w.feature[k], raw.words[0][0][k]);
  }
  EXPECT_FALSE(none.feature.valid());
}

TEST(Referent, EmptyMemoryGivesZeroFeature) {
  Params p(2, 6);
  Tape t;
  const std::vector<double> hv{1, 2, 3, 4};
  for (auto mode : {AttentionMode::Full, AttentionMode::SentenceOnly, AttentionMode::WordOnly}) {
    auto r = referent_feature(mode, p.a, t.vector(hv), ContextMemory{});
    ASSERT_TRUE(r.feature.valid());
    for (double v : r.feature.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Referent, PermutingContextLeavesFeatureUnchanged) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    Params p(3, seed);
    Rng rng(seed * 7);
    auto raw = random_memory(rng, 6, {2, 4, 1, 3});
    const auto h = random_vec(rng, 6);
    std::vector<std::size_t> perm{0, 1, 2, 3};
    rng.shuffle(perm);
    RawMemory shuffled;
    for (std::size_t i : perm) {
      shuffled.sentences.push_back(raw.sentences[i]);
      shuffled.words.push_back(raw.words[i]);
    }
    for (auto mode : {AttentionMode::Full, AttentionMode::SentenceOnly, AttentionMode::WordOnly}) {
      Tape t;
      auto a = referent_feature(mode, p.a, t.vector(h), raw.on(t));
      auto b = referent_feature(mode, p.a, t.vector(h), shuffled.on(t));
      for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(a.feature[k], b.feature[k], 1e-12);
      if (mode == AttentionMode::Full) {
        for (std::size_t i = 0; i < 4; ++i) {
          EXPECT_NEAR(b.sentence.weights[i], a.sentence.weights[perm[i]], 1e-15);
          for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(b.word.summaries[i][k], a.word.summaries[perm[i]][k], 1e-15);
        }
      }
    }
  }
}

TEST(Attention, ParseModes) {
  EXPECT_EQ(parse_attention_mode("full"), AttentionMode::Full);
  EXPECT_EQ(parse_attention_mode("sentence"), AttentionMode::SentenceOnly);
  EXPECT_EQ(parse_attention_mode("word"), AttentionMode::WordOnly);
  EXPECT_EQ(parse_attention_mode("none"), AttentionMode::None);
  EXPECT_THROW(parse_attention_mode("both"), ConfigError);
}

// The composed model against the straight-line reference, every variant.
TEST(Pipeline, MatchesOracleForEveryVariant) {
  for (auto mode : {AttentionMode::Full, AttentionMode::SentenceOnly, AttentionMode::WordOnly, AttentionMode::None}) {
    for (auto enc : {EncoderMode::BiGru, EncoderMode::PcBiGru}) {
      for (bool shared : {true, false}) {
        auto cfg = testsupport::toy_config(mode, enc);
        cfg.share_context_encoder = shared;
        NdprModel model(cfg, 1);
        testsupport::randomize(model, 17);
        Rng rng(23);
        for (int trial = 0; trial < 5; ++trial) {
          auto ex = testsupport::random_example(rng, cfg, 1 + rng.below(5), rng.below(8));
          const auto got = model.inspect(ex);
          const auto want = oracle::forward(model, ex);
          for (std::size_t n = 0; n < ex.tokens.size(); ++n) {
            for (std::size_t k = 0; k < cfg.tag_count; ++k) {
              ASSERT_NEAR(got.distributions[n][k], want[n].distribution[k], 1e-10) << to_string(mode);
            }
          }
        }
      }
    }
  }
}

TEST(Pipeline, InspectTraceHasNormalisedWeights) {
  auto cfg = testsupport::toy_config();
  NdprModel model(cfg, 2);
  testsupport::randomize(model, 3);
  Rng rng(4);
  auto ex = testsupport::random_example(rng, cfg, 4, 5);
  const auto ins = model.inspect(ex);
  for (const auto& tr : ins.traces) {
    double s = 0.0;
    for (double v : tr.sentence_weights) s += v;
    EXPECT_NEAR(s, 1.0, 1e-9);
    ASSERT_EQ(tr.word_weights.size(), 5u);
    for (const auto& row : tr.word_weights) {
      double w = 0.0;
      for (double v : row) w += v;
      EXPECT_NEAR(w, 1.0, 1e-9);
    }
  }
}
