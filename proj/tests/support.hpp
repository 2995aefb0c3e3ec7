#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ndpr/model.hpp"

namespace testsupport {

inline ndpr::ModelConfig toy_config(ndpr::AttentionMode attention = ndpr::AttentionMode::Full,
                                    ndpr::EncoderMode encoder = ndpr::EncoderMode::BiGru) {
  ndpr::ModelConfig c;
  c.encoder = encoder;
  c.attention = attention;
  c.hidden = 8;
  c.embedding = 10;
  c.vocab_size = 20;
  c.tag_count = 5;
  c.dropout = 0.0;
  return c;
}

// Random weights in [-range, range], biases included, so every term matters.
inline void randomize(ndpr::NdprModel& model, std::uint64_t seed, double range = 0.5) {
  ndpr::Rng rng(seed);
  auto& ps = model.params();
  for (std::size_t k = 0; k < ps.size(); ++k)
    for (double& v : ps[k].value) v = rng.uniform(-range, range);
}

inline std::vector<int> random_ids(ndpr::Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<int> ids(n);
  for (int& id : ids) id = 2 + static_cast<int>(rng.below(vocab - 2));
  return ids;
}

// Sentence of length `len` with `m` context utterances of length 1..max_ctx_len.
inline ndpr::Example random_example(ndpr::Rng& rng, const ndpr::ModelConfig& c, std::size_t len, std::size_t m,
                                    std::size_t max_ctx_len = 5) {
  ndpr::Example ex;
  ex.tokens = random_ids(rng, len, c.vocab_size);
  for (std::size_t i = 0; i < len; ++i) ex.tags.push_back(static_cast<int>(rng.below(c.tag_count)));
  for (std::size_t i = 0; i < m; ++i) {
    ex.context.push_back(random_ids(rng, 1 + rng.below(max_ctx_len), c.vocab_size));
    ex.context_index.push_back(i);
  }
  return ex;
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

struct GradCheck {
  double worst = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
  std::vector<std::string> covered;  // parameters with at least one entry checked
};

// Central differences on the summed cross-entropy for every scalar of every
// parameter tensor, against the tape's accumulated gradients.
inline GradCheck gradient_check(ndpr::NdprModel& model, const ndpr::Example& ex, double eps) {
  auto& ps = model.params();
  ps.zero_grad();
  ndpr::Tape tape;
  ndpr::Rng rng(0);
  auto fp = model.forward(tape, ex, false, rng);
  tape.backward(ndpr::sequence_loss(fp.logits, ex.tags));
  GradCheck out;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto& p = ps[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double old = p.value[i];
      p.value[i] = old + eps;
      const double up = model.loss(ex);
      p.value[i] = old - eps;
      const double down = model.loss(ex);
      p.value[i] = old;
      const double rel = relative_error(p.grad[i], (up - down) / (2.0 * eps));
      if (rel > out.worst) {
        out.worst = rel;
        out.worst_param = p.name;
      }
      ++out.checked;
    }
    out.covered.push_back(p.name);
  }
  return out;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ndpr-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testsupport
