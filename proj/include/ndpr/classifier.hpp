#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ndpr/autodiff.hpp"

namespace ndpr {

using ad::Parameter;
using ad::ParameterSet;
using ad::Tape;
using ad::Tensor;

// Two-layer softmax classifier:
//   alpha = tanh(W1 x + b1),  P = softmax(W2 alpha + b2)
struct ClassifierParams {
  Parameter* W1 = nullptr;
  Parameter* b1 = nullptr;
  Parameter* W2 = nullptr;
  Parameter* b2 = nullptr;

  static ClassifierParams create(ParameterSet& params, std::size_t input_dim, std::size_t hidden,
                                 std::size_t tags) {
    return {&params.add("cls.W1", hidden, input_dim), &params.add("cls.b1", hidden, 1),
            &params.add("cls.W2", tags, hidden), &params.add("cls.b2", tags, 1)};
  }
  static ClassifierParams bind(ParameterSet& params) {
    return {&params.at("cls.W1"), &params.at("cls.b1"), &params.at("cls.W2"), &params.at("cls.b2")};
  }

  std::size_t input_dim() const { return W1->cols; }
  std::size_t tag_count() const { return W2->rows; }
};

// Unnormalised scores. Dropout (inverted) hits the input of each fully
// connected layer when `train` is set.
inline Tensor classifier_logits(const ClassifierParams& p, Tensor input, double dropout_rate, bool train,
                                Rng& rng) {
  Tape& tape = *input.tape();
  if (input.size() != p.input_dim() || input.cols() != 1) {
    throw ShapeError("predict: classifier input is " + ad::shape_str(input.rows(), input.cols()) +
                     ", expected " + std::to_string(p.input_dim()) + "x1");
  }
  Tensor x = ad::dropout(input, dropout_rate, train, rng);
  Tensor alpha = ad::tanh(ad::add(ad::matmul(tape.param(*p.W1), x), tape.param(*p.b1)));
  alpha = ad::dropout(alpha, dropout_rate, train, rng);
  return ad::add(ad::matmul(tape.param(*p.W2), alpha), tape.param(*p.b2));
}

// Tag distribution for one DP slot.
inline Tensor predict(const ClassifierParams& p, Tensor input, double dropout_rate, bool train, Rng& rng) {
  return ad::softmax(classifier_logits(p, input, dropout_rate, train, rng));
}

// Summed cross-entropy over a sentence, from logits (differentiable).
inline Tensor sequence_loss(std::span<const Tensor> logits, std::span<const int> gold) {
  if (logits.size() != gold.size()) {
    throw ShapeError("sequence_loss: " + std::to_string(logits.size()) + " predictions for " +
                     std::to_string(gold.size()) + " gold tags");
  }
  if (logits.empty()) throw ShapeError("sequence_loss: empty sentence");
  Tensor total;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (gold[i] < 0 || static_cast<std::size_t>(gold[i]) >= logits[i].size()) {
      throw DataError("sequence_loss: gold tag " + std::to_string(gold[i]) + " outside tag set of size " +
                      std::to_string(logits[i].size()));
    }
    Tensor l = ad::softmax_cross_entropy(logits[i], static_cast<std::size_t>(gold[i]));
    total = total.valid() ? ad::add(total, l) : l;
  }
  return total;
}

// -sum_n log p_n(gold_n) over plain distributions.
inline double sequence_loss(const std::vector<std::vector<double>>& distributions, std::span<const int> gold) {
  if (distributions.size() != gold.size()) {
    throw ShapeError("sequence_loss: " + std::to_string(distributions.size()) + " predictions for " +
                     std::to_string(gold.size()) + " gold tags");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || static_cast<std::size_t>(gold[i]) >= distributions[i].size()) {
      throw DataError("sequence_loss: gold tag " + std::to_string(gold[i]) + " outside tag set of size " +
                      std::to_string(distributions[i].size()));
    }
    loss -= std::log(distributions[i][static_cast<std::size_t>(gold[i])]);
  }
  return loss;
}

}  // namespace ndpr
