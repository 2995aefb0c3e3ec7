#pragma once

// Dense rank-2 tensors with a reverse-mode tape, trainable parameters and the
// Adam optimizer. Vectors are column matrices (n x 1).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ndpr/errors.hpp"
#include "ndpr/rng.hpp"

namespace ndpr::ad {

struct Parameter {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> moment1;  // Adam first moment
  std::vector<double> moment2;  // Adam second moment
  std::int64_t steps = 0;

  std::size_t size() const { return rows * cols; }
};

// Owns parameters at stable addresses, in creation order.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Parameter& add(std::string name, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
      throw ShapeError("parameter '" + name + "' must have nonzero dims");
    }
    if (find(name) != nullptr) {
      throw ConfigError("duplicate parameter name '" + name + "'");
    }
    auto p = std::make_unique<Parameter>();
    p->name = std::move(name);
    p->rows = rows;
    p->cols = cols;
    p->value.assign(rows * cols, 0.0);
    p->grad.assign(rows * cols, 0.0);
    p->moment1.assign(rows * cols, 0.0);
    p->moment2.assign(rows * cols, 0.0);
    items_.push_back(std::move(p));
    return *items_.back();
  }

  Parameter* find(std::string_view name) {
    for (auto& p : items_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }
  const Parameter* find(std::string_view name) const {
    for (const auto& p : items_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }
  Parameter& at(std::string_view name) {
    Parameter* p = find(name);
    if (p == nullptr) throw ConfigError("unknown parameter '" + std::string(name) + "'");
    return *p;
  }

  std::size_t size() const { return items_.size(); }
  Parameter& operator[](std::size_t i) { return *items_[i]; }
  const Parameter& operator[](std::size_t i) const { return *items_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto& p : items_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  }

 private:
  std::vector<std::unique_ptr<Parameter>> items_;
};

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update over every parameter, then zeroes gradients.
inline void adam_step(ParameterSet& params, const AdamOptions& opt) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params[k];
    ++p.steps;
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(p.steps));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(p.steps));
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      p.moment1[i] = opt.beta1 * p.moment1[i] + (1.0 - opt.beta1) * g;
      p.moment2[i] = opt.beta2 * p.moment2[i] + (1.0 - opt.beta2) * g * g;
      const double mhat = p.moment1[i] / c1;
      const double vhat = p.moment2[i] / c2;
      p.value[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
      p.grad[i] = 0.0;
    }
  }
}

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
inline double clip_grad_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (double g : params[k].grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (double& g : params[k].grad) g *= scale;
    }
  }
  return norm;
}

enum class Op : std::uint8_t {
  Constant,
  Param,
  Embed,
  MatMul,
  Add,
  Sub,
  Mul,
  Concat,
  Tanh,
  Sigmoid,
  Softmax,
  Dot,
  Affine,
  Dropout,
  WeightedSum,
  SoftmaxXent,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Param: return "param";
    case Op::Embed: return "embedding_lookup";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Concat: return "concat";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softmax: return "softmax";
    case Op::Dot: return "dot";
    case Op::Affine: return "affine";
    case Op::Dropout: return "dropout";
    case Op::WeightedSum: return "weighted_sum";
    case Op::SoftmaxXent: return "softmax_cross_entropy";
  }
  return "?";
}

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid until the tape
// is cleared or destroyed.
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::int32_t id() const { return id_; }

  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }
  std::span<const double> values() const;
  double operator[](std::size_t i) const { return values()[i]; }
  double item() const;
  std::vector<double> to_vector() const {
    auto v = values();
    return {v.begin(), v.end()};
  }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

inline std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

// The computation record. Ops are appended in execution order, so the node
// list is topologically sorted and backward is a single reverse sweep.
// Single-threaded; parameters are only read during the forward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Drops all nodes but keeps allocated capacity for reuse.
  void clear() {
    nodes_.clear();
    vals_.clear();
    grads_.clear();
    aux_.clear();
    lists_.clear();
    param_nodes_.clear();
    has_grads_ = false;
  }

  std::size_t node_count() const { return nodes_.size(); }
  Op op_of(Tensor t) const { return nodes_[t.id()].op; }

  // ---- leaves -------------------------------------------------------------

  Tensor constant(std::size_t rows, std::size_t cols, std::span<const double> values) {
    if (values.size() != rows * cols) {
      throw ShapeError("constant: " + std::to_string(values.size()) + " values for shape " +
                       shape_str(rows, cols));
    }
    Tensor t = make(Op::Constant, rows, cols, false);
    std::copy(values.begin(), values.end(), out(t));
    check_finite(t);
    return t;
  }

  Tensor vector(std::span<const double> values) { return constant(values.size(), 1, values); }

  Tensor zeros(std::size_t rows, std::size_t cols) { return make(Op::Constant, rows, cols, false); }

  // The same Parameter always maps to one node per tape.
  Tensor param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Tensor(this, it->second);
    Node n;
    n.op = Op::Param;
    n.rows = static_cast<std::uint32_t>(p.rows);
    n.cols = static_cast<std::uint32_t>(p.cols);
    n.ext = &p;
    n.requires_grad = true;
    nodes_.push_back(n);
    const auto id = static_cast<std::int32_t>(nodes_.size() - 1);
    param_nodes_.emplace(&p, id);
    return Tensor(this, id);
  }

  // Row `row` of an embedding table, as a column vector.
  Tensor embedding_row(Parameter& table, std::size_t row) {
    if (row >= table.rows) {
      throw ShapeError("embedding_lookup: row " + std::to_string(row) + " out of range for " +
                       shape_str(table.rows, table.cols));
    }
    Tensor t = make(Op::Embed, table.cols, 1, true);
    nodes_.back().ext = &table;
    nodes_.back().index = row;
    std::copy_n(table.value.data() + row * table.cols, table.cols, out(t));
    return t;
  }

  // ---- ops ----------------------------------------------------------------

  Tensor matmul(Tensor a, Tensor b) {
    same_tape(a, b, Op::MatMul);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) binary_shape_error(Op::MatMul, a, b);
    Tensor t = make(Op::MatMul, m, n, req(a) || req(b), a, b);
    const double* A = in(a);
    const double* B = in(b);
    double* C = out(t);
    if (n == 1) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* row = A + i * k;
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += row[j] * B[j];
        C[i] = s;
      }
    } else {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          const double aij = A[i * k + j];
          for (std::size_t c = 0; c < n; ++c) C[i * n + c] += aij * B[j * n + c];
        }
      }
    }
    check_finite(t);
    return t;
  }

  Tensor add(Tensor a, Tensor b) { return elementwise(Op::Add, a, b); }
  Tensor sub(Tensor a, Tensor b) { return elementwise(Op::Sub, a, b); }
  Tensor mul(Tensor a, Tensor b) { return elementwise(Op::Mul, a, b); }

  // Stacks column vectors end to end.
  Tensor concat(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    std::size_t total = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
      same_tape(p, parts.front(), Op::Concat);
      if (p.cols() != 1) {
        throw ShapeError(std::string("concat: expected column vectors, got ") +
                         shape_str(p.rows(), p.cols()));
      }
      total += p.rows();
      rg = rg || req(p);
    }
    Tensor t = make(Op::Concat, total, 1, rg);
    set_list(t, parts);
    double* o = out(t);
    for (const Tensor& p : parts) {
      std::copy_n(in(p), p.size(), o);
      o += p.size();
    }
    return t;
  }
  Tensor concat(std::initializer_list<Tensor> parts) {
    return concat(std::span<const Tensor>(parts.begin(), parts.size()));
  }

  Tensor tanh(Tensor a) {
    Tensor t = make(Op::Tanh, a.rows(), a.cols(), req(a), a);
    const double* x = in(a);
    double* y = out(t);
    for (std::size_t i = 0; i < t.size(); ++i) y[i] = std::tanh(x[i]);
    check_finite(t);
    return t;
  }

  Tensor sigmoid(Tensor a) {
    Tensor t = make(Op::Sigmoid, a.rows(), a.cols(), req(a), a);
    const double* x = in(a);
    double* y = out(t);
    for (std::size_t i = 0; i < t.size(); ++i) y[i] = stable_sigmoid(x[i]);
    check_finite(t);
    return t;
  }

  Tensor softmax(Tensor a) {
    if (a.rows() != 1 && a.cols() != 1) {
      throw ShapeError("softmax: expected a vector, got " + shape_str(a.rows(), a.cols()));
    }
    Tensor t = make(Op::Softmax, a.rows(), a.cols(), req(a), a);
    softmax_into(in(a), out(t), t.size());
    check_finite(t);
    return t;
  }

  Tensor dot(Tensor a, Tensor b) {
    same_tape(a, b, Op::Dot);
    if (a.size() != b.size() || a.cols() != b.cols()) binary_shape_error(Op::Dot, a, b);
    Tensor t = make(Op::Dot, 1, 1, req(a) || req(b), a, b);
    const double* x = in(a);
    const double* y = in(b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += x[i] * y[i];
    out(t)[0] = s;
    check_finite(t);
    return t;
  }

  // scale * a + shift
  Tensor affine(Tensor a, double scale, double shift) {
    Tensor t = make(Op::Affine, a.rows(), a.cols(), req(a), a);
    nodes_.back().scalar = scale;
    const double* x = in(a);
    double* y = out(t);
    for (std::size_t i = 0; i < t.size(); ++i) y[i] = scale * x[i] + shift;
    check_finite(t);
    return t;
  }

  // Inverted dropout: survivors are scaled by 1/(1-rate), so inference is
  // the identity and returns the input handle unchanged.
  Tensor dropout(Tensor a, double rate, bool train, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
      throw ShapeError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
    }
    if (!train || rate == 0.0) return a;
    Tensor t = make(Op::Dropout, a.rows(), a.cols(), req(a), a);
    const std::size_t n = t.size();
    const std::size_t mask = alloc_aux(n);
    nodes_.back().aux = mask;
    const double keep = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < n; ++i) aux_[mask + i] = rng.uniform() < rate ? 0.0 : keep;
    const double* x = in(a);
    double* y = out(t);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * aux_[mask + i];
    return t;
  }

  // sum_i weights[i] * items[i]; all items share one shape.
  Tensor weighted_sum(Tensor weights, std::span<const Tensor> items) {
    if (items.empty()) throw ShapeError("weighted_sum: no items");
    if (weights.size() != items.size()) {
      throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights for " +
                       std::to_string(items.size()) + " items");
    }
    const std::size_t r = items.front().rows(), c = items.front().cols();
    bool rg = req(weights);
    for (const Tensor& v : items) {
      same_tape(v, weights, Op::WeightedSum);
      if (v.rows() != r || v.cols() != c) binary_shape_error(Op::WeightedSum, items.front(), v);
      rg = rg || req(v);
    }
    Tensor t = make(Op::WeightedSum, r, c, rg, weights);
    set_list(t, items);
    const double* w = in(weights);
    double* y = out(t);
    for (std::size_t i = 0; i < items.size(); ++i) {
      const double* v = in(items[i]);
      for (std::size_t j = 0; j < r * c; ++j) y[j] += w[i] * v[j];
    }
    check_finite(t);
    return t;
  }

  // -log softmax(logits)[gold], as a 1x1 tensor.
  Tensor softmax_cross_entropy(Tensor logits, std::size_t gold) {
    if (logits.cols() != 1) {
      throw ShapeError("softmax_cross_entropy: expected a column vector, got " +
                       shape_str(logits.rows(), logits.cols()));
    }
    if (gold >= logits.size()) {
      throw ShapeError("softmax_cross_entropy: gold index " + std::to_string(gold) +
                       " out of range for " + std::to_string(logits.size()) + " classes");
    }
    Tensor t = make(Op::SoftmaxXent, 1, 1, req(logits), logits);
    const std::size_t n = logits.size();
    const std::size_t probs = alloc_aux(n);
    nodes_.back().aux = probs;
    nodes_.back().index = gold;
    const double* z = in(logits);
    const double mx = *std::max_element(z, z + n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::exp(z[i] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t i = 0; i < n; ++i) aux_[probs + i] = std::exp(z[i] - lse);
    out(t)[0] = lse - z[gold];
    check_finite(t);
    return t;
  }

  // ---- backward -----------------------------------------------------------

  // Accumulates d(loss)/d(param) into every Parameter::grad reachable from
  // `loss`. Call at most once per recorded graph.
  void backward(Tensor loss) {
    if (loss.tape() != this) throw ShapeError("backward: tensor belongs to another tape");
    if (loss.size() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.rows(), loss.cols()));
    }
    grads_.assign(vals_.size(), 0.0);
    grad_ptr(loss.id())[0] += 1.0;
    for (std::int32_t i = loss.id(); i >= 0; --i) {
      if (nodes_[i].requires_grad) backward_node(i);
    }
    has_grads_ = true;
  }

  // Gradient of the last backward() w.r.t. an intermediate tensor.
  std::span<const double> grad(Tensor t) const {
    if (!has_grads_) throw ShapeError("grad: backward has not run");
    const Node& n = nodes_[t.id()];
    if (n.op == Op::Param) return {n.ext->grad.data(), n.ext->grad.size()};
    return {grads_.data() + n.val, static_cast<std::size_t>(n.rows) * n.cols};
  }

  // ---- accessors used by Tensor -------------------------------------------

  std::size_t rows_of(std::int32_t id) const { return nodes_[id].rows; }
  std::size_t cols_of(std::int32_t id) const { return nodes_[id].cols; }
  std::span<const double> values_of(std::int32_t id) const {
    const Node& n = nodes_[id];
    return {value_ptr(id), static_cast<std::size_t>(n.rows) * n.cols};
  }

  static double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

  static void softmax_into(const double* x, double* y, std::size_t n) {
    const double mx = *std::max_element(x, x + n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = std::exp(x[i] - mx);
      sum += y[i];
    }
    for (std::size_t i = 0; i < n; ++i) y[i] /= sum;
  }

 private:
  struct Node {
    Op op = Op::Constant;
    bool requires_grad = false;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::int32_t a = -1;
    std::int32_t b = -1;
    std::size_t val = 0;   // offset into vals_/grads_
    std::size_t aux = 0;   // offset into aux_
    std::size_t list_off = 0;
    std::size_t list_len = 0;
    std::size_t index = 0;  // embedding row or gold class
    double scalar = 0.0;
    Parameter* ext = nullptr;
  };

  bool req(Tensor t) const { return nodes_[t.id()].requires_grad; }

  const double* value_ptr(std::int32_t id) const {
    const Node& n = nodes_[id];
    return n.op == Op::Param ? n.ext->value.data() : vals_.data() + n.val;
  }
  double* grad_ptr(std::int32_t id) {
    Node& n = nodes_[id];
    return n.op == Op::Param ? n.ext->grad.data() : grads_.data() + n.val;
  }
  const double* in(Tensor t) const { return value_ptr(t.id()); }
  double* out(Tensor t) { return vals_.data() + nodes_[t.id()].val; }

  Tensor make(Op op, std::size_t rows, std::size_t cols, bool requires_grad, Tensor a = {},
              Tensor b = {}) {
    Node n;
    n.op = op;
    n.rows = static_cast<std::uint32_t>(rows);
    n.cols = static_cast<std::uint32_t>(cols);
    n.requires_grad = requires_grad;
    n.a = a.valid() ? a.id() : -1;
    n.b = b.valid() ? b.id() : -1;
    n.val = vals_.size();
    vals_.resize(vals_.size() + rows * cols, 0.0);
    nodes_.push_back(n);
    return Tensor(this, static_cast<std::int32_t>(nodes_.size() - 1));
  }

  std::size_t alloc_aux(std::size_t n) {
    const std::size_t off = aux_.size();
    aux_.resize(off + n, 0.0);
    return off;
  }

  void set_list(Tensor t, std::span<const Tensor> items) {
    Node& n = nodes_[t.id()];
    n.list_off = lists_.size();
    n.list_len = items.size();
    for (const Tensor& x : items) lists_.push_back(x.id());
  }

  Tensor elementwise(Op op, Tensor a, Tensor b) {
    same_tape(a, b, op);
    if (a.rows() != b.rows() || a.cols() != b.cols()) binary_shape_error(op, a, b);
    Tensor t = make(op, a.rows(), a.cols(), req(a) || req(b), a, b);
    const double* x = in(a);
    const double* y = in(b);
    double* z = out(t);
    const std::size_t n = t.size();
    switch (op) {
      case Op::Add:
        for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + y[i];
        break;
      case Op::Sub:
        for (std::size_t i = 0; i < n; ++i) z[i] = x[i] - y[i];
        break;
      default:
        for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
        break;
    }
    check_finite(t);
    return t;
  }

  void same_tape(Tensor a, Tensor b, Op op) const {
    if (!a.valid() || !b.valid()) {
      throw ShapeError(std::string(op_name(op)) + ": invalid (empty) tensor handle");
    }
    if (a.tape() != this || b.tape() != this) {
      throw ShapeError(std::string(op_name(op)) + ": inputs recorded on a different tape");
    }
  }

  [[noreturn]] void binary_shape_error(Op op, Tensor a, Tensor b) const {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                     " vs " + shape_str(b.rows(), b.cols()));
  }

  void check_finite(Tensor t) const {
    const double* v = value_ptr(t.id());
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!std::isfinite(v[i])) {
        throw NumericalError(std::string(op_name(nodes_[t.id()].op)) +
                             ": non-finite output at element " + std::to_string(i));
      }
    }
  }

  void backward_node(std::int32_t id) {
    const Node n = nodes_[id];
    const std::size_t size = static_cast<std::size_t>(n.rows) * n.cols;
    const double* g = grads_.data() + n.val;
    switch (n.op) {
      case Op::Constant:
      case Op::Param:
        return;
      case Op::Embed: {
        double* dst = n.ext->grad.data() + n.index * n.ext->cols;
        for (std::size_t i = 0; i < size; ++i) dst[i] += g[i];
        return;
      }
      case Op::MatMul: {
        const std::size_t m = n.rows, c = n.cols, k = nodes_[n.a].cols;
        const double* A = value_ptr(n.a);
        const double* B = value_ptr(n.b);
        if (nodes_[n.a].requires_grad) {
          double* dA = grad_ptr(n.a);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
              double s = 0.0;
              for (std::size_t q = 0; q < c; ++q) s += g[i * c + q] * B[j * c + q];
              dA[i * k + j] += s;
            }
          }
        }
        if (nodes_[n.b].requires_grad) {
          double* dB = grad_ptr(n.b);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
              const double aij = A[i * k + j];
              for (std::size_t q = 0; q < c; ++q) dB[j * c + q] += aij * g[i * c + q];
            }
          }
        }
        return;
      }
      case Op::Add:
      case Op::Sub: {
        if (nodes_[n.a].requires_grad) {
          double* da = grad_ptr(n.a);
          for (std::size_t i = 0; i < size; ++i) da[i] += g[i];
        }
        if (nodes_[n.b].requires_grad) {
          double* db = grad_ptr(n.b);
          const double sign = n.op == Op::Add ? 1.0 : -1.0;
          for (std::size_t i = 0; i < size; ++i) db[i] += sign * g[i];
        }
        return;
      }
      case Op::Mul: {
        const double* x = value_ptr(n.a);
        const double* y = value_ptr(n.b);
        if (nodes_[n.a].requires_grad) {
          double* da = grad_ptr(n.a);
          for (std::size_t i = 0; i < size; ++i) da[i] += g[i] * y[i];
        }
        if (nodes_[n.b].requires_grad) {
          double* db = grad_ptr(n.b);
          for (std::size_t i = 0; i < size; ++i) db[i] += g[i] * x[i];
        }
        return;
      }
      case Op::Concat: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.list_len; ++k) {
          const std::int32_t src = lists_[n.list_off + k];
          const std::size_t len = nodes_[src].rows;
          if (nodes_[src].requires_grad) {
            double* d = grad_ptr(src);
            for (std::size_t i = 0; i < len; ++i) d[i] += g[off + i];
          }
          off += len;
        }
        return;
      }
      case Op::Tanh: {
        const double* y = vals_.data() + n.val;
        double* da = grad_ptr(n.a);
        for (std::size_t i = 0; i < size; ++i) da[i] += g[i] * (1.0 - y[i] * y[i]);
        return;
      }
      case Op::Sigmoid: {
        const double* y = vals_.data() + n.val;
        double* da = grad_ptr(n.a);
        for (std::size_t i = 0; i < size; ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
        return;
      }
      case Op::Softmax: {
        const double* y = vals_.data() + n.val;
        double gy = 0.0;
        for (std::size_t i = 0; i < size; ++i) gy += g[i] * y[i];
        double* da = grad_ptr(n.a);
        for (std::size_t i = 0; i < size; ++i) da[i] += y[i] * (g[i] - gy);
        return;
      }
      case Op::Dot: {
        const std::size_t len = static_cast<std::size_t>(nodes_[n.a].rows) * nodes_[n.a].cols;
        const double* x = value_ptr(n.a);
        const double* y = value_ptr(n.b);
        if (nodes_[n.a].requires_grad) {
          double* da = grad_ptr(n.a);
          for (std::size_t i = 0; i < len; ++i) da[i] += g[0] * y[i];
        }
        if (nodes_[n.b].requires_grad) {
          double* db = grad_ptr(n.b);
          for (std::size_t i = 0; i < len; ++i) db[i] += g[0] * x[i];
        }
        return;
      }
      case Op::Affine: {
        double* da = grad_ptr(n.a);
        for (std::size_t i = 0; i < size; ++i) da[i] += n.scalar * g[i];
        return;
      }
      case Op::Dropout: {
        double* da = grad_ptr(n.a);
        for (std::size_t i = 0; i < size; ++i) da[i] += g[i] * aux_[n.aux + i];
        return;
      }
      case Op::WeightedSum: {
        const double* w = value_ptr(n.a);
        const bool wgrad = nodes_[n.a].requires_grad;
        for (std::size_t k = 0; k < n.list_len; ++k) {
          const std::int32_t src = lists_[n.list_off + k];
          const double* v = value_ptr(src);
          if (wgrad) {
            double s = 0.0;
            for (std::size_t i = 0; i < size; ++i) s += g[i] * v[i];
            grad_ptr(n.a)[k] += s;
          }
          if (nodes_[src].requires_grad) {
            double* dv = grad_ptr(src);
            for (std::size_t i = 0; i < size; ++i) dv[i] += w[k] * g[i];
          }
        }
        return;
      }
      case Op::SoftmaxXent: {
        const std::size_t len = nodes_[n.a].rows;
        double* da = grad_ptr(n.a);
        for (std::size_t i = 0; i < len; ++i) {
          const double target = i == n.index ? 1.0 : 0.0;
          da[i] += g[0] * (aux_[n.aux + i] - target);
        }
        return;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<double> aux_;
  std::vector<std::int32_t> lists_;
  std::unordered_map<const Parameter*, std::int32_t> param_nodes_;
  bool has_grads_ = false;
};

inline std::size_t Tensor::rows() const { return tape_->rows_of(id_); }
inline std::size_t Tensor::cols() const { return tape_->cols_of(id_); }
inline std::span<const double> Tensor::values() const { return tape_->values_of(id_); }
inline double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor is " + shape_str(rows(), cols()) + ", not scalar");
  return values()[0];
}

// Free-function spellings, so model code reads as math.
inline Tensor matmul(Tensor a, Tensor b) { return a.tape()->matmul(a, b); }
inline Tensor add(Tensor a, Tensor b) { return a.tape()->add(a, b); }
inline Tensor sub(Tensor a, Tensor b) { return a.tape()->sub(a, b); }
inline Tensor mul(Tensor a, Tensor b) { return a.tape()->mul(a, b); }
inline Tensor tanh(Tensor a) { return a.tape()->tanh(a); }
inline Tensor sigmoid(Tensor a) { return a.tape()->sigmoid(a); }
inline Tensor softmax(Tensor a) { return a.tape()->softmax(a); }
inline Tensor dot(Tensor a, Tensor b) { return a.tape()->dot(a, b); }
inline Tensor affine(Tensor a, double scale, double shift) { return a.tape()->affine(a, scale, shift); }
inline Tensor concat(std::initializer_list<Tensor> parts) { return parts.begin()->tape()->concat(parts); }
inline Tensor concat(std::span<const Tensor> parts) { return parts.front().tape()->concat(parts); }
inline Tensor weighted_sum(Tensor w, std::span<const Tensor> items) {
  return w.tape()->weighted_sum(w, items);
}
inline Tensor dropout(Tensor a, double rate, bool train, Rng& rng) {
  return a.tape()->dropout(a, rate, train, rng);
}
inline Tensor softmax_cross_entropy(Tensor logits, std::size_t gold) {
  return logits.tape()->softmax_cross_entropy(logits, gold);
}

}  // namespace ndpr::ad
