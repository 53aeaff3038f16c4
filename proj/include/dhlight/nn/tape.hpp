#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dhlight/nn/matrix.hpp"
#include "dhlight/nn/parameter_store.hpp"

namespace dhlight::nn {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

// Backward rule for one recorded op. input_grads[i] is null when input i does
// not need a gradient.
using BackwardFn = std::function<void(const Matrix& out_grad, const Matrix& out_value,
                                      std::span<const Matrix* const> input_values,
                                      std::span<Matrix* const> input_grads)>;

// Define-by-run gradient tape. Ops append nodes in evaluation order, so a
// reverse sweep over the node list is a valid topological order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Free leaf that collects a gradient but is not bound to a store.
  Var variable(Matrix value);
  // Leaf bound to a store parameter. Repeated calls return the same node.
  // backward() adds the leaf gradient into the store's gradient buffer.
  Var param(ParameterStore& store, ParamId id);
  // Read-only parameter leaf: no gradient is ever written back.
  Var param(const ParameterStore& store, ParamId id);

  Var record(Matrix value, std::vector<Var> inputs, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. loss must be a
  // 1×1 value recorded on this tape.
  void backward(Var loss);

  const Matrix& value(std::size_t index) const { return nodes_.at(index).value; }
  const Matrix& grad(std::size_t index) const { return nodes_.at(index).grad; }
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(Var v) const { return nodes_.at(v.index()).requires_grad; }

  // Multiply-accumulate counter for instrumentation.
  void add_macs(std::uint64_t n) { macs_ += n; }
  std::uint64_t mac_count() const { return macs_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    ParameterStore* store = nullptr;
    ParamId param;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const ParameterStore*, std::unordered_map<std::size_t, std::size_t>> param_nodes_;
  std::uint64_t macs_ = 0;
  bool backward_done_ = false;
};

// ---- traced ops -----------------------------------------------------------

Var matmul(Var a, Var b);
// x W + b with x n×k, W k×m, b 1×m broadcast over rows.
Var dense(Var x, Var w, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
// a (n×m) + b (1×m) broadcast over rows.
Var add_row(Var a, Var b);
// a (n×m) scaled row-wise by col (n×1).
Var mul_rows(Var a, Var col);
// a (n×m) divided row-wise by col (n×1).
Var div_rows(Var a, Var col);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);
Var col_sum(Var a);
Var col_mean(Var a);
Var l1_norm(Var a);
Var l2_norm(Var a);
Var row_l2_norm(Var a);
Var transpose(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var select_rows(Var a, std::span<const std::size_t> rows);
// Returns base with out[dst[i]] = src[src_index[i]] (flat indices); every other
// entry keeps its base value. Gradient flows only into src.
struct ScatterEntry {
  std::size_t src_index;
  std::size_t dst_index;
};
Var scatter(Matrix base, Var src, std::span<const ScatterEntry> entries);
// out[i] = a(i, index[i]) as an n×1 column.
Var pick(Var a, std::span<const std::size_t> index);
Var clamp(Var a, double lo, double hi);
Var minimum(Var a, Var b);
Var mse(Var prediction, Var target);

// ---- untraced helpers -----------------------------------------------------

// Numerically stable softmax; throws NumericError on non-finite input.
std::vector<double> softmax(std::span<const double> v);
// Returns x W + b; throws DimensionError naming both operands on mismatch.
Matrix dense_forward(const Matrix& x, const Matrix& w, const Matrix& b);

}  // namespace dhlight::nn
