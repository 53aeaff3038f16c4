#include "dhlight/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dhlight/error.hpp"

namespace dhlight::nn {

namespace {

Tape& common_tape(std::initializer_list<Var> vars, const char* op) {
  Tape* tape = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw TapeError(std::string(op) + ": operand is not recorded on a tape");
    if (tape == nullptr) tape = v.tape();
    if (v.tape() != tape) throw TapeError(std::string(op) + ": operands live on different tapes");
  }
  return *tape;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": left operand is " + shape_string(a) +
                         ", right operand is " + shape_string(b));
  }
}

// out += a * b^T  (a n×k, b m×k -> n×m)
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.data().data() + i * a.cols();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.data().data() + j * b.cols();
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += arow[p] * brow[p];
      out(i, j) += acc;
    }
  }
}

// out += a^T * b  (a k×n, b k×m -> n×m)
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double* brow = b.data().data() + p * b.cols();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double api = a(p, i);
      if (api == 0.0) continue;
      double* orow = out.data().data() + i * out.cols();
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += api * brow[j];
    }
  }
}

Matrix elementwise(const Matrix& a, double (*f)(double)) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

// ---- Var / Tape -----------------------------------------------------------

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw TapeError("Var::value on an untraced value");
  return tape_->value(index_);
}

const Matrix& Var::grad() const {
  if (tape_ == nullptr) throw TapeError("Var::grad on an untraced value");
  return tape_->grad(index_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionError("Var::scalar on a " + shape_string(v) + " value");
  return v[0];
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(ParameterStore& store, ParamId id) {
  auto& cache = param_nodes_[&store];
  if (auto it = cache.find(id.index); it != cache.end()) return Var(this, it->second);
  Node n;
  n.value = store.value(id);
  n.requires_grad = true;
  n.store = &store;
  n.param = id;
  Var v = push(std::move(n));
  cache.emplace(id.index, v.index());
  return v;
}

Var Tape::param(const ParameterStore& store, ParamId id) {
  auto& cache = param_nodes_[&store];
  if (auto it = cache.find(id.index); it != cache.end()) return Var(this, it->second);
  Var v = constant(store.value(id));
  cache.emplace(id.index, v.index());
  return v;
}

Var Tape::record(Matrix value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.tape() != this) throw TapeError("Tape::record: input from a different tape");
    n.inputs.push_back(in.index());
    n.requires_grad = n.requires_grad || nodes_[in.index()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.tape() != this) throw TapeError("backward: loss is not traced on this tape");
  if (nodes_[loss.index()].value.size() != 1) {
    throw TapeError("backward: loss must be scalar, got " + shape_string(nodes_[loss.index()].value));
  }
  for (std::size_t i = 0; i <= loss.index(); ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad) {
      n.grad = Matrix(n.value.rows(), n.value.cols());
    } else {
      n.grad = Matrix();
    }
  }
  if (!nodes_[loss.index()].requires_grad) return;
  nodes_[loss.index()].grad[0] = 1.0;

  std::vector<const Matrix*> in_values;
  std::vector<Matrix*> in_grads;
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t in : n.inputs) {
      in_values.push_back(&nodes_[in].value);
      in_grads.push_back(nodes_[in].requires_grad ? &nodes_[in].grad : nullptr);
    }
    n.backward(n.grad, n.value, in_values, in_grads);
  }
  for (std::size_t i = 0; i <= loss.index(); ++i) {
    Node& n = nodes_[i];
    if (n.store != nullptr) n.store->at(n.param).grad.accumulate(n.grad);
  }
}

// ---- ops ------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = common_tape({a, b}, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out = matmul(av, bv);
  t.add_macs(static_cast<std::uint64_t>(av.rows()) * av.cols() * bv.cols());
  return t.record(std::move(out), {a, b},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const> in,
                     std::span<Matrix* const> grads) {
                    if (grads[0]) gemm_nt(g, *in[1], *grads[0]);
                    if (grads[1]) gemm_tn(*in[0], g, *grads[1]);
                  });
}

Var dense(Var x, Var w, Var b) {
  if (x.cols() != w.rows()) {
    throw DimensionError("dense: input x is " + shape_string(x.value()) + ", weight W is " +
                         shape_string(w.value()));
  }
  if (b.rows() != 1 || b.cols() != w.cols()) {
    throw DimensionError("dense: weight W is " + shape_string(w.value()) + ", bias b is " +
                         shape_string(b.value()));
  }
  return add_row(matmul(x, w), b);
}

Var add(Var a, Var b) {
  Tape& t = common_tape({a, b}, "add");
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value();
  out.accumulate(b.value());
  return t.record(std::move(out), {a, b},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const>,
                     std::span<Matrix* const> grads) {
                    if (grads[0]) grads[0]->accumulate(g);
                    if (grads[1]) grads[1]->accumulate(g);
                  });
}

Var sub(Var a, Var b) {
  Tape& t = common_tape({a, b}, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return t.record(std::move(out), {a, b},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const>,
                     std::span<Matrix* const> grads) {
                    if (grads[0]) grads[0]->accumulate(g);
                    if (grads[1])
                      for (std::size_t i = 0; i < g.size(); ++i) (*grads[1])[i] -= g[i];
                  });
}

Var hadamard(Var a, Var b) {
  Tape& t = common_tape({a, b}, "hadamard");
  require_same_shape(a.value(), b.value(), "hadamard");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  t.add_macs(out.size());
  return t.record(std::move(out), {a, b},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const> in,
                     std::span<Matrix* const> grads) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      if (grads[0]) (*grads[0])[i] += g[i] * (*in[1])[i];
                      if (grads[1]) (*grads[1])[i] += g[i] * (*in[0])[i];
                    }
                  });
}

Var scale(Var a, double factor) {
  Tape& t = common_tape({a}, "scale");
  Matrix out = a.value();
  for (double& v : out.data()) v *= factor;
  return t.record(std::move(out), {a},
                  [factor](const Matrix& g, const Matrix&, std::span<const Matrix* const>,
                           std::span<Matrix* const> grads) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += factor * g[i];
                  });
}

Var add_scalar(Var a, double offset) {
  Tape& t = common_tape({a}, "add_scalar");
  Matrix out = a.value();
  for (double& v : out.data()) v += offset;
  return t.record(std::move(out), {a},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const>,
                     std::span<Matrix* const> grads) { grads[0]->accumulate(g); });
}

Var add_row(Var a, Var b) {
  Tape& t = common_tape({a, b}, "add_row");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_row: matrix is " + shape_string(av) + ", row is " + shape_string(bv));
  }
  Matrix out = av;
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) += bv[j];
  return t.record(std::move(out), {a, b},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const>,
                     std::span<Matrix* const> grads) {
                    if (grads[0]) grads[0]->accumulate(g);
                    if (grads[1])
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) (*grads[1])[j] += g(i, j);
                  });
}

Var mul_rows(Var a, Var col) {
  Tape& t = common_tape({a, col}, "mul_rows");
  const Matrix& av = a.value();
  const Matrix& cv = col.value();
  if (cv.cols() != 1 || cv.rows() != av.rows()) {
    throw DimensionError("mul_rows: matrix is " + shape_string(av) + ", column is " + shape_string(cv));
  }
  Matrix out = av;
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) *= cv[i];
  t.add_macs(out.size());
  return t.record(std::move(out), {a, col},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const> in,
                     std::span<Matrix* const> grads) {
                    const Matrix& av = *in[0];
                    const Matrix& cv = *in[1];
                    for (std::size_t i = 0; i < g.rows(); ++i) {
                      for (std::size_t j = 0; j < g.cols(); ++j) {
                        if (grads[0]) (*grads[0])(i, j) += g(i, j) * cv[i];
                        if (grads[1]) (*grads[1])[i] += g(i, j) * av(i, j);
                      }
                    }
                  });
}

Var div_rows(Var a, Var col) {
  Tape& t = common_tape({a, col}, "div_rows");
  const Matrix& av = a.value();
  const Matrix& cv = col.value();
  if (cv.cols() != 1 || cv.rows() != av.rows()) {
    throw DimensionError("div_rows: matrix is " + shape_string(av) + ", column is " + shape_string(cv));
  }
  Matrix out = av;
  for (std::size_t i = 0; i < av.rows(); ++i) {
    if (cv[i] == 0.0) throw NumericError("div_rows: zero divisor at row " + std::to_string(i));
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) /= cv[i];
  }
  t.add_macs(out.size());
  return t.record(std::move(out), {a, col},
                  [](const Matrix& g, const Matrix& out, std::span<const Matrix* const> in,
                     std::span<Matrix* const> grads) {
                    const Matrix& cv = *in[1];
                    for (std::size_t i = 0; i < g.rows(); ++i) {
                      for (std::size_t j = 0; j < g.cols(); ++j) {
                        if (grads[0]) (*grads[0])(i, j) += g(i, j) / cv[i];
                        if (grads[1]) (*grads[1])[i] -= g(i, j) * out(i, j) / cv[i];
                      }
                    }
                  });
}

Var relu(Var a) {
  Tape& t = common_tape({a}, "relu");
  Matrix out = elementwise(a.value(), [](double x) { return x > 0.0 ? x : 0.0; });
  return t.record(std::move(out), {a},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const> in,
                     std::span<Matrix* const> grads) {
                    for (std::size_t i = 0; i < g.size(); ++i)
                      if ((*in[0])[i] > 0.0) (*grads[0])[i] += g[i];
                  });
}

Var exp(Var a) {
  Tape& t = common_tape({a}, "exp");
  Matrix out = elementwise(a.value(), [](double x) { return std::exp(x); });
  return t.record(std::move(out), {a},
                  [](const Matrix& g, const Matrix& out, std::span<const Matrix* const>,
                     std::span<Matrix* const> grads) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * out[i];
                  });
}

Var log(Var a) {
  Tape& t = common_tape({a}, "log");
  for (double x : a.value().data()) {
    if (!(x > 0.0)) throw NumericError("log: non-positive argument " + std::to_string(x));
  }
  Matrix out = elementwise(a.value(), [](double x) { return std::log(x); });
  return t.record(std::move(out), {a},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const> in,
                     std::span<Matrix* const> grads) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] / (*in[0])[i];
                  });
}

Var softmax_rows(Var a) {
  Tape& t = common_tape({a}, "softmax_rows");
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    auto p = softmax(av.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return t.record(std::move(out), {a},
                  [](const Matrix& g, const Matrix& out, std::span<const Matrix* const>,
                     std::span<Matrix* const> grads) {
                    for (std::size_t i = 0; i < g.rows(); ++i) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * out(i, j);
                      for (std::size_t j = 0; j < g.cols(); ++j)
                        (*grads[0])(i, j) += out(i, j) * (g(i, j) - dot);
                    }
                  });
}

Var log_softmax_rows(Var a) {
  Tape& t = common_tape({a}, "log_softmax_rows");
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    auto r = av.row(i);
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : r) {
      if (!std::isfinite(x)) throw NumericError("log_softmax_rows: non-finite input");
      hi = std::max(hi, x);
    }
    double z = 0.0;
    for (double x : r) z += std::exp(x - hi);
    const double lse = hi + std::log(z);
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = r[j] - lse;
  }
  return t.record(std::move(out), {a},
                  [](const Matrix& g, const Matrix& out, std::span<const Matrix* const>,
                     std::span<Matrix* const> grads) {
                    for (std::size_t i = 0; i < g.rows(); ++i) {
                      double gs = 0.0;
                      for (std::size_t j = 0; j < g.cols(); ++j) gs += g(i, j);
                      for (std::size_t j = 0; j < g.cols(); ++j)
                        (*grads[0])(i, j) += g(i, j) - std::exp(out(i, j)) * gs;
                    }
                  });
}

Var sum(Var a) {
  Tape& t = common_tape({a}, "sum");
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return t.record(Matrix::scalar(s), {a},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const>,
                     std::span<Matrix* const> grads) {
                    for (double& x : grads[0]->data()) x += g[0];
                  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean: empty operand");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sum(Var a) {
  Tape& t = common_tape({a}, "row_sum");
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out[i] += av(i, j);
  return t.record(std::move(out), {a},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const>,
                     std::span<Matrix* const> grads) {
                    Matrix& ga = *grads[0];
                    for (std::size_t i = 0; i < ga.rows(); ++i)
                      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g[i];
                  });
}

Var col_sum(Var a) {
  Tape& t = common_tape({a}, "col_sum");
  const Matrix& av = a.value();
  Matrix out(1, av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out[j] += av(i, j);
  return t.record(std::move(out), {a},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const>,
                     std::span<Matrix* const> grads) {
                    Matrix& ga = *grads[0];
                    for (std::size_t i = 0; i < ga.rows(); ++i)
                      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g[j];
                  });
}

Var col_mean(Var a) {
  const std::size_t n = a.rows();
  if (n == 0) throw DimensionError("col_mean: no rows");
  a.tape()->add_macs(a.value().size());
  return scale(col_sum(a), 1.0 / static_cast<double>(n));
}

Var l1_norm(Var a) {
  Tape& t = common_tape({a}, "l1_norm");
  double s = 0.0;
  for (double x : a.value().data()) s += std::abs(x);
  return t.record(Matrix::scalar(s), {a},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const> in,
                     std::span<Matrix* const> grads) {
                    for (std::size_t i = 0; i < in[0]->size(); ++i) {
                      const double x = (*in[0])[i];
                      (*grads[0])[i] += g[0] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
                    }
                  });
}

Var l2_norm(Var a) {
  Tape& t = common_tape({a}, "l2_norm");
  double s = 0.0;
  for (double x : a.value().data()) s += x * x;
  t.add_macs(a.value().size());
  return t.record(Matrix::scalar(std::sqrt(s)), {a},
                  [](const Matrix& g, const Matrix& out, std::span<const Matrix* const> in,
                     std::span<Matrix* const> grads) {
                    if (out[0] == 0.0) return;  // subgradient 0 at the origin
                    for (std::size_t i = 0; i < in[0]->size(); ++i)
                      (*grads[0])[i] += g[0] * (*in[0])[i] / out[0];
                  });
}

Var row_l2_norm(Var a) {
  Tape& t = common_tape({a}, "row_l2_norm");
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double s = 0.0;
    for (double x : av.row(i)) s += x * x;
    out[i] = std::sqrt(s);
  }
  t.add_macs(av.size());
  return t.record(std::move(out), {a},
                  [](const Matrix& g, const Matrix& out, std::span<const Matrix* const> in,
                     std::span<Matrix* const> grads) {
                    const Matrix& av = *in[0];
                    for (std::size_t i = 0; i < av.rows(); ++i) {
                      if (out[i] == 0.0) continue;
                      for (std::size_t j = 0; j < av.cols(); ++j)
                        (*grads[0])(i, j) += g[i] * av(i, j) / out[i];
                    }
                  });
}

Var transpose(Var a) {
  Tape& t = common_tape({a}, "transpose");
  return t.record(transpose(a.value()), {a},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const>,
                     std::span<Matrix* const> grads) {
                    Matrix& ga = *grads[0];
                    for (std::size_t i = 0; i < g.rows(); ++i)
                      for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
                  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  Tape& t = common_tape({parts[0]}, "concat_cols");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    common_tape({parts[0], p}, "concat_cols");
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: " + shape_string(parts[0].value()) + " vs " +
                           shape_string(p.value()));
    }
    offsets.push_back(cols);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& pv = parts[k].value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, offsets[k] + j) = pv(i, j);
  }
  return t.record(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                  [offsets](const Matrix& g, const Matrix&, std::span<const Matrix* const> in,
                            std::span<Matrix* const> grads) {
                    for (std::size_t k = 0; k < in.size(); ++k) {
                      if (!grads[k]) continue;
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < in[k]->cols(); ++j)
                          (*grads[k])(i, j) += g(i, offsets[k] + j);
                    }
                  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  Tape& t = common_tape({parts[0]}, "concat_rows");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    common_tape({parts[0], p}, "concat_rows");
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: " + shape_string(parts[0].value()) + " vs " +
                           shape_string(p.value()));
    }
    offsets.push_back(rows);
    rows += p.rows();
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& pv = parts[k].value();
    std::copy(pv.data().begin(), pv.data().end(), out.data().begin() + offsets[k] * cols);
  }
  return t.record(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                  [offsets, cols](const Matrix& g, const Matrix&, std::span<const Matrix* const> in,
                                  std::span<Matrix* const> grads) {
                    for (std::size_t k = 0; k < in.size(); ++k) {
                      if (!grads[k]) continue;
                      const std::size_t base = offsets[k] * cols;
                      for (std::size_t i = 0; i < in[k]->size(); ++i) (*grads[k])[i] += g[base + i];
                    }
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& t = common_tape({a}, "slice_cols");
  const Matrix& av = a.value();
  if (begin + count > av.cols()) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_string(av));
  }
  Matrix out(av.rows(), count);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, begin + j);
  return t.record(std::move(out), {a},
                  [begin](const Matrix& g, const Matrix&, std::span<const Matrix* const>,
                          std::span<Matrix* const> grads) {
                    for (std::size_t i = 0; i < g.rows(); ++i)
                      for (std::size_t j = 0; j < g.cols(); ++j) (*grads[0])(i, begin + j) += g(i, j);
                  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Matrix& av = a.value();
  if (begin + count > av.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_string(av));
  }
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = begin + i;
  return select_rows(a, idx);
}

Var select_rows(Var a, std::span<const std::size_t> rows) {
  Tape& t = common_tape({a}, "select_rows");
  const Matrix& av = a.value();
  Matrix out(rows.size(), av.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= av.rows()) {
      throw DimensionError("select_rows: row " + std::to_string(rows[k]) + " out of " + shape_string(av));
    }
    std::copy(av.row(rows[k]).begin(), av.row(rows[k]).end(), out.row(k).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return t.record(std::move(out), {a},
                  [idx](const Matrix& g, const Matrix&, std::span<const Matrix* const>,
                        std::span<Matrix* const> grads) {
                    for (std::size_t k = 0; k < idx.size(); ++k)
                      for (std::size_t j = 0; j < g.cols(); ++j) (*grads[0])(idx[k], j) += g(k, j);
                  });
}

Var scatter(Matrix base, Var src, std::span<const ScatterEntry> entries) {
  Tape& t = common_tape({src}, "scatter");
  const Matrix& sv = src.value();
  for (const auto& e : entries) {
    if (e.src_index >= sv.size() || e.dst_index >= base.size()) {
      throw DimensionError("scatter: entry out of range (src " + std::to_string(e.src_index) + " of " +
                           shape_string(sv) + ", dst " + std::to_string(e.dst_index) + " of " +
                           shape_string(base) + ")");
    }
    base[e.dst_index] = sv[e.src_index];
  }
  std::vector<ScatterEntry> map(entries.begin(), entries.end());
  return t.record(std::move(base), {src},
                  [map](const Matrix& g, const Matrix&, std::span<const Matrix* const>,
                        std::span<Matrix* const> grads) {
                    for (const auto& e : map) (*grads[0])[e.src_index] += g[e.dst_index];
                  });
}

Var pick(Var a, std::span<const std::size_t> index) {
  Tape& t = common_tape({a}, "pick");
  const Matrix& av = a.value();
  if (index.size() != av.rows()) {
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " + shape_string(av));
  }
  Matrix out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    if (index[i] >= av.cols()) throw DimensionError("pick: column index out of range");
    out[i] = av(i, index[i]);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return t.record(std::move(out), {a},
                  [idx](const Matrix& g, const Matrix&, std::span<const Matrix* const>,
                        std::span<Matrix* const> grads) {
                    for (std::size_t i = 0; i < idx.size(); ++i) (*grads[0])(i, idx[i]) += g[i];
                  });
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = common_tape({a}, "clamp");
  Matrix out = a.value();
  for (double& x : out.data()) x = std::clamp(x, lo, hi);
  return t.record(std::move(out), {a},
                  [lo, hi](const Matrix& g, const Matrix&, std::span<const Matrix* const> in,
                           std::span<Matrix* const> grads) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      const double x = (*in[0])[i];
                      if (x > lo && x < hi) (*grads[0])[i] += g[i];
                    }
                  });
}

Var minimum(Var a, Var b) {
  Tape& t = common_tape({a, b}, "minimum");
  require_same_shape(a.value(), b.value(), "minimum");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], b.value()[i]);
  // Ties route the gradient to the left operand.
  return t.record(std::move(out), {a, b},
                  [](const Matrix& g, const Matrix&, std::span<const Matrix* const> in,
                     std::span<Matrix* const> grads) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      const bool left = (*in[0])[i] <= (*in[1])[i];
                      if (left && grads[0]) (*grads[0])[i] += g[i];
                      if (!left && grads[1]) (*grads[1])[i] += g[i];
                    }
                  });
}

Var mse(Var prediction, Var target) {
  Var diff = sub(prediction, target);
  return mean(hadamard(diff, diff));
}

// ---- untraced -------------------------------------------------------------

std::vector<double> softmax(std::span<const double> v) {
  double max = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("softmax: non-finite input");
    max = std::max(max, x);
  }
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - max);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

Matrix dense_forward(const Matrix& x, const Matrix& w, const Matrix& b) {
  if (x.cols() != w.rows()) {
    throw DimensionError("dense_forward: input x is " + shape_string(x) + ", weight W is " +
                         shape_string(w));
  }
  if (b.rows() != 1 || b.cols() != w.cols()) {
    throw DimensionError("dense_forward: weight W is " + shape_string(w) + ", bias b is " +
                         shape_string(b));
  }
  Matrix out = matmul(x, w);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b[j];
  return out;
}

}  // namespace dhlight::nn
