#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dhlight/nn/matrix.hpp"

namespace dhlight::nn {

struct ParamId {
  std::size_t index = 0;
  bool operator==(const ParamId&) const = default;
};

// One trainable tensor plus its gradient and Adam state. All four matrices
// always share a shape.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix first_moment;
  Matrix second_moment;
  std::uint64_t step = 0;
};

class ParameterStore {
 public:
  ParamId add(std::string name, Matrix init);

  ParamId find(std::string_view name) const;
  bool contains(std::string_view name) const;

  Parameter& at(ParamId id) { return params_.at(id.index); }
  const Parameter& at(ParamId id) const { return params_.at(id.index); }
  Matrix& value(ParamId id) { return at(id).value; }
  const Matrix& value(ParamId id) const { return at(id).value; }
  const Matrix& grad(ParamId id) const { return at(id).grad; }

  std::span<Parameter> params() { return params_; }
  std::span<const Parameter> params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grads();
  double grad_norm() const;
  // Rescales all gradients so their global L2 norm is at most max_norm.
  void clip_grad_norm(double max_norm);

 private:
  std::vector<Parameter> params_;
};

// Uniform in ±sqrt(6/(fan_in+fan_out)).
Matrix xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
Matrix uniform(std::size_t rows, std::size_t cols, double lo, double hi, std::mt19937_64& rng);

}  // namespace dhlight::nn
