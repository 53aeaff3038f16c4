#pragma once

#include <functional>
#include <string>

#include "dhlight/nn/parameter_store.hpp"
#include "dhlight/nn/tape.hpp"

namespace dhlight::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update over every parameter in the store. Gradient
// buffers are left as they are; callers zero them.
void adam_step(ParameterStore& store, double lr, const AdamConfig& cfg = {});

// Builds a scalar loss on the given tape from the store's current values.
using LossBuilder = std::function<Var(Tape&, ParameterStore&)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares reverse-mode gradients with central differences for every scalar
// in the store. Relative error is |a - n| / max(|a|, |n|, floor). The loss
// must be deterministic in the parameters; that is not checked. Store values
// are restored and gradients are left holding the analytic result.
GradCheckReport finite_diff_check(const LossBuilder& loss, ParameterStore& store, double step = 1e-5,
                                  double floor = 1e-6);

}  // namespace dhlight::nn
