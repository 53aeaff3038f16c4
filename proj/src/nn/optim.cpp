#include "dhlight/nn/optim.hpp"

#include <algorithm>
#include <cmath>

namespace dhlight::nn {

void adam_step(ParameterStore& store, double lr, const AdamConfig& cfg) {
  for (Parameter& p : store.params()) {
    p.step += 1;
    const double t = static_cast<double>(p.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      p.first_moment[i] = cfg.beta1 * p.first_moment[i] + (1.0 - cfg.beta1) * g;
      p.second_moment[i] = cfg.beta2 * p.second_moment[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = p.first_moment[i] / c1;
      const double v_hat = p.second_moment[i] / c2;
      p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

GradCheckReport finite_diff_check(const LossBuilder& loss, ParameterStore& store, double step,
                                  double floor) {
  store.zero_grads();
  {
    Tape tape;
    Var l = loss(tape, store);
    tape.backward(l);
  }
  auto evaluate = [&] {
    Tape tape;
    return loss(tape, store).scalar();
  };

  GradCheckReport report;
  for (std::size_t pi = 0; pi < store.size(); ++pi) {
    Parameter& p = store.params()[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double original = p.value[i];
      p.value[i] = original + step;
      const double up = evaluate();
      p.value[i] = original - step;
      const double down = evaluate();
      p.value[i] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > report.max_relative_error || report.worst_parameter.empty()) {
        report.max_relative_error = rel;
        report.worst_parameter = p.name;
        report.worst_index = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace dhlight::nn
