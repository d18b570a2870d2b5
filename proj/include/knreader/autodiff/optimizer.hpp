#pragma once

#include <cstddef>
#include <vector>

#include "knreader/autodiff/parameters.hpp"

namespace knreader::autodiff {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip = 10.0;  // element-wise gradient range [-clip, clip]
};

template <typename T>
struct OptimizerState {
  AdamConfig config;
  std::vector<Tensor<T>> first_moment;   // aligned with ParameterSet order
  std::vector<Tensor<T>> second_moment;
  std::size_t step = 0;
};

template <typename T>
OptimizerState<T> make_optimizer_state(const ParameterSet<T>& params, const AdamConfig& config = {});

// Clips every gradient entry of each trainable parameter to [-clip, clip], then
// applies one bias-corrected Adam update. Frozen parameters keep their values and
// moments. Gradients are left untouched.
template <typename T>
void clip_then_adam_step(ParameterSet<T>& params, OptimizerState<T>& state);

}  // namespace knreader::autodiff
