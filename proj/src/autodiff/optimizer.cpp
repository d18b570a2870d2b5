#include "knreader/autodiff/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace knreader::autodiff {

template <typename T>
OptimizerState<T> make_optimizer_state(const ParameterSet<T>& params, const AdamConfig& config) {
  OptimizerState<T> state;
  state.config = config;
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.first_moment.emplace_back(params[i].value.rows(), params[i].value.cols());
    state.second_moment.emplace_back(params[i].value.rows(), params[i].value.cols());
  }
  return state;
}

template <typename T>
void clip_then_adam_step(ParameterSet<T>& params, OptimizerState<T>& state) {
  if (state.first_moment.size() != params.size()) throw ShapeError("optimizer state does not match the parameter set");
  const AdamConfig& c = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T clip = static_cast<T>(c.clip);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = params[i];
    if (!p.trainable) continue;
    Tensor<T>& m = state.first_moment[i];
    Tensor<T>& v = state.second_moment[i];
    if (!m.same_shape(p.value)) throw ShapeError("optimizer moments do not match parameter '" + p.name + "'");
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const T g = std::clamp(p.grad[k], -clip, clip);
      m[k] = b1 * m[k] + (T(1) - b1) * g;
      v[k] = b2 * v[k] + (T(1) - b2) * g * g;
      const double m_hat = static_cast<double>(m[k]) / correction1;
      const double v_hat = static_cast<double>(v[k]) / correction2;
      p.value[k] -= static_cast<T>(c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon));
    }
  }
}

template OptimizerState<float> make_optimizer_state<float>(const ParameterSet<float>&, const AdamConfig&);
template OptimizerState<double> make_optimizer_state<double>(const ParameterSet<double>&, const AdamConfig&);
template void clip_then_adam_step<float>(ParameterSet<float>&, OptimizerState<float>&);
template void clip_then_adam_step<double>(ParameterSet<double>&, OptimizerState<double>&);

}  // namespace knreader::autodiff
