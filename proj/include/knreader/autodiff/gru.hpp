#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "knreader/autodiff/graph.hpp"

namespace knreader::autodiff {

// Gate layout along the 3h axis: [update | reset | candidate].
//   z  = sigmoid(x Wz + h Uz + bz)
//   r  = sigmoid(x Wr + h Ur + br)
//   h~ = tanh(x Wc + (r * h) Uc + bc)
//   h' = (1 - z) * h + z * h~
template <typename T>
struct GruParams {
  Parameter<T>* input_weights = nullptr;             // in x 3h
  Parameter<T>* hidden_gate_weights = nullptr;       // h x 2h
  Parameter<T>* hidden_candidate_weights = nullptr;  // h x h
  Parameter<T>* bias = nullptr;                      // 1 x 3h
  std::size_t input_width = 0;
  std::size_t hidden_width = 0;
};

// Registers "<prefix>.input_weights" etc. Weights are Glorot-uniform, biases zero.
template <typename T>
GruParams<T> add_gru_params(ParameterSet<T>& set, const std::string& prefix, std::size_t input_width,
                            std::size_t hidden_width, std::mt19937_64& rng);

// Looks the four tensors up by prefix and checks their shapes agree.
template <typename T>
GruParams<T> find_gru_params(ParameterSet<T>& set, const std::string& prefix);

// GRU parameters entered on one graph, reused for every step.
struct BoundGru {
  Var input_weights;
  Var hidden_gate_weights;
  Var hidden_candidate_weights;
  Var bias;
  std::size_t input_width = 0;
  std::size_t hidden_width = 0;
};

template <typename T>
BoundGru bind(Graph<T>& g, const GruParams<T>& params);

// One step for a batch: x is B x in, h_prev is B x h.
template <typename T>
Var gru_cell(Graph<T>& g, Var x, Var h_prev, const BoundGru& gru);

struct BiGruResult {
  std::vector<Var> outputs;  // per step, B x 2h = [forward ; backward]; empty unless requested
  Var final_forward;         // after the last valid step
  Var final_backward;        // after the first step (reverse direction)
};

// Runs the forward cell left-to-right and the backward cell right-to-left.
// `masks[t]` holds one 0/1 entry per batch row (empty = all valid); masked
// steps carry the state through unchanged. Throws DomainError on an empty
// sequence.
template <typename T>
BiGruResult bigru(Graph<T>& g, std::span<const Var> steps, std::span<const std::vector<T>> masks, Var init_forward,
                  Var init_backward, const BoundGru& forward, const BoundGru& backward, bool keep_outputs = true);

}  // namespace knreader::autodiff
