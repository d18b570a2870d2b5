#include "knreader/autodiff/gru.hpp"

#include <algorithm>

namespace knreader::autodiff {

template <typename T>
GruParams<T> add_gru_params(ParameterSet<T>& set, const std::string& prefix, std::size_t input_width,
                            std::size_t hidden_width, std::mt19937_64& rng) {
  const std::size_t h = hidden_width;
  // Each gate block is scaled by its own fan-in/fan-out.
  Tensor<T> wx(input_width, 3 * h);
  for (std::size_t gate = 0; gate < 3; ++gate) {
    Tensor<T> block = glorot_uniform<T>(input_width, h, rng);
    for (std::size_t r = 0; r < input_width; ++r) {
      for (std::size_t c = 0; c < h; ++c) wx(r, gate * h + c) = block(r, c);
    }
  }
  Tensor<T> uzr(h, 2 * h);
  for (std::size_t gate = 0; gate < 2; ++gate) {
    Tensor<T> block = glorot_uniform<T>(h, h, rng);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < h; ++c) uzr(r, gate * h + c) = block(r, c);
    }
  }
  set.add(prefix + ".input_weights", std::move(wx));
  set.add(prefix + ".hidden_gate_weights", std::move(uzr));
  set.add(prefix + ".hidden_candidate_weights", glorot_uniform<T>(h, h, rng));
  set.add(prefix + ".bias", Tensor<T>(1, 3 * h));
  return find_gru_params(set, prefix);
}

template <typename T>
GruParams<T> find_gru_params(ParameterSet<T>& set, const std::string& prefix) {
  GruParams<T> p;
  p.input_weights = &set.at(prefix + ".input_weights");
  p.hidden_gate_weights = &set.at(prefix + ".hidden_gate_weights");
  p.hidden_candidate_weights = &set.at(prefix + ".hidden_candidate_weights");
  p.bias = &set.at(prefix + ".bias");
  p.input_width = p.input_weights->value.rows();
  p.hidden_width = p.hidden_candidate_weights->value.rows();
  const std::size_t h = p.hidden_width;
  if (p.input_weights->value.cols() != 3 * h || p.hidden_gate_weights->value.rows() != h ||
      p.hidden_gate_weights->value.cols() != 2 * h || p.hidden_candidate_weights->value.cols() != h ||
      p.bias->value.rows() != 1 || p.bias->value.cols() != 3 * h) {
    throw ShapeError("GRU parameters '" + prefix + "' have inconsistent shapes");
  }
  return p;
}

template <typename T>
BoundGru bind(Graph<T>& g, const GruParams<T>& params) {
  BoundGru b;
  b.input_weights = g.parameter(*params.input_weights);
  b.hidden_gate_weights = g.parameter(*params.hidden_gate_weights);
  b.hidden_candidate_weights = g.parameter(*params.hidden_candidate_weights);
  b.bias = g.parameter(*params.bias);
  b.input_width = params.input_width;
  b.hidden_width = params.hidden_width;
  return b;
}

template <typename T>
Var gru_cell(Graph<T>& g, Var x, Var h_prev, const BoundGru& gru) {
  const std::size_t h = gru.hidden_width;
  const auto& xv = g.value(x);
  const auto& hv = g.value(h_prev);
  if (xv.cols() != gru.input_width || hv.cols() != h || xv.rows() != hv.rows()) {
    throw ShapeError("gru_cell: input " + std::to_string(xv.rows()) + "x" + std::to_string(xv.cols()) + ", state " +
                     std::to_string(hv.rows()) + "x" + std::to_string(hv.cols()) + " do not fit a " +
                     std::to_string(gru.input_width) + "->" + std::to_string(h) + " GRU");
  }
  Var projected = g.add_row(g.matmul(x, gru.input_weights), gru.bias);
  Var recurrent = g.matmul(h_prev, gru.hidden_gate_weights);
  Var update = g.sigmoid(g.add(g.slice_cols(projected, 0, h), g.slice_cols(recurrent, 0, h)));
  Var reset = g.sigmoid(g.add(g.slice_cols(projected, h, h), g.slice_cols(recurrent, h, h)));
  Var candidate =
      g.tanh(g.add(g.slice_cols(projected, 2 * h, h), g.matmul(g.mul(reset, h_prev), gru.hidden_candidate_weights)));
  // (1 - z) * h + z * h~  ==  h + z * (h~ - h)
  return g.add(h_prev, g.mul(update, g.sub(candidate, h_prev)));
}

template <typename T>
BiGruResult bigru(Graph<T>& g, std::span<const Var> steps, std::span<const std::vector<T>> masks, Var init_forward,
                  Var init_backward, const BoundGru& forward, const BoundGru& backward, bool keep_outputs) {
  if (steps.empty()) throw DomainError("bigru: empty sequence");
  if (!masks.empty() && masks.size() != steps.size()) throw ShapeError("bigru: one mask per step required");
  auto step_state = [&](std::size_t t, Var x, Var prev, const BoundGru& cell) {
    Var next = gru_cell(g, x, prev, cell);
    if (masks.empty() || masks[t].empty()) return next;
    const auto& m = masks[t];
    if (std::all_of(m.begin(), m.end(), [](T v) { return v == T(1); })) return next;
    return g.blend_rows(next, prev, m);
  };

  const std::size_t n = steps.size();
  std::vector<Var> fwd(n), bwd(n);
  Var state = init_forward;
  for (std::size_t t = 0; t < n; ++t) fwd[t] = state = step_state(t, steps[t], state, forward);
  BiGruResult result;
  result.final_forward = state;
  state = init_backward;
  for (std::size_t t = n; t-- > 0;) bwd[t] = state = step_state(t, steps[t], state, backward);
  result.final_backward = state;
  if (keep_outputs) {
    result.outputs.reserve(n);
    for (std::size_t t = 0; t < n; ++t) result.outputs.push_back(g.concat_cols(fwd[t], bwd[t]));
  }
  return result;
}

template GruParams<float> add_gru_params<float>(ParameterSet<float>&, const std::string&, std::size_t, std::size_t,
                                                std::mt19937_64&);
template GruParams<double> add_gru_params<double>(ParameterSet<double>&, const std::string&, std::size_t, std::size_t,
                                                  std::mt19937_64&);
template GruParams<float> find_gru_params<float>(ParameterSet<float>&, const std::string&);
template GruParams<double> find_gru_params<double>(ParameterSet<double>&, const std::string&);
template BoundGru bind<float>(Graph<float>&, const GruParams<float>&);
template BoundGru bind<double>(Graph<double>&, const GruParams<double>&);
template Var gru_cell<float>(Graph<float>&, Var, Var, const BoundGru&);
template Var gru_cell<double>(Graph<double>&, Var, Var, const BoundGru&);
template BiGruResult bigru<float>(Graph<float>&, std::span<const Var>, std::span<const std::vector<float>>, Var, Var,
                                  const BoundGru&, const BoundGru&, bool);
template BiGruResult bigru<double>(Graph<double>&, std::span<const Var>, std::span<const std::vector<double>>, Var, Var,
                                   const BoundGru&, const BoundGru&, bool);

}  // namespace knreader::autodiff
