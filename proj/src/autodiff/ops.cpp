#include "knreader/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace knreader::autodiff {

template <typename T>
std::vector<T> softmax(std::span<const T> x, std::span<const std::uint8_t> mask) {
  if (!mask.empty() && mask.size() != x.size()) throw ShapeError("softmax: mask length differs from input");
  auto kept = [&](std::size_t i) { return mask.empty() || mask[i] != 0; };
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (kept(i)) mx = std::max(mx, x[i]);
  }
  if (mx == -std::numeric_limits<T>::infinity()) throw DomainError("softmax: every entry is masked");
  std::vector<T> out(x.size(), T(0));
  T total = T(0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (kept(i)) {
      out[i] = std::exp(x[i] - mx);
      total += out[i];
    }
  }
  for (auto& v : out) v /= total;
  return out;
}

template <typename T>
T cross_entropy(std::span<const T> probs, std::size_t gold) {
  if (gold >= probs.size()) throw DomainError("cross_entropy: gold index out of range");
  return -std::log(std::max(probs[gold], static_cast<T>(1e-12)));
}

template <typename T>
Var cross_entropy_from_scores(Graph<T>& g, Var scores, std::size_t gold) {
  if (gold >= g.value(scores).cols()) throw DomainError("cross_entropy: gold index out of range");
  return g.scale(g.pick(g.log_softmax_rows(scores), 0, gold), T(-1));
}

template std::vector<float> softmax<float>(std::span<const float>, std::span<const std::uint8_t>);
template std::vector<double> softmax<double>(std::span<const double>, std::span<const std::uint8_t>);
template float cross_entropy<float>(std::span<const float>, std::size_t);
template double cross_entropy<double>(std::span<const double>, std::size_t);
template Var cross_entropy_from_scores<float>(Graph<float>&, Var, std::size_t);
template Var cross_entropy_from_scores<double>(Graph<double>&, Var, std::size_t);

}  // namespace knreader::autodiff
