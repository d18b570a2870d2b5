#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "knreader/autodiff/graph.hpp"

namespace knreader::autodiff {

// Softmax over the unmasked entries (mask value 1 = keep); masked entries are
// exactly 0. Throws DomainError when everything is masked.
template <typename T>
std::vector<T> softmax(std::span<const T> x, std::span<const std::uint8_t> mask = {});

// -log(max(probs[gold], 1e-12)). Throws DomainError for gold out of range.
template <typename T>
T cross_entropy(std::span<const T> probs, std::size_t gold);

// Fused log-softmax negative log-likelihood of `gold` for a 1 x C row of scores.
template <typename T>
Var cross_entropy_from_scores(Graph<T>& g, Var scores, std::size_t gold);

}  // namespace knreader::autodiff
