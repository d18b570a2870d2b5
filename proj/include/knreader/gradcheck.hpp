#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "knreader/model.hpp"

namespace knreader::gradcheck {

struct GroupResult {
  std::string group;  // "embeddings", "context encoder", "fact encoder", "ensemble weights"
  std::size_t checked = 0;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
};

struct Report {
  std::vector<GroupResult> groups;
  double max_relative_error() const;
  bool passed(double tolerance) const { return max_relative_error() < tolerance; }
};

// Parameter group of a model parameter name.
std::string group_of(const std::string& parameter_name);

// h=4, E=8, dropout off.
model::ModelConfig toy_config();
inline constexpr std::size_t kToyVocabulary = 30;

// Two instances of different lengths with ids below kToyVocabulary; the first
// has two facts, the second one.
std::vector<model::PreparedInstance> toy_batch();

// Central differences on every parameter entry of the batch loss (evaluation
// mode). Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
Report check(model::KnReader<double>& model, std::span<const model::PreparedInstance> batch, double epsilon = 1e-5,
             double floor = 1e-5);

}  // namespace knreader::gradcheck
