#include "knreader/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace knreader::gradcheck {

using model::EncodedFact;
using model::PreparedInstance;

double Report::max_relative_error() const {
  double m = 0.0;
  for (const auto& g : groups) m = std::max(m, g.max_relative_error);
  return m;
}

std::string group_of(const std::string& name) {
  if (name.starts_with("embedding")) return "embeddings";
  if (name.starts_with("context.")) return "context encoder";
  if (name.starts_with("facts.")) return "fact encoder";
  if (name.starts_with("ensemble.")) return "ensemble weights";
  return name;
}

model::ModelConfig toy_config() {
  model::ModelConfig c;
  c.hidden = 4;
  c.embed_dim = 8;
  c.keep_prob = 1.0;
  return c;
}

std::vector<PreparedInstance> toy_batch() {
  std::vector<PreparedInstance> batch(2);
  {
    auto& e = batch[0].encoded;
    e.instance_id = "toy-0";
    e.document_ids = {11, 12, 3, 13, 4, 14, 5, 3, 15};
    e.question_ids = {16, 17, 2, 18};
    e.placeholder_index = 2;
    e.candidate_ids = {3, 4, 5};
    e.candidate_occurrences = {{2, 7}, {4}, {6}};
    e.gold_index = 1;
    batch[0].facts = {EncodedFact{{17}, 20, {4}, 1}, EncodedFact{{21, 22}, 23, {3, 24}, 0}};
  }
  {
    auto& e = batch[1].encoded;
    e.instance_id = "toy-1";
    e.document_ids = {25, 6, 26, 7, 8};
    e.question_ids = {2, 27, 28};
    e.placeholder_index = 0;
    e.candidate_ids = {6, 7, 8};
    e.candidate_occurrences = {{1}, {3}, {4}};
    e.gold_index = 2;
    batch[1].facts = {EncodedFact{{8}, 29, {27}, 2}};
  }
  return batch;
}

namespace {

double batch_loss(model::KnReader<double>& m, std::span<const PreparedInstance* const> batch) {
  autodiff::Graph<double> g(false);
  return g.value(m.forward(g, batch, {}).loss)[0];
}

}  // namespace

Report check(model::KnReader<double>& m, std::span<const PreparedInstance> instances, double epsilon, double floor) {
  std::vector<const PreparedInstance*> batch;
  for (const auto& p : instances) batch.push_back(&p);
  auto& params = m.params();
  params.zero_grad();
  {
    autodiff::Graph<double> g;
    g.backward(m.forward(g, batch, {}).loss);
  }

  std::map<std::string, GroupResult> groups;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& result = groups[group_of(p.name)];
    result.group = group_of(p.name);
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double saved = p.value[k];
      p.value[k] = saved + epsilon;
      const double plus = batch_loss(m, batch);
      p.value[k] = saved - epsilon;
      const double minus = batch_loss(m, batch);
      p.value[k] = saved;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double analytic = p.trainable ? p.grad[k] : 0.0;
      const double abs_err = std::abs(analytic - numeric);
      const double rel = abs_err / std::max({std::abs(analytic), std::abs(numeric), floor});
      result.max_absolute_error = std::max(result.max_absolute_error, abs_err);
      result.max_relative_error = std::max(result.max_relative_error, rel);
      ++result.checked;
    }
  }
  Report report;
  for (const char* name : {"embeddings", "context encoder", "fact encoder", "ensemble weights"}) {
    if (groups.count(name)) report.groups.push_back(groups[name]);
  }
  return report;
}

}  // namespace knreader::gradcheck
