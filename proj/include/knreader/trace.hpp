#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "knreader/cbt_data.hpp"
#include "knreader/model.hpp"
#include "knreader/retrieval.hpp"

namespace knreader::trace {

using Json = nlohmann::json;

// One self-contained record per instance:
//   instance_id, question, candidates, gold, predicted, facts (triple strings),
//   fact_attention: [{row, candidate_index?, position?, weights}] with the
//     question placeholder first, then every candidate occurrence,
//   interactions: {cc|ck|kc|kk: {enabled, weight, sums}}, ensemble_scores,
//   probabilities.
Json to_json(const model::AttentionTrace& trace, const ClozeInstance& instance,
             const std::vector<RetrievedTriple>& facts);

// Line-delimited records.
void write_records(std::ostream& out, const std::vector<Json>& records);
std::vector<Json> read_records(std::istream& in);

// Throws DomainError for an unknown id.
const Json& find_record(const std::vector<Json>& records, const std::string& instance_id);

struct Heatmap {
  std::vector<std::string> row_labels;     // "question", then "<candidate>@<position>"
  std::vector<std::string> column_labels;  // fact triple strings
  std::vector<std::vector<double>> cells;  // copied from the record, unchanged
};

// Rows: the question placeholder and the occurrences of the top_k candidates
// by probability (highest first). Columns: memory facts.
Heatmap heatmap(const Json& record, std::size_t top_k = 5);

// Tab-separated matrix with a header of fact strings; values use the shortest
// round-trip decimal form, so parsing them back yields the trace values.
std::string heatmap_tsv(const Heatmap& map);

// Heatmap panel plus per-candidate bars for each interaction's weighted score
// and the ensemble score, for the same top_k candidates.
std::string render_svg(const Json& record, std::size_t top_k = 5);

}  // namespace knreader::trace
