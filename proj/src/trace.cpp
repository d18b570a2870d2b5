#include "knreader/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "knreader/error.hpp"
#include "knreader/text.hpp"

namespace knreader::trace {
namespace {

std::string number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string fixed(double v, int digits) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << v;
  return out.str();
}

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string escape_tsv(std::string s) {
  std::replace(s.begin(), s.end(), '\t', ' ');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

// Candidate indices by probability, highest first; ties by index.
std::vector<std::size_t> ranked_candidates(const Json& record, std::size_t top_k) {
  const auto probs = record.at("probabilities").get<std::vector<double>>();
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  if (order.size() > top_k) order.resize(top_k);
  return order;
}

}  // namespace

Json to_json(const model::AttentionTrace& t, const ClozeInstance& instance, const std::vector<RetrievedTriple>& facts) {
  if (t.instance_id != instance.instance_id) {
    throw DomainError("trace for " + t.instance_id + " paired with instance " + instance.instance_id);
  }
  Json j;
  j["instance_id"] = t.instance_id;
  j["question"] = text::join(instance.question_tokens, " ");
  j["candidates"] = instance.candidates;
  j["gold"] = instance.candidates.at(t.gold_index);
  j["gold_index"] = t.gold_index;
  j["predicted"] = instance.candidates.at(t.predicted_index);
  j["predicted_index"] = t.predicted_index;
  Json fact_strings = Json::array();
  for (std::size_t i = 0; i < t.fact_count && i < facts.size(); ++i) fact_strings.push_back(facts[i].triple.to_string());
  j["facts"] = fact_strings;

  Json rows = Json::array();
  if (!t.question_fact_attention.empty()) {
    rows.push_back({{"row", "question"}, {"weights", t.question_fact_attention}});
    for (const auto& occ : t.candidate_fact_attention) {
      rows.push_back({{"row", instance.candidates.at(occ.candidate_index)},
                      {"candidate_index", occ.candidate_index},
                      {"position", occ.position},
                      {"weights", occ.weights}});
    }
  }
  j["fact_attention"] = rows;

  Json interactions = Json::object();
  for (auto i : model::kInteractions) {
    const auto k = static_cast<std::size_t>(i);
    interactions[std::string(model::short_name(i))] = {{"label", model::interaction_label(i)},
                                                       {"enabled", t.enabled.enabled(i)},
                                                       {"weight", t.interaction_weights[k]},
                                                       {"sums", t.interaction_sums[k]}};
  }
  j["interactions"] = interactions;
  j["ensemble_scores"] = t.ensemble_scores;
  j["probabilities"] = t.probabilities;
  return j;
}

void write_records(std::ostream& out, const std::vector<Json>& records) {
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw IoError("failed writing trace records");
}

std::vector<Json> read_records(std::istream& in) {
  std::vector<Json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      throw FormatError("trace record at line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

const Json& find_record(const std::vector<Json>& records, const std::string& instance_id) {
  for (const auto& r : records) {
    if (r.value("instance_id", std::string()) == instance_id) return r;
  }
  throw DomainError("no trace for instance '" + instance_id + "'");
}

Heatmap heatmap(const Json& record, std::size_t top_k) {
  Heatmap map;
  map.column_labels = record.at("facts").get<std::vector<std::string>>();
  const auto& rows = record.at("fact_attention");
  if (rows.empty()) return map;
  const auto ranked = ranked_candidates(record, top_k);
  auto add_row = [&](const Json& row, std::string label) {
    auto weights = row.at("weights").get<std::vector<double>>();
    if (weights.size() != map.column_labels.size()) {
      throw FormatError("trace " + record.value("instance_id", std::string()) + ": attention row width " +
                        std::to_string(weights.size()) + " differs from " +
                        std::to_string(map.column_labels.size()) + " facts");
    }
    map.row_labels.push_back(std::move(label));
    map.cells.push_back(std::move(weights));
  };
  add_row(rows.at(0), "question");
  for (std::size_t c : ranked) {
    for (const auto& row : rows) {
      if (row.contains("candidate_index") && row.at("candidate_index").get<std::size_t>() == c) {
        add_row(row, row.at("row").get<std::string>() + "@" + std::to_string(row.at("position").get<std::size_t>()));
      }
    }
  }
  return map;
}

std::string heatmap_tsv(const Heatmap& map) {
  std::ostringstream out;
  out << "row";
  for (const auto& c : map.column_labels) out << '\t' << escape_tsv(c);
  out << '\n';
  for (std::size_t r = 0; r < map.cells.size(); ++r) {
    out << escape_tsv(map.row_labels[r]);
    for (double v : map.cells[r]) out << '\t' << number(v);
    out << '\n';
  }
  return out.str();
}

std::string render_svg(const Json& record, std::size_t top_k) {
  const Heatmap map = heatmap(record, top_k);
  const auto ranked = ranked_candidates(record, top_k);
  const auto candidates = record.at("candidates").get<std::vector<std::string>>();
  const auto ensemble = record.at("ensemble_scores").get<std::vector<double>>();

  constexpr int cell = 22, label_w = 140, margin = 10, header_h = 160, bar_h = 14;
  const int cols = static_cast<int>(map.column_labels.size());
  const int rows = static_cast<int>(map.cells.size());
  const int heat_w = label_w + std::max(cols, 1) * cell;
  const int heat_h = header_h + rows * cell;

  // Bar panel: one group per ranked candidate, one bar per interaction plus the ensemble.
  struct Bar {
    std::string name;
    double value;
  };
  std::vector<std::vector<Bar>> groups;
  double max_abs = 0.0;
  for (std::size_t c : ranked) {
    std::vector<Bar> g;
    for (auto i : model::kInteractions) {
      const auto& it = record.at("interactions").at(std::string(model::short_name(i)));
      const auto sums = it.at("sums").get<std::vector<double>>();
      if (sums.empty()) continue;
      g.push_back({std::string(model::short_name(i)), it.at("weight").get<double>() * sums.at(c)});
    }
    g.push_back({"ensemble", ensemble.at(c)});
    for (const auto& b : g) max_abs = std::max(max_abs, std::abs(b.value));
    groups.push_back(std::move(g));
  }
  const int bars_top = heat_h + 2 * margin;
  int bars_h = 0;
  for (const auto& g : groups) bars_h += static_cast<int>(g.size()) * bar_h + 24;
  const int bar_span = 200;
  const int width = std::max(heat_w, label_w + 2 * bar_span + 80) + 2 * margin;
  const int height = bars_top + bars_h + 2 * margin;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"monospace\" font-size=\"10\">\n";
  svg << "<text x=\"" << margin << "\" y=\"14\" font-size=\"12\">" << escape_xml(record.value("instance_id", ""))
      << ": " << escape_xml(record.value("question", "")) << "</text>\n";
  svg << "<text x=\"" << margin << "\" y=\"28\">gold " << escape_xml(record.value("gold", "")) << ", predicted "
      << escape_xml(record.value("predicted", "")) << "</text>\n";

  for (int c = 0; c < cols; ++c) {
    const int x = margin + label_w + c * cell + cell / 2;
    svg << "<text transform=\"translate(" << x << "," << header_h - 4 << ") rotate(-60)\">"
        << escape_xml(map.column_labels[static_cast<std::size_t>(c)]) << "</text>\n";
  }
  for (int r = 0; r < rows; ++r) {
    const int y = header_h + r * cell;
    svg << "<text x=\"" << margin << "\" y=\"" << y + cell * 2 / 3 << "\">"
        << escape_xml(map.row_labels[static_cast<std::size_t>(r)]) << "</text>\n";
    for (int c = 0; c < cols; ++c) {
      const double v = map.cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(v, 0.0, 1.0))));
      svg << "<rect x=\"" << margin + label_w + c * cell << "\" y=\"" << y << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << "," << shade << ",255)\" stroke=\"#ccc\">"
          << "<title>" << number(v) << "</title></rect>\n";
    }
  }

  const int zero_x = margin + label_w + bar_span;
  int y = bars_top;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    svg << "<text x=\"" << margin << "\" y=\"" << y + 10 << "\">" << escape_xml(candidates.at(ranked[g])) << "</text>\n";
    y += 14;
    for (const auto& b : groups[g]) {
      const double len = max_abs > 0.0 ? b.value / max_abs * bar_span : 0.0;
      const int x = len >= 0 ? zero_x : zero_x + static_cast<int>(std::lround(len));
      svg << "<text x=\"" << margin + 20 << "\" y=\"" << y + bar_h - 4 << "\">" << b.name << "</text>\n";
      svg << "<rect x=\"" << x << "\" y=\"" << y + 1 << "\" width=\"" << std::lround(std::abs(len))
          << "\" height=\"" << bar_h - 2 << "\" fill=\"" << (b.name == "ensemble" ? "#d62728" : "#1f77b4")
          << "\"/>\n";
      svg << "<text x=\"" << zero_x + bar_span + 8 << "\" y=\"" << y + bar_h - 4 << "\">" << fixed(b.value, 4)
          << "</text>\n";
      y += bar_h;
    }
    y += 10;
  }
  svg << "<line x1=\"" << zero_x << "\" y1=\"" << bars_top << "\" x2=\"" << zero_x << "\" y2=\"" << y
      << "\" stroke=\"#000\"/>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace knreader::trace
