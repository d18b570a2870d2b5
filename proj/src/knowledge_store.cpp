#include "knreader/knowledge_store.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "knreader/error.hpp"
#include "knreader/text.hpp"

namespace knreader {

std::string KnowledgeTriple::to_string() const {
  return text::join(subject_tokens, " ") + " | " + relation + " | " + text::join(object_tokens, " ");
}

SourceVariant parse_source_variant(std::string_view name) {
  const std::string lower = text::to_lower(name);
  if (lower == "cn5all") return SourceVariant::CN5All;
  if (lower == "cn5wn3") return SourceVariant::CN5WN3;
  if (lower == "cn5sel") return SourceVariant::CN5Sel;
  throw ConfigError("unknown knowledge variant '" + std::string(name) + "' (expected cn5all, cn5wn3, cn5sel)");
}

std::string_view to_string(SourceVariant variant) {
  switch (variant) {
    case SourceVariant::CN5All: return "cn5all";
    case SourceVariant::CN5WN3: return "cn5wn3";
    case SourceVariant::CN5Sel: return "cn5sel";
  }
  return "cn5all";
}

bool is_wordnet_sourced(const KnowledgeTriple& triple) {
  return text::to_lower(triple.source_tag).find("wordnet") != std::string::npos;
}

bool is_excluded_relation(std::string_view relation) {
  static const std::array<std::string_view, 5> excluded = {"relatedto", "isa", "synonym", "similarto",
                                                           "hascontext"};
  std::size_t slash = relation.find_last_of('/');
  std::string name = text::to_lower(slash == std::string_view::npos ? relation : relation.substr(slash + 1));
  return std::find(excluded.begin(), excluded.end(), name) != excluded.end();
}

FactStore::FactStore(Lemmatizer lemmatizer) : lemmatizer_(std::move(lemmatizer)) {}

FactId FactStore::add(KnowledgeTriple triple) {
  triple.store_ordinal = next_ordinal_;
  return append(std::move(triple));
}

FactId FactStore::append(KnowledgeTriple triple) {
  if (triple.subject_tokens.empty() || triple.object_tokens.empty() || triple.relation.empty()) {
    throw FormatError("knowledge triple needs a subject, a relation and an object");
  }
  if (!triples_.empty() && triple.store_ordinal <= triples_.back().store_ordinal) {
    throw FormatError("knowledge triple ordinals must be strictly increasing");
  }
  const FactId id = triples_.size();
  next_ordinal_ = triple.store_ordinal + 1;
  auto index_tokens = [&](const std::vector<std::string>& tokens) {
    for (const auto& token : tokens) {
      auto& postings = index_[lemmatizer_(token)];
      if (postings.empty() || postings.back() != id) postings.push_back(id);
    }
  };
  index_tokens(triple.subject_tokens);
  index_tokens(triple.object_tokens);
  triples_.push_back(std::move(triple));
  return id;
}

const std::vector<FactId>& FactStore::facts_containing(std::string_view lemma) const {
  static const std::vector<FactId> none;
  auto it = index_.find(std::string(lemma));
  return it == index_.end() ? none : it->second;
}

FactStore FactStore::filtered(const SourcePredicate& keep) const {
  FactStore view(lemmatizer_);
  for (const auto& triple : triples_) {
    if (keep(triple)) view.append(triple);
  }
  return view;
}

namespace {

std::vector<std::string> lowered_tokens(std::string_view phrase) {
  std::vector<std::string> tokens = text::split_whitespace(phrase);
  for (auto& t : tokens) t = text::to_lower(t);
  return tokens;
}

std::vector<std::string> json_phrase(const nlohmann::json& value) {
  std::vector<std::string> tokens;
  if (value.is_string()) return lowered_tokens(value.get<std::string>());
  if (value.is_array()) {
    for (const auto& item : value) {
      for (auto& t : lowered_tokens(item.get<std::string>())) tokens.push_back(std::move(t));
    }
  }
  return tokens;
}

KnowledgeTriple parse_record(std::string_view line, std::size_t line_number) {
  auto fail = [&](const std::string& why) {
    return FormatError("triple record at line " + std::to_string(line_number) + ": " + why);
  };
  KnowledgeTriple triple;
  if (line.front() == '{') {
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw fail(std::string("invalid JSON: ") + e.what());
    }
    if (record.contains("subject")) triple.subject_tokens = json_phrase(record["subject"]);
    if (record.contains("object")) triple.object_tokens = json_phrase(record["object"]);
    if (record.contains("relation") && record["relation"].is_string()) {
      triple.relation = std::string(text::trim(record["relation"].get<std::string>()));
    }
    if (record.contains("source") && record["source"].is_string()) triple.source_tag = record["source"];
  } else {
    std::vector<std::string> fields = text::split(line, '\t');
    if (fields.size() < 3) throw fail("expected tab-separated subject, relation, object[, source]");
    triple.subject_tokens = lowered_tokens(fields[0]);
    triple.relation = std::string(text::trim(fields[1]));
    triple.object_tokens = lowered_tokens(fields[2]);
    if (fields.size() > 3) triple.source_tag = std::string(text::trim(fields[3]));
  }
  if (triple.subject_tokens.empty()) throw fail("missing subject");
  if (triple.relation.empty()) throw fail("missing relation");
  if (triple.object_tokens.empty()) throw fail("missing object");
  return triple;
}

}  // namespace

FactStore ingest_triples(std::istream& in, Lemmatizer lemmatizer) {
  FactStore store(std::move(lemmatizer));
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view view = text::trim(line);
    if (view.empty() || view.front() == '#') continue;
    store.add(parse_record(line, line_number));
  }
  return store;
}

FactStore load_triples(const std::string& path, Lemmatizer lemmatizer) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open triple file '" + path + "'");
  return ingest_triples(in, std::move(lemmatizer));
}

void write_triples(const FactStore& store, std::ostream& out) {
  for (const auto& t : store.facts()) {
    out << text::join(t.subject_tokens, " ") << '\t' << t.relation << '\t' << text::join(t.object_tokens, " ")
        << '\t' << t.source_tag << '\n';
  }
}

FactStore select_source(const FactStore& store, SourceVariant variant, const SourcePredicate& wordnet_predicate) {
  switch (variant) {
    case SourceVariant::CN5All:
      return store.filtered([](const KnowledgeTriple&) { return true; });
    case SourceVariant::CN5WN3:
      return store.filtered(wordnet_predicate);
    case SourceVariant::CN5Sel:
      return store.filtered([](const KnowledgeTriple& t) { return !is_excluded_relation(t.relation); });
  }
  return store.filtered([](const KnowledgeTriple&) { return true; });
}

}  // namespace knreader
