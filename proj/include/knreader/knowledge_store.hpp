#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "knreader/lemmatizer.hpp"

namespace knreader {

// One (subject, relation, object) commonsense assertion.
struct KnowledgeTriple {
  std::vector<std::string> subject_tokens;
  std::string relation;  // atomic relation type, e.g. "/r/IsUsedFor"
  std::vector<std::string> object_tokens;
  std::string source_tag;
  std::size_t store_ordinal = 0;

  // "subject | relation | object" rendering used in traces and retrieval output.
  std::string to_string() const;
};

using FactId = std::size_t;

enum class SourceVariant { CN5All, CN5WN3, CN5Sel };

SourceVariant parse_source_variant(std::string_view name);
std::string_view to_string(SourceVariant variant);

using SourcePredicate = std::function<bool(const KnowledgeTriple&)>;

// True when the source tag mentions WordNet (case-insensitive).
bool is_wordnet_sourced(const KnowledgeTriple& triple);

// Relations dropped by the CN5Sel view; matched on the last path component,
// case-insensitively ("/r/IsA" and "IsA" both match).
bool is_excluded_relation(std::string_view relation);

// Write-once triple list with an inverted lemma -> fact index over subject and
// object tokens. Fact ids are positions in this store; ordinals are carried over
// from the ingestion sequence so filtered views keep the original ordering.
class FactStore {
 public:
  explicit FactStore(Lemmatizer lemmatizer = default_lemmatize);

  // Appends with the next ingestion ordinal.
  FactId add(KnowledgeTriple triple);

  std::size_t size() const { return triples_.size(); }
  bool empty() const { return triples_.empty(); }
  const KnowledgeTriple& fact(FactId id) const { return triples_.at(id); }
  const std::vector<KnowledgeTriple>& facts() const { return triples_; }

  // Ids in store_ordinal order; empty for unknown lemmas.
  const std::vector<FactId>& facts_containing(std::string_view lemma) const;

  const Lemmatizer& lemmatizer() const { return lemmatizer_; }
  std::string lemma(std::string_view token) const { return lemmatizer_(token); }

  FactStore filtered(const SourcePredicate& keep) const;

 private:
  FactId append(KnowledgeTriple triple);

  Lemmatizer lemmatizer_;
  std::vector<KnowledgeTriple> triples_;
  std::unordered_map<std::string, std::vector<FactId>> index_;
  std::size_t next_ordinal_ = 0;
};

// Reads the tab-separated triple format (subject, relation, object, source) or
// the line-delimited JSON variant {subject, relation, object, source}. Blank
// lines and lines starting with '#' are skipped. Tokens are lowercased.
FactStore ingest_triples(std::istream& in, Lemmatizer lemmatizer = default_lemmatize);
FactStore load_triples(const std::string& path, Lemmatizer lemmatizer = default_lemmatize);

// Writes the tab-separated format; ingest_triples(write_triples(s)) reproduces s.
void write_triples(const FactStore& store, std::ostream& out);

FactStore select_source(const FactStore& store, SourceVariant variant,
                        const SourcePredicate& wordnet_predicate = is_wordnet_sourced);

}  // namespace knreader
