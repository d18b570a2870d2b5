#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "knreader/cbt_data.hpp"
#include "knreader/knowledge_store.hpp"

namespace knreader {

struct RetrievalWeights {
  int answer = 4;
  int question = 3;
  int document = 2;
};

struct RetrievalConfig {
  std::size_t total_facts = 50;  // P
  RetrievalWeights weights;

  // Throws ConfigError unless P is a positive multiple of the candidate count
  // and answer > question > document > 0.
  void validate(std::size_t num_candidates) const;
  std::size_t per_candidate_cap(std::size_t num_candidates) const { return total_facts / num_candidates; }
};

// Lemma sets of one instance, computed with the store's lemmatizer. The
// placeholder token is not part of the question set.
struct InstanceLemmas {
  std::vector<std::vector<std::string>> per_candidate;
  std::unordered_set<std::string> candidates;
  std::unordered_set<std::string> question;
  std::unordered_set<std::string> document;

  InstanceLemmas(const ClozeInstance& instance, const Lemmatizer& lemmatizer);
};

struct RetrievedFact {
  FactId fact_id = 0;
  int weight = 0;
  std::size_t candidate_index = 0;

  bool operator==(const RetrievedFact&) const = default;
};

struct RetrievedFacts {
  std::vector<RetrievedFact> facts;

  bool operator==(const RetrievedFacts&) const = default;
};

// Highest applicable tier: answer weight if any token lemma is a candidate
// lemma, else question weight, else document weight, else 0.
int node_weight(std::span<const std::string> phrase_tokens, const InstanceLemmas& lemmas, const Lemmatizer& lemmatizer,
                const RetrievalConfig& config);
int node_weight(std::span<const std::string> phrase_tokens, const ClozeInstance& instance,
                const Lemmatizer& lemmatizer, const RetrievalConfig& config);

// node_weight(subject) + node_weight(object).
int score_fact(const KnowledgeTriple& fact, const InstanceLemmas& lemmas, const Lemmatizer& lemmatizer,
               const RetrievalConfig& config);

// Per candidate in instance order: facts containing one of its lemmas, sorted by
// score descending with ties in store order, capped at P / #candidates, skipping
// facts already owned by an earlier candidate.
RetrievedFacts retrieve_facts(const ClozeInstance& instance, const FactStore& store, const RetrievalConfig& config);

// One JSON object per line: {"instance_id", "facts": [{candidate_index,
// candidate, fact_id, ordinal, subject, relation, object, source, weight}]}.
void write_retrieved(std::ostream& out, const ClozeInstance& instance, const FactStore& store,
                     const RetrievedFacts& retrieved);

struct RetrievedTriple {
  KnowledgeTriple triple;
  std::size_t candidate_index = 0;
  int weight = 0;
};

struct RetrievedRecord {
  std::string instance_id;
  std::vector<RetrievedTriple> facts;
};

// Reads write_retrieved output back, one record per line in file order.
std::vector<RetrievedRecord> read_retrieved(std::istream& in);

std::vector<RetrievedTriple> resolve(const RetrievedFacts& retrieved, const FactStore& store);

}  // namespace knreader
