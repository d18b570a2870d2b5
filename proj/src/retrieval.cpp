#include "knreader/retrieval.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "knreader/error.hpp"
#include "knreader/text.hpp"

namespace knreader {

void RetrievalConfig::validate(std::size_t num_candidates) const {
  if (num_candidates == 0) throw ConfigError("retrieval needs at least one candidate");
  if (total_facts == 0 || total_facts % num_candidates != 0) {
    throw ConfigError("fact budget " + std::to_string(total_facts) + " is not a positive multiple of " +
                      std::to_string(num_candidates) + " candidates");
  }
  if (!(weights.answer > weights.question && weights.question > weights.document && weights.document > 0)) {
    throw ConfigError("retrieval weights must satisfy answer > question > document > 0");
  }
}

InstanceLemmas::InstanceLemmas(const ClozeInstance& instance, const Lemmatizer& lemmatizer) {
  for (const auto& candidate : instance.candidates) {
    std::vector<std::string> lemmas;
    for (const auto& token : text::split_whitespace(candidate)) {
      lemmas.push_back(lemmatizer(token));
      candidates.insert(lemmas.back());
    }
    per_candidate.push_back(std::move(lemmas));
  }
  for (std::size_t i = 0; i < instance.question_tokens.size(); ++i) {
    if (i == instance.placeholder_index) continue;
    question.insert(lemmatizer(instance.question_tokens[i]));
  }
  for (const auto& token : instance.document_tokens) document.insert(lemmatizer(token));
}

int node_weight(std::span<const std::string> phrase_tokens, const InstanceLemmas& lemmas, const Lemmatizer& lemmatizer,
                const RetrievalConfig& config) {
  int best = 0;
  for (const auto& token : phrase_tokens) {
    const std::string lemma = lemmatizer(token);
    if (lemmas.candidates.count(lemma)) return config.weights.answer;
    if (lemmas.question.count(lemma)) {
      best = std::max(best, config.weights.question);
    } else if (lemmas.document.count(lemma)) {
      best = std::max(best, config.weights.document);
    }
  }
  return best;
}

int node_weight(std::span<const std::string> phrase_tokens, const ClozeInstance& instance,
                const Lemmatizer& lemmatizer, const RetrievalConfig& config) {
  return node_weight(phrase_tokens, InstanceLemmas(instance, lemmatizer), lemmatizer, config);
}

int score_fact(const KnowledgeTriple& fact, const InstanceLemmas& lemmas, const Lemmatizer& lemmatizer,
               const RetrievalConfig& config) {
  return node_weight(fact.subject_tokens, lemmas, lemmatizer, config) +
         node_weight(fact.object_tokens, lemmas, lemmatizer, config);
}

RetrievedFacts retrieve_facts(const ClozeInstance& instance, const FactStore& store, const RetrievalConfig& config) {
  config.validate(instance.candidates.size());
  const std::size_t cap = config.per_candidate_cap(instance.candidates.size());
  const InstanceLemmas lemmas(instance, store.lemmatizer());

  RetrievedFacts result;
  std::unordered_set<FactId> claimed;
  std::vector<FactId> pool;
  std::vector<std::pair<int, FactId>> scored;
  for (std::size_t c = 0; c < lemmas.per_candidate.size(); ++c) {
    pool.clear();
    for (const auto& lemma : lemmas.per_candidate[c]) {
      const auto& ids = store.facts_containing(lemma);
      pool.insert(pool.end(), ids.begin(), ids.end());
    }
    // Multi-token candidates can contribute overlapping posting lists.
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

    scored.clear();
    for (FactId id : pool) scored.emplace_back(score_fact(store.fact(id), lemmas, store.lemmatizer(), config), id);
    // Fact ids follow store ordinals, so a stable sort on score keeps retrieval order for ties.
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    std::size_t taken = 0;
    for (const auto& [score, id] : scored) {
      if (taken == cap) break;
      if (!claimed.insert(id).second) continue;
      result.facts.push_back({id, score, c});
      ++taken;
    }
  }
  return result;
}

void write_retrieved(std::ostream& out, const ClozeInstance& instance, const FactStore& store,
                     const RetrievedFacts& retrieved) {
  nlohmann::json record;
  record["instance_id"] = instance.instance_id;
  nlohmann::json facts = nlohmann::json::array();
  for (const auto& r : retrieved.facts) {
    const KnowledgeTriple& t = store.fact(r.fact_id);
    facts.push_back({{"candidate_index", r.candidate_index},
                     {"candidate", instance.candidates.at(r.candidate_index)},
                     {"fact_id", r.fact_id},
                     {"ordinal", t.store_ordinal},
                     {"subject", t.subject_tokens},
                     {"relation", t.relation},
                     {"object", t.object_tokens},
                     {"source", t.source_tag},
                     {"text", t.to_string()},
                     {"weight", r.weight}});
  }
  record["facts"] = std::move(facts);
  out << record.dump() << '\n';
}

std::vector<RetrievedRecord> read_retrieved(std::istream& in) {
  std::vector<RetrievedRecord> all;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (text::trim(line).empty()) continue;
    try {
      const auto record = nlohmann::json::parse(line);
      std::vector<RetrievedTriple> facts;
      for (const auto& f : record.at("facts")) {
        RetrievedTriple r;
        r.triple.subject_tokens = f.at("subject").get<std::vector<std::string>>();
        r.triple.relation = f.at("relation").get<std::string>();
        r.triple.object_tokens = f.at("object").get<std::vector<std::string>>();
        r.triple.source_tag = f.value("source", "");
        r.triple.store_ordinal = f.value("ordinal", std::size_t{0});
        r.candidate_index = f.at("candidate_index").get<std::size_t>();
        r.weight = f.at("weight").get<int>();
        facts.push_back(std::move(r));
      }
      all.push_back({record.at("instance_id").get<std::string>(), std::move(facts)});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("retrieved-facts line " + std::to_string(line_number) + ": " + e.what());
    }
  }
  return all;
}

std::vector<RetrievedTriple> resolve(const RetrievedFacts& retrieved, const FactStore& store) {
  std::vector<RetrievedTriple> out;
  out.reserve(retrieved.facts.size());
  for (const auto& r : retrieved.facts) out.push_back({store.fact(r.fact_id), r.candidate_index, r.weight});
  return out;
}

}  // namespace knreader
