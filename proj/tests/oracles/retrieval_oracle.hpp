#pragma once

// Brute-force retrieval reference: scans every fact of the store, scores it,
// sorts by (score desc, ordinal asc), then walks candidates in order applying
// the per-candidate cap and skipping facts a previous candidate already took.
// Shares nothing with the indexed implementation except the data types.

#include <algorithm>
#include <string>
#include <vector>

#include "knreader/knowledge_store.hpp"
#include "knreader/retrieval.hpp"
#include "knreader/text.hpp"

namespace oracle {

inline bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

struct Lemmas {
  std::vector<std::vector<std::string>> per_candidate;
  std::vector<std::string> candidates, question, document;
};

inline Lemmas lemmas_of(const knreader::ClozeInstance& inst, const knreader::Lemmatizer& lem) {
  Lemmas l;
  for (const auto& c : inst.candidates) {
    std::vector<std::string> mine;
    for (const auto& tok : knreader::text::split_whitespace(c)) {
      mine.push_back(lem(tok));
      l.candidates.push_back(lem(tok));
    }
    l.per_candidate.push_back(mine);
  }
  for (std::size_t i = 0; i < inst.question_tokens.size(); ++i) {
    if (i != inst.placeholder_index) l.question.push_back(lem(inst.question_tokens[i]));
  }
  for (const auto& t : inst.document_tokens) l.document.push_back(lem(t));
  return l;
}

inline int node_weight(const std::vector<std::string>& phrase, const Lemmas& l, const knreader::Lemmatizer& lem,
                       const knreader::RetrievalConfig& cfg) {
  bool a = false, q = false, d = false;
  for (const auto& tok : phrase) {
    const std::string x = lem(tok);
    a = a || contains(l.candidates, x);
    q = q || contains(l.question, x);
    d = d || contains(l.document, x);
  }
  if (a) return cfg.weights.answer;
  if (q) return cfg.weights.question;
  if (d) return cfg.weights.document;
  return 0;
}

inline knreader::RetrievedFacts retrieve(const knreader::ClozeInstance& inst, const knreader::FactStore& store,
                                         const knreader::RetrievalConfig& cfg) {
  const auto& lem = store.lemmatizer();
  const Lemmas l = lemmas_of(inst, lem);
  const std::size_t cap = cfg.total_facts / inst.candidates.size();

  struct Scored {
    int score;
    std::size_t ordinal;
    knreader::FactId id;
  };
  std::vector<knreader::FactId> taken;
  knreader::RetrievedFacts out;
  for (std::size_t c = 0; c < inst.candidates.size(); ++c) {
    std::vector<Scored> mentions;
    for (knreader::FactId id = 0; id < store.size(); ++id) {
      const auto& f = store.fact(id);
      bool hit = false;
      for (const auto& tok : f.subject_tokens) hit = hit || contains(l.per_candidate[c], lem(tok));
      for (const auto& tok : f.object_tokens) hit = hit || contains(l.per_candidate[c], lem(tok));
      if (!hit) continue;
      const int s = node_weight(f.subject_tokens, l, lem, cfg) + node_weight(f.object_tokens, l, lem, cfg);
      mentions.push_back({s, f.store_ordinal, id});
    }
    std::sort(mentions.begin(), mentions.end(), [](const Scored& x, const Scored& y) {
      if (x.score != y.score) return x.score > y.score;
      return x.ordinal < y.ordinal;
    });
    std::size_t n = 0;
    for (const auto& m : mentions) {
      if (n == cap) break;
      if (std::find(taken.begin(), taken.end(), m.id) != taken.end()) continue;
      taken.push_back(m.id);
      out.facts.push_back({m.id, m.score, c});
      ++n;
    }
  }
  return out;
}

}  // namespace oracle
