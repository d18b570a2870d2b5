#pragma once

// Shared fixtures and hand-rolled generators for the unit and acceptance tests.

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "knreader/cbt_data.hpp"
#include "knreader/knowledge_store.hpp"
#include "knreader/synthetic.hpp"
#include "knreader/text.hpp"
#include "knreader/training.hpp"

#ifndef KNREADER_FIXTURE_DIR
#define KNREADER_FIXTURE_DIR "tests/fixtures"
#endif

namespace support {

using knreader::ClozeInstance;
using knreader::FactStore;
using knreader::KnowledgeTriple;

inline std::string fixture(const std::string& name) { return std::string(KNREADER_FIXTURE_DIR) + "/" + name; }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::size_t counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("knreader-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Story given as one string per line; candidates must occur in it.
inline ClozeInstance make_instance(const std::string& id, const std::vector<std::string>& lines,
                                   const std::string& question, const std::vector<std::string>& candidates,
                                   const std::string& answer, const std::string& placeholder = "xxxxx") {
  ClozeInstance inst;
  inst.instance_id = id;
  for (const auto& l : lines) {
    auto toks = knreader::text::split_whitespace(l);
    inst.sentence_lengths.push_back(toks.size());
    inst.document_tokens.insert(inst.document_tokens.end(), toks.begin(), toks.end());
  }
  inst.question_tokens = knreader::text::split_whitespace(question);
  for (std::size_t i = 0; i < inst.question_tokens.size(); ++i) {
    if (inst.question_tokens[i] == placeholder) inst.placeholder_index = i;
  }
  inst.candidates = candidates;
  inst.gold_answer = answer;
  return inst;
}

inline KnowledgeTriple triple(const std::string& subject, const std::string& relation, const std::string& object,
                              const std::string& source = "/s/omcs") {
  return {knreader::text::split_whitespace(subject), relation, knreader::text::split_whitespace(object), source, 0};
}

// Word pools for the randomized retrieval tests. Inflected forms share lemmas
// with the base forms, so matching has to go through the lemmatizer.
inline const std::vector<std::string>& base_words() {
  static const std::vector<std::string> w = {"dog",   "cat",   "box",   "city",  "house", "river", "tree",
                                             "apple", "bread", "king",  "queen", "fox",   "owl",   "stone",
                                             "wheel", "bird",  "child", "mouse", "lamp",  "sword"};
  return w;
}
inline const std::vector<std::string>& inflected_words() {
  static const std::vector<std::string> w = {"dogs", "cats",   "boxes",  "cities", "houses", "rivers", "trees",
                                             "apples", "kings", "foxes", "owls",   "children", "mice", "lamps"};
  return w;
}
inline const std::vector<std::string>& other_words() {
  static const std::vector<std::string> w = {"run", "running", "walked", "walk", "green", "small", "old",
                                             "sing", "sang",    "eat",    "water", "light", "dark", "cold"};
  return w;
}

inline std::string pick(const std::vector<std::string>& pool, std::mt19937_64& rng) {
  return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
}

// Ten distinct single-token candidates from base_words, a short story that
// mentions each of them, and a question drawn from all pools.
inline ClozeInstance random_instance(std::mt19937_64& rng, const std::string& id, std::size_t num_candidates = 10) {
  std::vector<std::string> pool = base_words();
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<std::string> cands(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(num_candidates));
  std::vector<std::string> lines;
  for (const auto& c : cands) {
    std::string line = pick(other_words(), rng) + " " + c;
    if (rng() % 3 == 0) line += " " + pick(inflected_words(), rng);
    if (rng() % 2 == 0) line += " " + pick(other_words(), rng);
    lines.push_back(line + " .");
  }
  std::shuffle(lines.begin(), lines.end(), rng);
  std::string question = pick(other_words(), rng) + " " + pick(base_words(), rng) + " xxxxx " +
                         pick(inflected_words(), rng) + " .";
  const std::string answer = cands[rng() % cands.size()];
  return make_instance(id, lines, question, cands, answer);
}

inline std::string random_phrase(std::mt19937_64& rng) {
  const std::size_t n = 1 + rng() % 3;
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = rng() % 10;
    const auto& pool = r < 4 ? base_words() : r < 7 ? inflected_words() : other_words();
    out += (i ? " " : "") + pick(pool, rng);
  }
  return out;
}

// Random store of n facts; phrases repeat, so equal scores are common.
inline FactStore random_store(std::mt19937_64& rng, std::size_t n) {
  static const std::vector<std::string> relations = {"/r/IsA", "/r/AtLocation", "/r/UsedFor", "/r/CapableOf",
                                                     "/r/RelatedTo", "/r/PartOf"};
  static const std::vector<std::string> sources = {"/s/omcs", "/s/wordnet/3.0", "/s/dbpedia"};
  FactStore store;
  for (std::size_t i = 0; i < n; ++i) {
    store.add(triple(random_phrase(rng), pick(relations, rng), random_phrase(rng), pick(sources, rng)));
  }
  return store;
}

// Small synthetic corpus, retrieved and encoded, ready for training.
struct SyntheticSetup {
  knreader::training::Corpus corpus;
  knreader::training::PreparedCorpus data;
};

inline SyntheticSetup synthetic_setup(const knreader::SyntheticConfig& sc, const knreader::training::TrainConfig& tc) {
  auto syn = knreader::generate_synthetic(sc);
  SyntheticSetup s;
  s.corpus.vocab = knreader::build_vocabulary(syn.train, &syn.store, 1);
  s.corpus.train = std::move(syn.train);
  s.corpus.dev = std::move(syn.dev);
  s.corpus.test = std::move(syn.test);
  s.corpus.store = std::move(syn.store);
  s.data = knreader::training::prepare_corpus(s.corpus, tc);
  return s;
}

}  // namespace support
