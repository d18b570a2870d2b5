#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "knreader/cbt_data.hpp"
#include "knreader/knowledge_store.hpp"

namespace knreader {

// Planted-fact cloze corpus. Every story mentions each of its candidates one or
// two times at random positions, independently of the answer, so the text alone
// carries no signal. The question holds a cue word right before the placeholder
// that occurs nowhere else in the corpus, and the store holds (cue,
// /r/AtLocation, answer). Distractor facts link entities to tag words that never
// appear in text; they precede the planted facts in store order, so with the
// default budget an instance's memory holds exactly one AtLocation fact.
struct SyntheticConfig {
  std::size_t train = 500;
  std::size_t dev = 100;
  std::size_t test = 100;
  std::size_t entities = 40;
  std::size_t fillers = 60;
  std::size_t tags = 30;
  std::size_t story_lines = 20;
  std::size_t sentence_length = 4;  // filler tokens per story line, before candidate insertions
  std::size_t question_length = 6;  // including cue, placeholder and final period
  std::size_t num_candidates = 10;
  std::size_t distractors_per_entity = 8;
  std::uint64_t seed = 7;
  std::string placeholder = "xxxxx";
};

struct SyntheticCorpus {
  std::vector<ClozeInstance> train;
  std::vector<ClozeInstance> dev;
  std::vector<ClozeInstance> test;
  FactStore store;
};

SyntheticCorpus generate_synthetic(const SyntheticConfig& config = {});

}  // namespace knreader
