#include "knreader/synthetic.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "knreader/error.hpp"

namespace knreader {
namespace {

std::string word(const char* stem, std::size_t i) { return std::string(stem) + std::to_string(i); }

using Planted = std::vector<std::pair<std::vector<std::string>, std::string>>;

ClozeInstance make_instance(const SyntheticConfig& c, std::size_t ordinal, const std::string& split, Rng& rng,
                            Planted& planted) {
  std::uniform_int_distribution<std::size_t> filler(0, c.fillers - 1);
  ClozeInstance inst;
  inst.instance_id = split + "-" + std::to_string(ordinal);

  std::vector<std::size_t> pool(c.entities);
  for (std::size_t i = 0; i < c.entities; ++i) pool[i] = i;
  std::shuffle(pool.begin(), pool.end(), rng);
  for (std::size_t i = 0; i < c.num_candidates; ++i) inst.candidates.push_back(word("ent", pool[i]));
  inst.gold_answer = inst.candidates[std::uniform_int_distribution<std::size_t>(0, c.num_candidates - 1)(rng)];

  std::vector<std::vector<std::string>> lines(c.story_lines);
  for (auto& line : lines) {
    for (std::size_t t = 0; t < c.sentence_length; ++t) line.push_back(word("fil", filler(rng)));
  }
  std::uniform_int_distribution<std::size_t> pick_line(0, c.story_lines - 1);
  std::uniform_int_distribution<std::size_t> mentions(1, 2);
  for (const auto& cand : inst.candidates) {
    for (std::size_t m = mentions(rng); m > 0; --m) {
      auto& line = lines[pick_line(rng)];
      const auto at = std::uniform_int_distribution<std::size_t>(0, line.size())(rng);
      line.insert(line.begin() + static_cast<std::ptrdiff_t>(at), cand);
    }
  }
  for (auto& line : lines) {
    line.push_back(".");
    inst.sentence_lengths.push_back(line.size());
    inst.document_tokens.insert(inst.document_tokens.end(), line.begin(), line.end());
  }

  const std::vector<std::string> cue = {word("cue", planted.size())};
  for (std::size_t t = 0; t + 3 < c.question_length; ++t) inst.question_tokens.push_back(word("fil", filler(rng)));
  inst.question_tokens.insert(inst.question_tokens.end(), cue.begin(), cue.end());
  inst.placeholder_index = inst.question_tokens.size();
  inst.question_tokens.push_back(c.placeholder);
  inst.question_tokens.push_back(".");
  planted.emplace_back(cue, inst.gold_answer);
  return inst;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticConfig& c) {
  if (c.num_candidates == 0 || c.entities < c.num_candidates || c.fillers == 0 || c.tags == 0 ||
      c.story_lines == 0 || c.question_length < 3) {
    throw ConfigError("synthetic corpus: inconsistent sizes");
  }
  Rng rng(c.seed);
  SyntheticCorpus corpus;
  Planted planted;
  for (std::size_t i = 0; i < c.train; ++i) corpus.train.push_back(make_instance(c, i, "train", rng, planted));
  for (std::size_t i = 0; i < c.dev; ++i) corpus.dev.push_back(make_instance(c, i, "dev", rng, planted));
  for (std::size_t i = 0; i < c.test; ++i) corpus.test.push_back(make_instance(c, i, "test", rng, planted));

  std::uniform_int_distribution<std::size_t> tag(0, c.tags - 1);
  for (std::size_t e = 0; e < c.entities; ++e) {
    for (std::size_t k = 0; k < c.distractors_per_entity; ++k) {
      const bool taxonomic = k % 2 == 0;
      corpus.store.add(KnowledgeTriple{{word("ent", e)},
                                       taxonomic ? "/r/IsA" : "/r/RelatedTo",
                                       {word("tag", tag(rng))},
                                       taxonomic ? "/s/wordnet/3.0" : "/s/omcs",
                                       0});
    }
  }
  // Distractors take the low ordinals, so within a candidate's quota they
  // outrank the planted facts of other instances.
  for (const auto& [cue, answer] : planted) {
    corpus.store.add(KnowledgeTriple{cue, "/r/AtLocation", {answer}, "/s/omcs", 0});
  }
  return corpus;
}

}  // namespace knreader
