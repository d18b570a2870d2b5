#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace knreader {

class FactStore;

using Rng = std::mt19937_64;
using WordId = std::int32_t;

// One cloze item: a story, a question with a placeholder, and its candidates.
struct ClozeInstance {
  std::string instance_id;
  std::vector<std::string> document_tokens;
  std::vector<std::size_t> sentence_lengths;  // token count of each story line, for re-serialization
  std::vector<std::string> question_tokens;
  std::size_t placeholder_index = 0;
  std::vector<std::string> candidates;
  std::string gold_answer;

  std::size_t gold_index() const;
};

struct ParseOptions {
  std::string placeholder = "XXXXX";
  std::size_t story_lines = 20;
  std::size_t num_candidates = 10;
  std::string id_prefix = "block";
};

// Parses blank-line separated CBT blocks. Line numbers are stripped, tokens are
// split on whitespace and lowercased. Throws ParseError naming the block
// ordinal (1-based) and the violated rule.
std::vector<ClozeInstance> parse_cbt(std::istream& in, const ParseOptions& options = {});
std::vector<ClozeInstance> parse_cbt_file(const std::string& path, const ParseOptions& options = {});

// Writes instances back in CBT layout (line numbers restored, tab-separated
// answer and candidate fields).
void write_cbt(const std::vector<ClozeInstance>& instances, std::ostream& out);

// Checks the ClozeInstance invariants; throws ParseError with `context` prefix.
void validate_instance(const ClozeInstance& instance, const ParseOptions& options, const std::string& context);

class Vocabulary {
 public:
  static constexpr std::size_t kUnknownCount = 100;
  static constexpr WordId kPadId = 0;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr int kFormatVersion = 1;

  // Specials only: padding and the reserved unknown tokens.
  Vocabulary();

  std::size_t size() const { return words_.size(); }
  bool contains(std::string_view word) const;
  // Returns -1 for out-of-vocabulary words.
  WordId id(std::string_view word) const;
  const std::string& word(WordId id) const { return words_.at(static_cast<std::size_t>(id)); }
  WordId unk_id(std::size_t k) const { return static_cast<WordId>(1 + k); }
  bool is_unknown_id(WordId id) const { return id >= 1 && id <= static_cast<WordId>(kUnknownCount); }
  // Number of non-special entries.
  std::size_t word_count() const { return words_.size() - 1 - kUnknownCount; }

  std::size_t min_count() const { return min_count_; }
  std::size_t corpus_words() const { return corpus_words_; }
  std::size_t knowledge_words() const { return knowledge_words_; }

  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static Vocabulary load(std::istream& in);
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  friend Vocabulary build_vocabulary(const std::vector<ClozeInstance>&, const FactStore*, std::size_t);
  void add_sorted_words(const std::vector<std::string>& words);

  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> ids_;
  std::size_t min_count_ = 0;
  std::size_t corpus_words_ = 0;
  std::size_t knowledge_words_ = 0;
};

// Training words with frequency >= min_count (documents and questions), plus
// every token of every stored fact (subject, object, lowercased relation).
// Word ids are assigned in lexicographic order after the specials.
Vocabulary build_vocabulary(const std::vector<ClozeInstance>& train_instances, const FactStore* store,
                            std::size_t min_count = 5);

// Vocabulary token for a relation type (relations enter as whole words).
std::string relation_token(std::string_view relation);

struct EncodedInstance {
  std::string instance_id;
  std::vector<WordId> document_ids;
  std::vector<WordId> question_ids;
  std::size_t placeholder_index = 0;
  std::vector<WordId> candidate_ids;
  std::vector<std::vector<std::size_t>> candidate_occurrences;
  std::size_t gold_index = 0;
  std::map<std::string, WordId> unk_assignment;

  // Id for a word under this instance's unknown-token assignment: the vocabulary
  // id, else the instance's unk id, else the first reserved unk id.
  WordId lookup(const Vocabulary& vocab, std::string_view word) const;
};

// Maps out-of-vocabulary words to unk ids drawn uniformly from the reserved
// 100, consistently within the instance. Throws EncodingError when a candidate
// has no occurrence in the document.
EncodedInstance encode_instance(const ClozeInstance& instance, const Vocabulary& vocab, Rng& rng);

// Sorts indices by document length (stable), chunks into batches of at most
// batch_size, then shuffles the batch order with rng. Each batch lists indices
// into `document_lengths`.
std::vector<std::vector<std::size_t>> batch_instances(const std::vector<std::size_t>& document_lengths,
                                                      std::size_t batch_size, Rng& rng);

// A batch of id sequences padded to its longest member, with a 0/1 mask.
struct PaddedSequences {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<WordId> ids;    // batch x length, row-major, padded with Vocabulary::kPadId
  std::vector<float> mask;    // batch x length
  std::vector<std::size_t> lengths;

  WordId at(std::size_t b, std::size_t t) const { return ids[b * length + t]; }
  float mask_at(std::size_t b, std::size_t t) const { return mask[b * length + t]; }
};

PaddedSequences pad_sequences(const std::vector<const std::vector<WordId>*>& sequences);

struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<float> values;  // rows x width
  std::vector<bool> pretrained;  // per row: copied from the file
  bool trainable = true;

  float at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

// Uniform [-0.1, 0.1] rows for the whole vocabulary.
EmbeddingMatrix random_embeddings(const Vocabulary& vocab, std::size_t width, Rng& rng);

// Reads "word v1 ... vE" lines. Rows for vocabulary words found in the file are
// copied; all others are uniform in [-0.1, 0.1]. Throws IoError for unreadable
// files and FormatError for inconsistent widths or a width != expected_width
// (when expected_width > 0).
EmbeddingMatrix load_embeddings(const std::string& path, const Vocabulary& vocab, Rng& rng,
                                std::size_t expected_width = 0);

}  // namespace knreader
