#include "knreader/cbt_data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "knreader/error.hpp"
#include "knreader/knowledge_store.hpp"
#include "knreader/text.hpp"

namespace knreader {

std::size_t ClozeInstance::gold_index() const {
  auto it = std::find(candidates.begin(), candidates.end(), gold_answer);
  if (it == candidates.end()) throw DomainError("instance " + instance_id + ": gold answer not among candidates");
  return static_cast<std::size_t>(it - candidates.begin());
}

void validate_instance(const ClozeInstance& instance, const ParseOptions& options, const std::string& context) {
  auto fail = [&](const std::string& why) { return ParseError(context + ": " + why); };
  const std::string placeholder = text::to_lower(options.placeholder);
  if (instance.placeholder_index >= instance.question_tokens.size() ||
      instance.question_tokens[instance.placeholder_index] != placeholder) {
    throw fail("placeholder '" + options.placeholder + "' absent from question");
  }
  if (instance.candidates.size() != options.num_candidates) {
    throw fail("expected " + std::to_string(options.num_candidates) + " candidates, found " +
               std::to_string(instance.candidates.size()));
  }
  std::set<std::string> distinct(instance.candidates.begin(), instance.candidates.end());
  if (distinct.size() != instance.candidates.size()) throw fail("candidates are not distinct");
  if (distinct.count(instance.gold_answer) == 0) {
    throw fail("answer '" + instance.gold_answer + "' not among candidates");
  }
  std::set<std::string> document(instance.document_tokens.begin(), instance.document_tokens.end());
  for (const auto& candidate : instance.candidates) {
    if (document.count(candidate) == 0) throw fail("candidate '" + candidate + "' does not occur in the story");
  }
}

namespace {

std::vector<std::string> lowered(std::vector<std::string> tokens) {
  for (auto& t : tokens) t = text::to_lower(t);
  return tokens;
}

bool is_number(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

ClozeInstance parse_block(const std::vector<std::string>& lines, std::size_t ordinal, const ParseOptions& options) {
  const std::string context = "CBT block " + std::to_string(ordinal);
  auto fail = [&](const std::string& why) { return ParseError(context + ": " + why); };
  if (lines.size() != options.story_lines + 1) {
    throw fail("expected " + std::to_string(options.story_lines + 1) + " lines, found " + std::to_string(lines.size()));
  }

  ClozeInstance instance;
  instance.instance_id = options.id_prefix + "-" + std::to_string(ordinal);
  for (std::size_t i = 0; i < options.story_lines; ++i) {
    if (lines[i].find('\t') != std::string::npos) throw fail("story line " + std::to_string(i + 1) + " contains a tab");
    std::vector<std::string> tokens = text::split_whitespace(lines[i]);
    if (tokens.empty() || !is_number(tokens.front())) {
      throw fail("story line " + std::to_string(i + 1) + " lacks a line number");
    }
    tokens.erase(tokens.begin());
    instance.sentence_lengths.push_back(tokens.size());
    for (auto& t : lowered(std::move(tokens))) instance.document_tokens.push_back(std::move(t));
  }

  std::vector<std::string> fields;
  for (auto& f : text::split(lines.back(), '\t')) {
    if (!text::trim(f).empty()) fields.push_back(std::move(f));
  }
  if (fields.size() < 3) throw fail("question line needs tab-separated question, answer and candidates");
  std::vector<std::string> question = text::split_whitespace(fields[0]);
  if (question.empty() || !is_number(question.front())) throw fail("question line lacks a line number");
  question.erase(question.begin());
  instance.question_tokens = lowered(std::move(question));
  instance.gold_answer = text::to_lower(text::trim(fields[1]));
  for (const auto& c : text::split(fields[2], '|')) {
    std::string_view trimmed = text::trim(c);
    if (!trimmed.empty()) instance.candidates.push_back(text::to_lower(trimmed));
  }

  const std::string placeholder = text::to_lower(options.placeholder);
  auto it = std::find(instance.question_tokens.begin(), instance.question_tokens.end(), placeholder);
  instance.placeholder_index = static_cast<std::size_t>(it - instance.question_tokens.begin());
  validate_instance(instance, options, context);
  return instance;
}

}  // namespace

std::vector<ClozeInstance> parse_cbt(std::istream& in, const ParseOptions& options) {
  std::vector<ClozeInstance> instances;
  std::vector<std::string> block;
  std::string line;
  auto flush = [&] {
    if (block.empty()) return;
    instances.push_back(parse_block(block, instances.size() + 1, options));
    block.clear();
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) {
      flush();
    } else {
      block.push_back(line);
    }
  }
  flush();
  return instances;
}

std::vector<ClozeInstance> parse_cbt_file(const std::string& path, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CBT file '" + path + "'");
  return parse_cbt(in, options);
}

void write_cbt(const std::vector<ClozeInstance>& instances, std::ostream& out) {
  for (std::size_t k = 0; k < instances.size(); ++k) {
    const ClozeInstance& inst = instances[k];
    if (k > 0) out << '\n';
    std::size_t pos = 0;
    std::size_t line = 1;
    for (std::size_t len : inst.sentence_lengths) {
      out << line++;
      for (std::size_t i = 0; i < len; ++i) out << ' ' << inst.document_tokens[pos++];
      out << '\n';
    }
    out << line << ' ' << text::join(inst.question_tokens, " ") << '\t' << inst.gold_answer << "\t\t"
        << text::join(inst.candidates, "|") << '\n';
  }
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  words_.emplace_back(kPadToken);
  for (std::size_t k = 1; k <= kUnknownCount; ++k) words_.push_back("<unk" + std::to_string(k) + ">");
  for (std::size_t i = 0; i < words_.size(); ++i) ids_.emplace(words_[i], static_cast<WordId>(i));
}

bool Vocabulary::contains(std::string_view word) const { return ids_.count(std::string(word)) > 0; }

WordId Vocabulary::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? -1 : it->second;
}

void Vocabulary::add_sorted_words(const std::vector<std::string>& words) {
  for (const auto& w : words) {
    if (ids_.count(w)) continue;
    ids_.emplace(w, static_cast<WordId>(words_.size()));
    words_.push_back(w);
  }
}

void Vocabulary::save(std::ostream& out) const {
  out << "#knreader-vocab\tversion=" << kFormatVersion << "\tmin_count=" << min_count_
      << "\tcorpus_words=" << corpus_words_ << "\tknowledge_words=" << knowledge_words_ << "\tsize=" << words_.size()
      << '\n';
  for (std::size_t i = 0; i < words_.size(); ++i) out << words_[i] << '\t' << i << '\n';
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary '" + path + "'");
  save(out);
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("#knreader-vocab", 0) != 0) {
    throw FormatError("vocabulary file lacks the #knreader-vocab header");
  }
  Vocabulary vocab;
  std::size_t declared_size = 0;
  for (const auto& field : text::split(header, '\t')) {
    auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = field.substr(0, eq);
    const std::size_t value = std::stoul(field.substr(eq + 1));
    if (key == "version" && value != static_cast<std::size_t>(kFormatVersion)) {
      throw FormatError("unsupported vocabulary version " + std::to_string(value));
    }
    if (key == "min_count") vocab.min_count_ = value;
    if (key == "corpus_words") vocab.corpus_words_ = value;
    if (key == "knowledge_words") vocab.knowledge_words_ = value;
    if (key == "size") declared_size = value;
  }
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw FormatError("vocabulary line without a tab: " + line);
    const std::size_t id = std::stoul(line.substr(tab + 1));
    if (id != words.size()) throw FormatError("vocabulary ids are not dense at '" + line + "'");
    words.push_back(line.substr(0, tab));
  }
  if (words.size() != declared_size) throw FormatError("vocabulary size does not match its header");
  const Vocabulary specials;
  for (std::size_t i = 0; i < specials.words_.size(); ++i) {
    if (i >= words.size() || words[i] != specials.words_[i]) throw FormatError("vocabulary specials are corrupt");
  }
  vocab.add_sorted_words(std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(specials.size()), words.end()));
  return vocab;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary '" + path + "'");
  return load(in);
}

std::string relation_token(std::string_view relation) { return text::to_lower(relation); }

Vocabulary build_vocabulary(const std::vector<ClozeInstance>& train_instances, const FactStore* store,
                            std::size_t min_count) {
  if (min_count < 1) throw ConfigError("min_count must be at least 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& inst : train_instances) {
    for (const auto& t : inst.document_tokens) ++counts[t];
    for (const auto& t : inst.question_tokens) ++counts[t];
  }
  std::set<std::string> corpus;
  for (const auto& [word, count] : counts) {
    if (count >= min_count) corpus.insert(word);
  }
  std::set<std::string> knowledge;
  if (store != nullptr) {
    for (const auto& fact : store->facts()) {
      for (const auto& t : fact.subject_tokens) knowledge.insert(text::to_lower(t));
      for (const auto& t : fact.object_tokens) knowledge.insert(text::to_lower(t));
      knowledge.insert(relation_token(fact.relation));
    }
  }
  std::set<std::string> all(corpus);
  all.insert(knowledge.begin(), knowledge.end());

  Vocabulary vocab;
  vocab.min_count_ = min_count;
  vocab.corpus_words_ = corpus.size();
  vocab.knowledge_words_ = knowledge.size();
  vocab.add_sorted_words(std::vector<std::string>(all.begin(), all.end()));
  return vocab;
}

// ---------------------------------------------------------------------------
// Encoding and batching

WordId EncodedInstance::lookup(const Vocabulary& vocab, std::string_view word) const {
  WordId id = vocab.id(word);
  if (id >= 0) return id;
  auto it = unk_assignment.find(std::string(word));
  return it != unk_assignment.end() ? it->second : vocab.unk_id(0);
}

EncodedInstance encode_instance(const ClozeInstance& instance, const Vocabulary& vocab, Rng& rng) {
  EncodedInstance out;
  out.instance_id = instance.instance_id;
  out.placeholder_index = instance.placeholder_index;
  out.gold_index = instance.gold_index();

  std::uniform_int_distribution<std::size_t> pick_unk(0, Vocabulary::kUnknownCount - 1);
  auto encode = [&](const std::string& word) {
    WordId id = vocab.id(word);
    if (id >= 0) return id;
    auto [it, inserted] = out.unk_assignment.emplace(word, 0);
    if (inserted) it->second = vocab.unk_id(pick_unk(rng));
    return it->second;
  };
  for (const auto& t : instance.document_tokens) out.document_ids.push_back(encode(t));
  for (const auto& t : instance.question_tokens) out.question_ids.push_back(encode(t));
  for (const auto& c : instance.candidates) {
    out.candidate_ids.push_back(encode(c));
    std::vector<std::size_t> positions;
    for (std::size_t j = 0; j < instance.document_tokens.size(); ++j) {
      if (instance.document_tokens[j] == c) positions.push_back(j);
    }
    if (positions.empty()) {
      throw EncodingError("instance " + instance.instance_id + ": candidate '" + c + "' never occurs in the story");
    }
    out.candidate_occurrences.push_back(std::move(positions));
  }
  return out;
}

std::vector<std::vector<std::size_t>> batch_instances(const std::vector<std::size_t>& document_lengths,
                                                      std::size_t batch_size, Rng& rng) {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(document_lengths.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return document_lengths[a] < document_lengths[b]; });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

PaddedSequences pad_sequences(const std::vector<const std::vector<WordId>*>& sequences) {
  PaddedSequences out;
  out.batch = sequences.size();
  for (const auto* s : sequences) out.length = std::max(out.length, s->size());
  out.ids.assign(out.batch * out.length, Vocabulary::kPadId);
  out.mask.assign(out.batch * out.length, 0.0f);
  for (std::size_t b = 0; b < out.batch; ++b) {
    const auto& s = *sequences[b];
    out.lengths.push_back(s.size());
    for (std::size_t t = 0; t < s.size(); ++t) {
      out.ids[b * out.length + t] = s[t];
      out.mask[b * out.length + t] = 1.0f;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings

EmbeddingMatrix random_embeddings(const Vocabulary& vocab, std::size_t width, Rng& rng) {
  EmbeddingMatrix m;
  m.rows = vocab.size();
  m.width = width;
  m.values.resize(m.rows * width);
  m.pretrained.assign(m.rows, false);
  std::uniform_real_distribution<float> uniform(-0.1f, 0.1f);
  for (float& v : m.values) v = uniform(rng);
  return m;
}

EmbeddingMatrix load_embeddings(const std::string& path, const Vocabulary& vocab, Rng& rng,
                                std::size_t expected_width) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file '" + path + "'");
  std::size_t width = 0;
  std::unordered_map<WordId, std::vector<float>> found;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    std::vector<std::string> fields = text::split_whitespace(line);
    if (fields.empty()) continue;
    const std::size_t w = fields.size() - 1;
    if (w == 0) throw FormatError(path + ":" + std::to_string(line_number) + ": embedding line has no values");
    if (width == 0) width = w;
    if (w != width) {
      throw FormatError(path + ":" + std::to_string(line_number) + ": embedding width " + std::to_string(w) +
                        " differs from " + std::to_string(width));
    }
    WordId id = vocab.id(text::to_lower(fields[0]));
    if (id < 0 || found.count(id)) continue;
    std::vector<float> row(width);
    for (std::size_t i = 0; i < width; ++i) {
      try {
        row[i] = std::stof(fields[i + 1]);
      } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(line_number) + ": non-numeric embedding value");
      }
    }
    found.emplace(id, std::move(row));
  }
  if (width == 0) throw FormatError("embedding file '" + path + "' is empty");
  if (expected_width > 0 && width != expected_width) {
    throw FormatError("embedding file width " + std::to_string(width) + " does not match configured width " +
                      std::to_string(expected_width));
  }
  EmbeddingMatrix m = random_embeddings(vocab, width, rng);
  for (const auto& [id, row] : found) {
    std::copy(row.begin(), row.end(), m.values.begin() + static_cast<std::ptrdiff_t>(id) * static_cast<std::ptrdiff_t>(width));
    m.pretrained[static_cast<std::size_t>(id)] = true;
  }
  return m;
}

}  // namespace knreader
