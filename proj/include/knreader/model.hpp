#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knreader/autodiff/graph.hpp"
#include "knreader/autodiff/gru.hpp"
#include "knreader/autodiff/parameters.hpp"
#include "knreader/cbt_data.hpp"
#include "knreader/retrieval.hpp"

namespace knreader::model {

using autodiff::Graph;
using autodiff::ParameterSet;
using autodiff::Var;

enum class KvStrategy { SubjObj, ObjObj };

KvStrategy parse_kv_strategy(std::string_view name);
std::string_view to_string(KvStrategy kv);

// (question representation, document representation); "kn" stands for the
// knowledge-enriched ctx+kn variant. The enum value is the ensemble weight index.
enum class Interaction : std::size_t { CtxCtx = 0, CtxKn = 1, KnCtx = 2, KnKn = 3 };
inline constexpr std::array<Interaction, 4> kInteractions = {Interaction::CtxCtx, Interaction::CtxKn,
                                                             Interaction::KnCtx, Interaction::KnKn};
std::string_view short_name(Interaction i);  // "cc", "ck", "kc", "kk"
// Row label in the D-to-Q layout, e.g. Interaction::CtxKn -> "D_ctx+kn, Q_ctx".
std::string interaction_label(Interaction i);

class InteractionMask {
 public:
  InteractionMask() = default;
  static InteractionMask all();
  static InteractionMask only(Interaction i);
  static InteractionMask all_except(Interaction i);
  // Comma-separated short names ("cc,kc"), or "all"/"full", or "ctx-only".
  static InteractionMask parse(std::string_view text);
  // The nine masks of the interaction ablation table, in table order.
  static std::vector<InteractionMask> ablation_rows();

  bool enabled(Interaction i) const { return bits_[static_cast<std::size_t>(i)]; }
  void set(Interaction i, bool on) { bits_[static_cast<std::size_t>(i)] = on; }
  bool any() const;
  std::size_t count() const;
  bool uses_knowledge() const;
  std::string to_string() const;
  // "Full model", "D_ctx, Q_ctx (w/o know)", "w/o D_ctx, Q_ctx+kn", ...
  std::string table_label() const;

  bool operator==(const InteractionMask&) const = default;

 private:
  std::array<bool, 4> bits_{};
};

struct ModelConfig {
  std::size_t hidden = 32;
  std::size_t embed_dim = 32;
  double gamma = 0.5;
  KvStrategy kv = KvStrategy::SubjObj;
  InteractionMask interactions = InteractionMask::all();
  double keep_prob = 0.8;
  bool knowledge_enabled = true;
  // Embedding rows start uniform in [-embedding_init, embedding_init] unless
  // pretrained vectors are loaded.
  double embedding_init = 0.1;

  // Throws ConfigError: empty mask, gamma outside [0,1], keep_prob outside
  // (0,1], zero widths, non-positive embedding_init, or knowledge-bearing interactions with knowledge off.
  void validate() const;
  // Memory is built only when knowledge is on and some interaction reads it.
  bool builds_memory() const { return knowledge_enabled && interactions.uses_knowledge(); }

  static ModelConfig paper();
  static ModelConfig toy();
};

// One retrieved fact as vocabulary ids.
struct EncodedFact {
  std::vector<WordId> subject_ids;
  WordId relation_id = 0;
  std::vector<WordId> object_ids;
  std::size_t candidate_index = 0;
};

std::vector<EncodedFact> encode_fact_ids(std::span<const RetrievedTriple> facts, const Vocabulary& vocab,
                                         const EncodedInstance& instance);

struct PreparedInstance {
  EncodedInstance encoded;
  std::vector<EncodedFact> facts;
};

struct OccurrenceAttention {
  std::size_t candidate_index = 0;
  std::size_t position = 0;
  std::vector<double> weights;  // over memory rows
};

// Everything needed to inspect one prediction.
struct AttentionTrace {
  std::string instance_id;
  std::size_t fact_count = 0;
  std::vector<double> question_fact_attention;  // empty when no memory
  std::vector<OccurrenceAttention> candidate_fact_attention;
  // Unweighted attention sums per candidate for each interaction; empty when
  // the interaction's representations are unavailable (no knowledge).
  std::array<std::vector<double>, 4> interaction_sums;
  std::array<double, 4> interaction_weights{};
  InteractionMask enabled;
  std::vector<double> ensemble_scores;
  std::vector<double> probabilities;
  std::size_t gold_index = 0;
  std::size_t predicted_index = 0;
};

// Index of the maximum; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

// Fact memory rows of one instance (keys and values are P' x 2h; empty when P' == 0).
struct FactMemory {
  Var keys;
  Var values;
  std::size_t rows = 0;
};

template <typename T>
struct ForwardOptions {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required for dropout when training
  bool want_trace = false;
};

struct ContextEncoding {
  std::vector<Var> document_steps;  // per position, B x 2h
  std::vector<Var> question_steps;  // per position, B x 2h
};

struct BatchOutput {
  Var loss;  // mean cross entropy over the batch
  std::vector<std::vector<double>> probabilities;
  std::vector<AttentionTrace> traces;
};

// --- Building blocks ------------------------------------------------------

// Row `placeholder_index` of the m x 2h question encodings.
template <typename T>
Var question_query(Graph<T>& g, Var question_encodings, std::size_t placeholder_index);

// softmax(tokens * keys^T) * values for every token row; a zero matrix when the
// memory is empty. `attention_out`, when given, receives the attention weights.
template <typename T>
Var query_memory(Graph<T>& g, Var tokens, const FactMemory& memory, Var* attention_out = nullptr);

// gamma * ctx + (1 - gamma) * kn
template <typename T>
Var combine(Graph<T>& g, Var ctx, Var kn, T gamma);

// k x 1 ensemble attention for k document rows against one question row:
// sum over enabled interactions of W_t * <question variant, document variant>.
template <typename T>
Var ensemble_attention(Graph<T>& g, Var question_ctx, Var question_enriched, Var document_ctx,
                       Var document_enriched, const std::array<Var, 4>& weights, const InteractionMask& enabled);

// 1 x C per-candidate sums of the k x 1 alphas (before normalization).
template <typename T>
Var candidate_scores(Graph<T>& g, Var alphas, std::span<const std::size_t> owner, std::size_t num_candidates);

// softmax of candidate_scores.
template <typename T>
Var attention_sum(Graph<T>& g, Var alphas, std::span<const std::size_t> owner, std::size_t num_candidates);

// --- Model ---------------------------------------------------------------

template <typename T>
class KnReader {
 public:
  KnReader(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed);
  // Adopts existing parameters (e.g. from a checkpoint); names and shapes are checked.
  KnReader(const ModelConfig& config, ParameterSet<T> params);
  KnReader(const KnReader& other) : config_(other.config_), params_(other.params_) {}
  KnReader& operator=(const KnReader& other) {
    config_ = other.config_;
    params_ = other.params_;
    return *this;
  }

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  std::size_t vocab_size() const { return params_.at("embedding").value.rows(); }

  void set_embeddings(const EmbeddingMatrix& embeddings);
  void set_embeddings_trainable(bool trainable) { params_.at("embedding").trainable = trainable; }

  ContextEncoding encode_context(Graph<T>& g, std::span<const PreparedInstance* const> batch,
                                 const ForwardOptions<T>& options);

  // Encodes every fact of the batch with the chained fact BiGRU and returns one
  // memory per instance.
  std::vector<FactMemory> encode_facts(Graph<T>& g, std::span<const PreparedInstance* const> batch);

  BatchOutput forward(Graph<T>& g, std::span<const PreparedInstance* const> batch, const ForwardOptions<T>& options);

 private:
  void check_parameters() const;

  ModelConfig config_;
  ParameterSet<T> params_;
};

extern template class KnReader<float>;
extern template class KnReader<double>;

}  // namespace knreader::model
