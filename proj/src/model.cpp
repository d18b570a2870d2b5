#include "knreader/model.hpp"

#include <algorithm>
#include <cmath>

#include "knreader/autodiff/ops.hpp"
#include "knreader/error.hpp"
#include "knreader/text.hpp"

namespace knreader::model {

using autodiff::BoundGru;
using autodiff::Parameter;
using autodiff::RowRef;
using autodiff::Tensor;

KvStrategy parse_kv_strategy(std::string_view name) {
  const std::string lower = text::to_lower(name);
  if (lower == "subjobj" || lower == "subj/obj" || lower == "subj-obj") return KvStrategy::SubjObj;
  if (lower == "objobj" || lower == "obj/obj" || lower == "obj-obj") return KvStrategy::ObjObj;
  throw ConfigError("unknown key-value strategy '" + std::string(name) + "' (expected subjobj or objobj)");
}

std::string_view to_string(KvStrategy kv) { return kv == KvStrategy::SubjObj ? "subjobj" : "objobj"; }

std::string_view short_name(Interaction i) {
  switch (i) {
    case Interaction::CtxCtx: return "cc";
    case Interaction::CtxKn: return "ck";
    case Interaction::KnCtx: return "kc";
    case Interaction::KnKn: return "kk";
  }
  return "cc";
}

std::string interaction_label(Interaction i) {
  switch (i) {
    case Interaction::CtxCtx: return "D_ctx, Q_ctx";
    case Interaction::CtxKn: return "D_ctx+kn, Q_ctx";
    case Interaction::KnCtx: return "D_ctx, Q_ctx+kn";
    case Interaction::KnKn: return "D_ctx+kn, Q_ctx+kn";
  }
  return "";
}

InteractionMask InteractionMask::all() {
  InteractionMask m;
  m.bits_.fill(true);
  return m;
}

InteractionMask InteractionMask::only(Interaction i) {
  InteractionMask m;
  m.set(i, true);
  return m;
}

InteractionMask InteractionMask::all_except(Interaction i) {
  InteractionMask m = all();
  m.set(i, false);
  return m;
}

InteractionMask InteractionMask::parse(std::string_view text_value) {
  const std::string lower = text::to_lower(text::trim(text_value));
  if (lower == "all" || lower == "full") return all();
  if (lower == "ctx-only" || lower == "ctx") return only(Interaction::CtxCtx);
  InteractionMask m;
  for (const auto& part : text::split(lower, ',')) {
    const std::string_view name = text::trim(part);
    bool matched = false;
    for (Interaction i : kInteractions) {
      if (name == short_name(i)) {
        m.set(i, true);
        matched = true;
      }
    }
    if (!matched) {
      throw ConfigError("unknown interaction '" + std::string(name) + "' (expected cc, ck, kc, kk, all or ctx-only)");
    }
  }
  if (!m.any()) throw ConfigError("interaction mask is empty");
  return m;
}

std::vector<InteractionMask> InteractionMask::ablation_rows() {
  return {only(Interaction::CtxCtx),       only(Interaction::KnKn),       only(Interaction::KnCtx),
          only(Interaction::CtxKn),        all(),                         all_except(Interaction::CtxCtx),
          all_except(Interaction::KnKn),   all_except(Interaction::KnCtx), all_except(Interaction::CtxKn)};
}

bool InteractionMask::any() const { return count() > 0; }

std::size_t InteractionMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), true));
}

bool InteractionMask::uses_knowledge() const {
  return enabled(Interaction::CtxKn) || enabled(Interaction::KnCtx) || enabled(Interaction::KnKn);
}

std::string InteractionMask::to_string() const {
  std::vector<std::string> names;
  for (Interaction i : kInteractions) {
    if (enabled(i)) names.emplace_back(short_name(i));
  }
  return text::join(names, ",");
}

std::string InteractionMask::table_label() const {
  if (*this == all()) return "Full model";
  if (*this == only(Interaction::CtxCtx)) return interaction_label(Interaction::CtxCtx) + " (w/o know)";
  if (count() == 1) {
    for (Interaction i : kInteractions) {
      if (enabled(i)) return interaction_label(i);
    }
  }
  if (count() == 3) {
    for (Interaction i : kInteractions) {
      if (!enabled(i)) return "w/o " + interaction_label(i);
    }
  }
  return to_string();
}

void ModelConfig::validate() const {
  if (hidden == 0 || embed_dim == 0) throw ConfigError("hidden and embedding widths must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ConfigError("dropout keep probability must lie in (0, 1]");
  if (!(embedding_init > 0.0)) throw ConfigError("embedding init range must be positive");
  if (!interactions.any()) throw ConfigError("at least one interaction must be enabled");
  if (!knowledge_enabled && interactions.uses_knowledge()) {
    throw ConfigError("interactions " + interactions.to_string() + " need knowledge, but knowledge is disabled");
  }
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.hidden = 256;
  c.embed_dim = 100;
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.kv = KvStrategy::ObjObj;
  c.embedding_init = 1.0;
  return c;
}

std::vector<EncodedFact> encode_fact_ids(std::span<const RetrievedTriple> facts, const Vocabulary& vocab,
                                         const EncodedInstance& instance) {
  std::vector<EncodedFact> out;
  out.reserve(facts.size());
  for (const auto& f : facts) {
    EncodedFact e;
    for (const auto& t : f.triple.subject_tokens) e.subject_ids.push_back(instance.lookup(vocab, text::to_lower(t)));
    e.relation_id = instance.lookup(vocab, relation_token(f.triple.relation));
    for (const auto& t : f.triple.object_tokens) e.object_ids.push_back(instance.lookup(vocab, text::to_lower(t)));
    e.candidate_index = f.candidate_index;
    out.push_back(std::move(e));
  }
  return out;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Building blocks

template <typename T>
Var question_query(Graph<T>& g, Var question_encodings, std::size_t placeholder_index) {
  if (placeholder_index >= g.value(question_encodings).rows()) {
    throw DomainError("placeholder index " + std::to_string(placeholder_index) + " outside a question of " +
                      std::to_string(g.value(question_encodings).rows()) + " tokens");
  }
  return g.pickup_row(question_encodings, placeholder_index);
}

template <typename T>
Var query_memory(Graph<T>& g, Var tokens, const FactMemory& memory, Var* attention_out) {
  if (memory.rows == 0) {
    const auto& tv = g.value(tokens);
    if (attention_out) *attention_out = Var{};
    return g.constant(Tensor<T>(tv.rows(), tv.cols()));
  }
  Var attention = g.softmax_rows(g.matmul_nt(tokens, memory.keys));
  if (attention_out) *attention_out = attention;
  return g.matmul(attention, memory.values);
}

template <typename T>
Var combine(Graph<T>& g, Var ctx, Var kn, T gamma) {
  if (!(gamma >= T(0) && gamma <= T(1))) throw DomainError("combine: gamma must lie in [0, 1]");
  return g.add(g.scale(ctx, gamma), g.scale(kn, T(1) - gamma));
}

template <typename T>
Var ensemble_attention(Graph<T>& g, Var question_ctx, Var question_enriched, Var document_ctx,
                       Var document_enriched, const std::array<Var, 4>& weights, const InteractionMask& enabled) {
  if (!enabled.any()) throw ConfigError("ensemble attention needs at least one enabled interaction");
  std::vector<Var> terms;
  for (Interaction i : kInteractions) {
    if (!enabled.enabled(i)) continue;
    const bool q_kn = i == Interaction::KnCtx || i == Interaction::KnKn;
    const bool d_kn = i == Interaction::CtxKn || i == Interaction::KnKn;
    Var q = q_kn ? question_enriched : question_ctx;
    Var d = d_kn ? document_enriched : document_ctx;
    if (!q.valid() || !d.valid()) throw ConfigError("interaction " + interaction_label(i) + " needs knowledge representations");
    terms.push_back(g.scale_by(g.matmul_nt(d, q), weights[static_cast<std::size_t>(i)]));
  }
  return terms.size() == 1 ? terms.front() : g.add_n(terms);
}

template <typename T>
Var candidate_scores(Graph<T>& g, Var alphas, std::span<const std::size_t> owner, std::size_t num_candidates) {
  return g.segment_sum(alphas, owner, num_candidates);
}

template <typename T>
Var attention_sum(Graph<T>& g, Var alphas, std::span<const std::size_t> owner, std::size_t num_candidates) {
  return g.softmax_rows(candidate_scores(g, alphas, owner, num_candidates));
}

// ---------------------------------------------------------------------------
// KnReader

namespace {

const char* const kEnsembleNames[4] = {"ensemble.w1", "ensemble.w2", "ensemble.w3", "ensemble.w4"};

template <typename T>
struct StepInputs {
  std::vector<Var> steps;
  std::vector<std::vector<T>> masks;
};

// Embeds position t of every sequence; masks mark rows whose sequence has ended.
template <typename T>
StepInputs<T> embed_padded(Graph<T>& g, Parameter<T>& table, const PaddedSequences& padded, bool dropout,
                           const ForwardOptions<T>& options, T keep_prob) {
  StepInputs<T> in;
  std::vector<WordId> ids(padded.batch);
  for (std::size_t t = 0; t < padded.length; ++t) {
    std::vector<T> mask(padded.batch);
    for (std::size_t b = 0; b < padded.batch; ++b) {
      ids[b] = padded.at(b, t);
      mask[b] = static_cast<T>(padded.mask_at(b, t));
    }
    Var e = g.embedding(table, ids);
    if (dropout && options.training) e = g.dropout(e, keep_prob, true, *options.rng);
    in.steps.push_back(e);
    in.masks.push_back(std::move(mask));
  }
  return in;
}

template <typename T>
autodiff::BiGruResult run_bigru(Graph<T>& g, const StepInputs<T>& in, Var init_f, Var init_b, const BoundGru& f,
                                const BoundGru& b, bool keep_outputs) {
  return autodiff::bigru<T>(g, in.steps, in.masks, init_f, init_b, f, b, keep_outputs);
}

template <typename T>
double dot_rows(const Tensor<T>& a, std::size_t ra, const Tensor<T>& b, std::size_t rb) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) s += static_cast<double>(a(ra, c)) * static_cast<double>(b(rb, c));
  return s;
}

}  // namespace

template <typename T>
KnReader<T>::KnReader(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  Tensor<T> embedding(vocab_size, config_.embed_dim);
  std::uniform_real_distribution<double> uniform(-config_.embedding_init, config_.embedding_init);
  for (auto& v : embedding.values()) v = static_cast<T>(uniform(rng));
  params_.add("embedding", std::move(embedding));
  autodiff::add_gru_params(params_, "context.forward", config_.embed_dim, config_.hidden, rng);
  autodiff::add_gru_params(params_, "context.backward", config_.embed_dim, config_.hidden, rng);
  autodiff::add_gru_params(params_, "facts.forward", config_.embed_dim, config_.hidden, rng);
  autodiff::add_gru_params(params_, "facts.backward", config_.embed_dim, config_.hidden, rng);
  for (const char* name : kEnsembleNames) params_.add(name, Tensor<T>(1, 1, T(1)));
}

template <typename T>
KnReader<T>::KnReader(const ModelConfig& config, ParameterSet<T> params) : config_(config), params_(std::move(params)) {
  config_.validate();
  check_parameters();
}

template <typename T>
void KnReader<T>::check_parameters() const {
  const auto& emb = params_.at("embedding").value;
  if (emb.cols() != config_.embed_dim) throw ConfigError("embedding width differs from the model configuration");
  auto& mutable_params = const_cast<ParameterSet<T>&>(params_);
  for (const char* prefix : {"context.forward", "context.backward", "facts.forward", "facts.backward"}) {
    auto p = autodiff::find_gru_params(mutable_params, prefix);
    if (p.input_width != config_.embed_dim || p.hidden_width != config_.hidden) {
      throw ConfigError(std::string("encoder '") + prefix + "' does not match the configured widths");
    }
  }
  for (const char* name : kEnsembleNames) {
    const auto& w = params_.at(name).value;
    if (w.size() != 1 || !std::isfinite(static_cast<double>(w[0]))) {
      throw ConfigError(std::string("ensemble weight '") + name + "' must be a finite scalar");
    }
  }
}

template <typename T>
void KnReader<T>::set_embeddings(const EmbeddingMatrix& embeddings) {
  auto& table = params_.at("embedding");
  if (embeddings.rows != table.value.rows() || embeddings.width != table.value.cols()) {
    throw ShapeError("embedding matrix " + std::to_string(embeddings.rows) + "x" + std::to_string(embeddings.width) +
                     " does not fit the model table");
  }
  for (std::size_t i = 0; i < embeddings.values.size(); ++i) table.value[i] = static_cast<T>(embeddings.values[i]);
  table.trainable = embeddings.trainable;
}

template <typename T>
ContextEncoding KnReader<T>::encode_context(Graph<T>& g, std::span<const PreparedInstance* const> batch,
                                            const ForwardOptions<T>& options) {
  if (options.training && config_.keep_prob < 1.0 && options.rng == nullptr) {
    throw ConfigError("training forward pass needs a random source for dropout");
  }
  std::vector<const std::vector<WordId>*> docs, questions;
  for (const auto* inst : batch) {
    if (inst->encoded.document_ids.empty() || inst->encoded.question_ids.empty()) {
      throw DomainError("instance " + inst->encoded.instance_id + " has an empty document or question");
    }
    docs.push_back(&inst->encoded.document_ids);
    questions.push_back(&inst->encoded.question_ids);
  }
  auto& table = params_.at("embedding");
  const BoundGru fwd = autodiff::bind(g, autodiff::find_gru_params(params_, "context.forward"));
  const BoundGru bwd = autodiff::bind(g, autodiff::find_gru_params(params_, "context.backward"));
  Var zeros = g.constant(Tensor<T>(batch.size(), config_.hidden));
  const T keep = static_cast<T>(config_.keep_prob);

  ContextEncoding enc;
  const auto doc_in = embed_padded(g, table, pad_sequences(docs), true, options, keep);
  enc.document_steps = run_bigru(g, doc_in, zeros, zeros, fwd, bwd, true).outputs;
  const auto q_in = embed_padded(g, table, pad_sequences(questions), true, options, keep);
  enc.question_steps = run_bigru(g, q_in, zeros, zeros, fwd, bwd, true).outputs;
  return enc;
}

template <typename T>
std::vector<FactMemory> KnReader<T>::encode_facts(Graph<T>& g, std::span<const PreparedInstance* const> batch) {
  std::vector<const std::vector<WordId>*> subjects, objects;
  std::vector<std::vector<WordId>> relations;
  std::vector<FactMemory> memories(batch.size());
  for (const auto* inst : batch) {
    for (const auto& f : inst->facts) {
      if (f.subject_ids.empty() || f.object_ids.empty()) {
        throw EncodingError("instance " + inst->encoded.instance_id + " has a fact with an empty argument");
      }
      subjects.push_back(&f.subject_ids);
      objects.push_back(&f.object_ids);
      relations.push_back({f.relation_id});
    }
  }
  if (subjects.empty()) return memories;

  std::vector<const std::vector<WordId>*> relation_ptrs;
  for (const auto& r : relations) relation_ptrs.push_back(&r);
  auto& table = params_.at("embedding");
  const BoundGru fwd = autodiff::bind(g, autodiff::find_gru_params(params_, "facts.forward"));
  const BoundGru bwd = autodiff::bind(g, autodiff::find_gru_params(params_, "facts.backward"));
  Var zeros = g.constant(Tensor<T>(subjects.size(), config_.hidden));
  const ForwardOptions<T> no_dropout;

  // Each segment starts from the previous segment's final states, direction by direction.
  auto subj = run_bigru(g, embed_padded(g, table, pad_sequences(subjects), false, no_dropout, T(1)), zeros, zeros,
                        fwd, bwd, false);
  auto rel = run_bigru(g, embed_padded(g, table, pad_sequences(relation_ptrs), false, no_dropout, T(1)),
                       subj.final_forward, subj.final_backward, fwd, bwd, false);
  auto obj = run_bigru(g, embed_padded(g, table, pad_sequences(objects), false, no_dropout, T(1)), rel.final_forward,
                       rel.final_backward, fwd, bwd, false);
  Var subject_state = g.concat_cols(subj.final_forward, subj.final_backward);
  Var object_state = g.concat_cols(obj.final_forward, obj.final_backward);
  Var keys = config_.kv == KvStrategy::SubjObj ? subject_state : object_state;

  std::size_t offset = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t n = batch[i]->facts.size();
    if (n > 0) {
      memories[i].keys = g.slice_rows(keys, offset, n);
      memories[i].values = g.slice_rows(object_state, offset, n);
      memories[i].rows = n;
    }
    offset += n;
  }
  return memories;
}

template <typename T>
BatchOutput KnReader<T>::forward(Graph<T>& g, std::span<const PreparedInstance* const> batch,
                                 const ForwardOptions<T>& options) {
  if (batch.empty()) throw DomainError("forward: empty batch");
  const ContextEncoding enc = encode_context(g, batch, options);
  const bool with_memory = config_.builds_memory();
  std::vector<FactMemory> memories = with_memory ? encode_facts(g, batch) : std::vector<FactMemory>(batch.size());
  std::array<Var, 4> weights;
  for (Interaction i : kInteractions) {
    if (config_.interactions.enabled(i)) weights[static_cast<std::size_t>(i)] = g.parameter(params_.at(kEnsembleNames[static_cast<std::size_t>(i)]));
  }
  const T gamma = static_cast<T>(config_.gamma);

  BatchOutput out;
  std::vector<Var> losses;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const EncodedInstance& inst = batch[b]->encoded;
    const std::size_t num_candidates = inst.candidate_occurrences.size();
    if (inst.placeholder_index >= inst.question_ids.size()) {
      throw DomainError("instance " + inst.instance_id + ": placeholder index out of range");
    }
    // Row 0 is the question placeholder, rows 1.. the candidate occurrences.
    std::vector<RowRef> refs{{enc.question_steps[inst.placeholder_index], b}};
    std::vector<std::size_t> owner;
    for (std::size_t c = 0; c < num_candidates; ++c) {
      if (inst.candidate_occurrences[c].empty()) {
        throw EncodingError("instance " + inst.instance_id + ": candidate without occurrences");
      }
      for (std::size_t pos : inst.candidate_occurrences[c]) {
        if (pos >= inst.document_ids.size()) throw DomainError("instance " + inst.instance_id + ": occurrence outside the document");
        refs.push_back({enc.document_steps[pos], b});
        owner.push_back(c);
      }
    }
    const std::size_t k = owner.size();
    Var tokens_ctx = g.gather_rows(refs);
    Var q_ctx = g.slice_rows(tokens_ctx, 0, 1);
    Var d_ctx = g.slice_rows(tokens_ctx, 1, k);
    Var q_kn, d_kn, attention;
    if (with_memory) {
      Var tokens_kn = combine(g, tokens_ctx, query_memory(g, tokens_ctx, memories[b], &attention), gamma);
      q_kn = g.slice_rows(tokens_kn, 0, 1);
      d_kn = g.slice_rows(tokens_kn, 1, k);
    }
    Var alphas = ensemble_attention(g, q_ctx, q_kn, d_ctx, d_kn, weights, config_.interactions);
    Var scores = candidate_scores(g, alphas, owner, num_candidates);
    losses.push_back(autodiff::cross_entropy_from_scores(g, scores, inst.gold_index));

    const auto& sv = g.value(scores);
    std::vector<double> raw(sv.values().begin(), sv.values().end());
    std::vector<double> probs = autodiff::softmax<double>(raw);

    if (options.want_trace) {
      AttentionTrace trace;
      trace.instance_id = inst.instance_id;
      trace.gold_index = inst.gold_index;
      trace.enabled = config_.interactions;
      trace.ensemble_scores = raw;
      trace.probabilities = probs;
      trace.predicted_index = argmax(probs);
      for (std::size_t i = 0; i < 4; ++i) trace.interaction_weights[i] = static_cast<double>(params_.at(kEnsembleNames[i]).value[0]);
      trace.fact_count = memories[b].rows;
      if (attention.valid()) {
        const auto& att = g.value(attention);
        trace.question_fact_attention.assign(att.row(0).begin(), att.row(0).end());
        std::size_t row = 1;
        for (std::size_t c = 0; c < num_candidates; ++c) {
          for (std::size_t pos : inst.candidate_occurrences[c]) {
            trace.candidate_fact_attention.push_back({c, pos, std::vector<double>(att.row(row).begin(), att.row(row).end())});
            ++row;
          }
        }
      }
      const auto& qc = g.value(q_ctx);
      const auto& dc = g.value(d_ctx);
      for (Interaction i : kInteractions) {
        const bool q_enriched = i == Interaction::KnCtx || i == Interaction::KnKn;
        const bool d_enriched = i == Interaction::CtxKn || i == Interaction::KnKn;
        if ((q_enriched || d_enriched) && !with_memory) continue;
        const auto& qv = q_enriched ? g.value(q_kn) : qc;
        const auto& dv = d_enriched ? g.value(d_kn) : dc;
        std::vector<double> sums(num_candidates, 0.0);
        for (std::size_t r = 0; r < k; ++r) sums[owner[r]] += dot_rows(dv, r, qv, 0);
        trace.interaction_sums[static_cast<std::size_t>(i)] = std::move(sums);
      }
      out.traces.push_back(std::move(trace));
    }
    out.probabilities.push_back(std::move(probs));
  }
  out.loss = g.scale(losses.size() == 1 ? losses.front() : g.add_n(losses), T(1) / static_cast<T>(batch.size()));
  return out;
}

template Var question_query<float>(Graph<float>&, Var, std::size_t);
template Var question_query<double>(Graph<double>&, Var, std::size_t);
template Var query_memory<float>(Graph<float>&, Var, const FactMemory&, Var*);
template Var query_memory<double>(Graph<double>&, Var, const FactMemory&, Var*);
template Var combine<float>(Graph<float>&, Var, Var, float);
template Var combine<double>(Graph<double>&, Var, Var, double);
template Var ensemble_attention<float>(Graph<float>&, Var, Var, Var, Var, const std::array<Var, 4>&, const InteractionMask&);
template Var ensemble_attention<double>(Graph<double>&, Var, Var, Var, Var, const std::array<Var, 4>&, const InteractionMask&);
template Var candidate_scores<float>(Graph<float>&, Var, std::span<const std::size_t>, std::size_t);
template Var candidate_scores<double>(Graph<double>&, Var, std::span<const std::size_t>, std::size_t);
template Var attention_sum<float>(Graph<float>&, Var, std::span<const std::size_t>, std::size_t);
template Var attention_sum<double>(Graph<double>&, Var, std::span<const std::size_t>, std::size_t);

template class KnReader<float>;
template class KnReader<double>;

}  // namespace knreader::model
