#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "knreader/cbt_data.hpp"
#include "knreader/knowledge_store.hpp"
#include "knreader/model.hpp"
#include "knreader/retrieval.hpp"

namespace knreader::training {

using model::KnReader;
using model::PreparedInstance;

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::size_t eval_every = 100;         // steps
  std::size_t embed_train_steps = 8000;  // embeddings are frozen after this many steps
  std::uint64_t seed = 1;
  double learning_rate = 0.001;
  // Training is single-threaded, so runs are reproducible either way; the flag
  // is kept so manifests state the intent.
  bool deterministic = true;
  SourceVariant variant = SourceVariant::CN5All;
  RetrievalConfig retrieval;
  model::ModelConfig model;

  // Throws ConfigError unless every count is positive and the model config is valid.
  void validate() const;

  static TrainConfig paper();
  // Desk scale: h = E = 32, batch 16, ObjObj memory, embeddings initialized in
  // [-1, 1] and frozen from the start in place of pretrained vectors.
  static TrainConfig toy();
};

// A split ready for the model: retrieval done, ids assigned.
struct Dataset {
  std::string name;
  std::vector<ClozeInstance> instances;
  std::vector<std::vector<RetrievedTriple>> facts;  // aligned with instances
  std::vector<PreparedInstance> prepared;
};

// Retrieves facts for every instance. With a non-empty cache directory the
// result is read from / written to "<dir>/<name>-<variant>-P<n>-<key>.jsonl",
// where key hashes the instance ids and the store contents.
std::vector<std::vector<RetrievedTriple>> retrieve_split(const std::string& name,
                                                         const std::vector<ClozeInstance>& instances,
                                                         const FactStore& store, const RetrievalConfig& config,
                                                         SourceVariant variant, const std::string& cache_dir = {});

// Seed for the unknown-word draws of a named split, so a split encodes the same
// way in training and in later evaluation runs.
std::uint64_t split_seed(std::uint64_t seed, const std::string& split_name);

// Encodes instances and their facts; unknown-word slots come from `seed`.
Dataset prepare_split(const std::string& name, std::vector<ClozeInstance> instances,
                      std::vector<std::vector<RetrievedTriple>> facts, const Vocabulary& vocab, std::uint64_t seed);

// Raw material shared by a family of runs.
struct Corpus {
  std::vector<ClozeInstance> train;
  std::vector<ClozeInstance> dev;
  std::vector<ClozeInstance> test;
  FactStore store;
  Vocabulary vocab;
};

struct PreparedCorpus {
  Dataset train;
  Dataset dev;
  Dataset test;
};

// Source selection, retrieval and encoding according to config.variant and config.retrieval.
PreparedCorpus prepare_corpus(const Corpus& corpus, const TrainConfig& config, const std::string& cache_dir = {});

struct Prediction {
  std::string instance_id;
  std::size_t predicted = 0;
  std::size_t gold = 0;
  std::vector<double> probabilities;
  bool operator==(const Prediction&) const = default;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<Prediction> predictions;
  std::vector<model::AttentionTrace> traces;  // filled when requested
};

// Evaluation mode (no dropout). The predicted candidate is the argmax of the
// probabilities, lowest index on ties. An empty dataset has accuracy 0.
EvalResult evaluate(KnReader<float>& model, const Dataset& data, std::size_t batch_size = 32,
                    bool want_traces = false);

// Fraction of predictions equal to gold; 0 for an empty list.
double accuracy(const std::vector<Prediction>& predictions);

// "instance_id\tpredicted\tgold\tprobabilities" with comma-separated
// probabilities in shortest round-trip form, after a header line.
void write_predictions(std::ostream& out, const std::vector<Prediction>& predictions);
std::vector<Prediction> read_predictions(std::istream& in);

struct EvalPoint {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean batch loss since the previous point; 0 at step 0
  double dev_accuracy = 0.0;
  std::string checkpoint;  // empty when checkpoints are not written
};

struct RunResult {
  std::vector<EvalPoint> history;
  std::size_t selected = 0;  // index into history: max dev accuracy, earliest on ties
  double dev_accuracy = 0.0;
  std::optional<double> test_accuracy;
  std::vector<Prediction> test_predictions;
  autodiff::ParameterSet<float> best_params;
  autodiff::ParameterSet<float> final_params;
};

using ProgressFn = std::function<void(const EvalPoint&)>;

// Length-sorted batches in shuffled order, Adam with element-wise clipping,
// dev evaluation at step 0, every eval_every steps and after the last step.
// Writes step_<n>.ckpt files and best.ckpt when checkpoint_dir is non-empty.
// Throws ConfigError when a split does not fit the model vocabulary.
RunResult train(const Dataset& train_set, const Dataset& dev_set, const Dataset* test_set, const TrainConfig& config,
                std::size_t vocab_size, const EmbeddingMatrix* embeddings = nullptr,
                const std::string& checkpoint_dir = {}, const ProgressFn& progress = {});

// Per instance the most voted candidate; ties go to the highest mean
// probability, then the lowest index. Throws ConfigError when the sets do not
// cover the same instances in the same order.
std::vector<Prediction> majority_vote(const std::vector<std::vector<Prediction>>& prediction_sets);

struct ReversedCounts {
  std::string component;
  std::size_t wrong_to_correct = 0;
  std::size_t correct_to_wrong = 0;
};

// For ck, kc, kk and the ensemble: argmax of that component's weighted scores
// against the argmax of the weighted ctx-only scores, read from traces.
// Components whose scores are absent from the traces are skipped.
std::vector<ReversedCounts> reversed_prediction_stats(const std::vector<model::AttentionTrace>& traces);

struct TableRow {
  std::string label;
  double dev_accuracy = 0.0;
  double test_accuracy = 0.0;
};

// One train + evaluate per mask; rows carry the ablation table labels.
std::vector<TableRow> ablation_sweep(const Corpus& corpus, const TrainConfig& base,
                                     const std::vector<model::InteractionMask>& masks,
                                     const std::string& cache_dir = {});

// Tab-separated "configuration\tdev\ttest" with a header line.
void write_table(std::ostream& out, const std::string& heading, const std::vector<TableRow>& rows);

}  // namespace knreader::training
