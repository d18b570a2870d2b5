#include "knreader/training.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "knreader/autodiff/checkpoint.hpp"
#include "knreader/autodiff/optimizer.hpp"
#include "knreader/error.hpp"
#include "knreader/text.hpp"

namespace knreader::training {

void TrainConfig::validate() const {
  if (batch_size == 0 || eval_every == 0) throw ConfigError("batch size and evaluation interval must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (retrieval.total_facts == 0) throw ConfigError("fact budget must be positive");
  model.validate();
}

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.epochs = 60;
  c.batch_size = 64;
  c.eval_every = 1000;
  c.embed_train_steps = 8000;
  c.model = model::ModelConfig::paper();
  return c;
}

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.embed_train_steps = 0;
  c.model = model::ModelConfig::toy();
  return c;
}

namespace {

// FNV-1a, enough to tell cache entries apart.
class Fnv {
 public:
  void add(std::string_view s) {
    for (unsigned char ch : s) {
      hash_ ^= ch;
      hash_ *= 0x100000001b3ULL;
    }
    hash_ ^= 0xff;
    hash_ *= 0x100000001b3ULL;
  }
  std::string hex() const {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << hash_;
    return out.str();
  }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

std::string cache_key(const std::vector<ClozeInstance>& instances, const FactStore& store,
                      const RetrievalConfig& config) {
  Fnv h;
  for (const auto& inst : instances) {
    h.add(inst.instance_id);
    for (const auto& t : inst.document_tokens) h.add(t);
    for (const auto& t : inst.question_tokens) h.add(t);
    for (const auto& t : inst.candidates) h.add(t);
  }
  for (const auto& f : store.facts()) {
    h.add(f.to_string());
    h.add(f.source_tag);
    h.add(std::to_string(f.store_ordinal));
  }
  h.add(std::to_string(config.weights.answer) + "/" + std::to_string(config.weights.question) + "/" +
        std::to_string(config.weights.document));
  return h.hex();
}

void check_vocabulary(const Dataset& data, std::size_t vocab_size) {
  auto fits = [&](WordId id) { return id >= 0 && static_cast<std::size_t>(id) < vocab_size; };
  for (const auto& p : data.prepared) {
    const auto& e = p.encoded;
    const bool ok = std::all_of(e.document_ids.begin(), e.document_ids.end(), fits) &&
                    std::all_of(e.question_ids.begin(), e.question_ids.end(), fits) &&
                    std::all_of(p.facts.begin(), p.facts.end(), [&](const model::EncodedFact& f) {
                      return fits(f.relation_id) && std::all_of(f.subject_ids.begin(), f.subject_ids.end(), fits) &&
                             std::all_of(f.object_ids.begin(), f.object_ids.end(), fits);
                    });
    if (!ok) {
      throw ConfigError("split '" + data.name + "' instance " + e.instance_id +
                        " uses word ids outside the model vocabulary of " + std::to_string(vocab_size));
    }
  }
}

std::vector<const PreparedInstance*> pointers(const Dataset& data, std::span<const std::size_t> order) {
  std::vector<const PreparedInstance*> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(&data.prepared[i]);
  return out;
}

}  // namespace

std::vector<std::vector<RetrievedTriple>> retrieve_split(const std::string& name,
                                                         const std::vector<ClozeInstance>& instances,
                                                         const FactStore& store, const RetrievalConfig& config,
                                                         SourceVariant variant, const std::string& cache_dir) {
  std::filesystem::path cache_file;
  if (!cache_dir.empty()) {
    cache_file = std::filesystem::path(cache_dir) / (name + "-" + std::string(to_string(variant)) + "-P" +
                                                     std::to_string(config.total_facts) + "-" +
                                                     cache_key(instances, store, config) + ".jsonl");
    std::ifstream in(cache_file);
    if (in) {
      auto records = read_retrieved(in);
      if (records.size() == instances.size()) {
        std::vector<std::vector<RetrievedTriple>> out;
        bool aligned = true;
        for (std::size_t i = 0; i < records.size() && aligned; ++i) {
          aligned = records[i].instance_id == instances[i].instance_id;
          out.push_back(std::move(records[i].facts));
        }
        if (aligned) return out;
      }
    }
  }
  std::vector<std::vector<RetrievedTriple>> out;
  out.reserve(instances.size());
  std::ostringstream serialized;
  for (const auto& inst : instances) {
    const RetrievedFacts r = retrieve_facts(inst, store, config);
    if (!cache_file.empty()) write_retrieved(serialized, inst, store, r);
    out.push_back(resolve(r, store));
  }
  if (!cache_file.empty()) {
    std::filesystem::create_directories(cache_file.parent_path());
    // Write to a side file first so concurrent readers never see a partial cache.
    const auto tmp = cache_file.string() + ".tmp" + std::to_string(std::hash<std::string>{}(serialized.str()));
    {
      std::ofstream file(tmp);
      if (!file) throw IoError("cannot write retrieval cache '" + tmp + "'");
      file << serialized.str();
    }
    std::filesystem::rename(tmp, cache_file);
  }
  return out;
}

Dataset prepare_split(const std::string& name, std::vector<ClozeInstance> instances,
                      std::vector<std::vector<RetrievedTriple>> facts, const Vocabulary& vocab, std::uint64_t seed) {
  if (facts.size() != instances.size()) {
    throw ConfigError("split '" + name + "': " + std::to_string(facts.size()) + " fact lists for " +
                      std::to_string(instances.size()) + " instances");
  }
  Dataset data;
  data.name = name;
  Rng rng(seed);
  data.prepared.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    PreparedInstance p;
    p.encoded = encode_instance(instances[i], vocab, rng);
    p.facts = model::encode_fact_ids(facts[i], vocab, p.encoded);
    data.prepared.push_back(std::move(p));
  }
  data.instances = std::move(instances);
  data.facts = std::move(facts);
  return data;
}

std::uint64_t split_seed(std::uint64_t seed, const std::string& split_name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : split_name) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return seed * 1000003ULL + h;
}

PreparedCorpus prepare_corpus(const Corpus& corpus, const TrainConfig& config, const std::string& cache_dir) {
  const FactStore store = select_source(corpus.store, config.variant);
  auto split = [&](const std::string& name, const std::vector<ClozeInstance>& instances) {
    auto facts = retrieve_split(name, instances, store, config.retrieval, config.variant, cache_dir);
    return prepare_split(name, instances, std::move(facts), corpus.vocab, split_seed(config.seed, name));
  };
  return {split("train", corpus.train), split("dev", corpus.dev), split("test", corpus.test)};
}

double accuracy(const std::vector<Prediction>& predictions) {
  if (predictions.empty()) return 0.0;
  const auto correct = std::count_if(predictions.begin(), predictions.end(),
                                     [](const Prediction& p) { return p.predicted == p.gold; });
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

void write_predictions(std::ostream& out, const std::vector<Prediction>& predictions) {
  out << "instance_id\tpredicted\tgold\tprobabilities\n";
  for (const auto& p : predictions) {
    out << p.instance_id << '\t' << p.predicted << '\t' << p.gold << '\t';
    for (std::size_t i = 0; i < p.probabilities.size(); ++i) {
      char buf[64];
      const auto r = std::to_chars(buf, buf + sizeof(buf), p.probabilities[i]);
      out << (i ? "," : "") << std::string_view(buf, static_cast<std::size_t>(r.ptr - buf));
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing predictions");
}

std::vector<Prediction> read_predictions(std::istream& in) {
  std::vector<Prediction> out;
  std::string line;
  std::size_t line_no = 0;
  auto parse_index = [&](const std::string& field) {
    std::size_t v = 0;
    const auto r = std::from_chars(field.data(), field.data() + field.size(), v);
    if (r.ec != std::errc() || r.ptr != field.data() + field.size()) {
      throw FormatError("predictions line " + std::to_string(line_no) + ": bad index '" + field + "'");
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || text::trim(line).empty()) continue;
    const auto fields = text::split(line, '\t');
    if (fields.size() != 4) throw FormatError("predictions line " + std::to_string(line_no) + ": expected 4 fields");
    Prediction p;
    p.instance_id = fields[0];
    p.predicted = parse_index(fields[1]);
    p.gold = parse_index(fields[2]);
    for (const auto& v : text::split(fields[3], ',')) {
      double d = 0.0;
      const auto r = std::from_chars(v.data(), v.data() + v.size(), d);
      if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
        throw FormatError("predictions line " + std::to_string(line_no) + ": bad probability '" + v + "'");
      }
      p.probabilities.push_back(d);
    }
    out.push_back(std::move(p));
  }
  return out;
}

EvalResult evaluate(KnReader<float>& model, const Dataset& data, std::size_t batch_size, bool want_traces) {
  if (batch_size == 0) throw ConfigError("evaluation batch size must be positive");
  EvalResult result;
  model::ForwardOptions<float> options;
  options.want_trace = want_traces;
  for (std::size_t begin = 0; begin < data.prepared.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, data.prepared.size());
    std::vector<const PreparedInstance*> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&data.prepared[i]);
    autodiff::Graph<float> g(false);
    auto out = model.forward(g, batch, options);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      Prediction p;
      p.instance_id = batch[b]->encoded.instance_id;
      p.gold = batch[b]->encoded.gold_index;
      p.probabilities = std::move(out.probabilities[b]);
      p.predicted = model::argmax(p.probabilities);
      result.predictions.push_back(std::move(p));
    }
    for (auto& t : out.traces) result.traces.push_back(std::move(t));
  }
  result.accuracy = accuracy(result.predictions);
  return result;
}

RunResult train(const Dataset& train_set, const Dataset& dev_set, const Dataset* test_set, const TrainConfig& config,
                std::size_t vocab_size, const EmbeddingMatrix* embeddings, const std::string& checkpoint_dir,
                const ProgressFn& progress) {
  config.validate();
  check_vocabulary(train_set, vocab_size);
  check_vocabulary(dev_set, vocab_size);
  if (test_set) check_vocabulary(*test_set, vocab_size);

  KnReader<float> model(config.model, vocab_size, config.seed);
  if (embeddings) model.set_embeddings(*embeddings);
  autodiff::AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  auto optimizer = autodiff::make_optimizer_state(model.params(), adam);
  Rng rng(config.seed ^ 0x5deece66dULL);
  if (!checkpoint_dir.empty()) std::filesystem::create_directories(checkpoint_dir);

  std::vector<std::size_t> lengths;
  for (const auto& p : train_set.prepared) lengths.push_back(p.encoded.document_ids.size());

  RunResult result;
  std::size_t step = 0;
  double loss_sum = 0.0;
  std::size_t loss_batches = 0;
  auto checkpoint = [&]() {
    EvalPoint point;
    point.step = step;
    point.train_loss = loss_batches ? loss_sum / static_cast<double>(loss_batches) : 0.0;
    point.dev_accuracy = evaluate(model, dev_set).accuracy;
    if (!checkpoint_dir.empty()) {
      point.checkpoint = (std::filesystem::path(checkpoint_dir) / ("step_" + std::to_string(step) + ".ckpt")).string();
      autodiff::save_checkpoint(model.params(), point.checkpoint);
    }
    if (result.history.empty() || point.dev_accuracy > result.dev_accuracy) {
      result.selected = result.history.size();
      result.dev_accuracy = point.dev_accuracy;
      result.best_params = model.params();
    }
    result.history.push_back(point);
    loss_sum = 0.0;
    loss_batches = 0;
    if (progress) progress(point);
  };

  checkpoint();
  model::ForwardOptions<float> options;
  options.training = true;
  options.rng = &rng;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& batch_ids : batch_instances(lengths, config.batch_size, rng)) {
      if (step >= config.embed_train_steps) model.set_embeddings_trainable(false);
      const auto batch = pointers(train_set, batch_ids);
      autodiff::Graph<float> g;
      const auto out = model.forward(g, batch, options);
      g.backward(out.loss);
      loss_sum += static_cast<double>(g.value(out.loss)[0]);
      ++loss_batches;
      autodiff::clip_then_adam_step(model.params(), optimizer);
      model.params().zero_grad();
      ++step;
      if (step % config.eval_every == 0) checkpoint();
    }
  }
  if (result.history.back().step != step) checkpoint();
  result.final_params = model.params();

  if (!checkpoint_dir.empty()) {
    autodiff::save_checkpoint(result.best_params, (std::filesystem::path(checkpoint_dir) / "best.ckpt").string());
  }
  if (test_set) {
    KnReader<float> best(config.model, result.best_params);
    auto eval = evaluate(best, *test_set);
    result.test_accuracy = eval.accuracy;
    result.test_predictions = std::move(eval.predictions);
  }
  return result;
}

std::vector<Prediction> majority_vote(const std::vector<std::vector<Prediction>>& sets) {
  if (sets.empty()) throw ConfigError("majority vote needs at least one prediction set");
  const auto& first = sets.front();
  for (const auto& s : sets) {
    if (s.size() != first.size()) throw ConfigError("prediction sets cover different numbers of instances");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i].instance_id != first[i].instance_id || s[i].probabilities.size() != first[i].probabilities.size()) {
        throw ConfigError("prediction sets disagree at position " + std::to_string(i) + " (" + first[i].instance_id +
                          " vs " + s[i].instance_id + ")");
      }
    }
  }
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < first.size(); ++i) {
    const std::size_t n = first[i].probabilities.size();
    std::vector<std::size_t> votes(n, 0);
    std::vector<double> mean(n, 0.0);
    for (const auto& s : sets) {
      if (s[i].predicted >= n) throw ConfigError("prediction outside the candidate list for " + s[i].instance_id);
      ++votes[s[i].predicted];
      for (std::size_t c = 0; c < n; ++c) mean[c] += s[i].probabilities[c] / static_cast<double>(sets.size());
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < n; ++c) {
      if (votes[c] > votes[best] || (votes[c] == votes[best] && mean[c] > mean[best])) best = c;
    }
    out.push_back({first[i].instance_id, best, first[i].gold, std::move(mean)});
  }
  return out;
}

std::vector<ReversedCounts> reversed_prediction_stats(const std::vector<model::AttentionTrace>& traces) {
  using model::Interaction;
  auto weighted_argmax = [](const model::AttentionTrace& t, Interaction i) {
    const auto k = static_cast<std::size_t>(i);
    std::vector<double> s = t.interaction_sums[k];
    for (double& v : s) v *= t.interaction_weights[k];
    return model::argmax(s);
  };
  std::vector<ReversedCounts> out;
  const Interaction components[] = {Interaction::CtxKn, Interaction::KnCtx, Interaction::KnKn};
  for (Interaction i : components) {
    ReversedCounts counts{model::interaction_label(i)};
    bool present = !traces.empty();
    for (const auto& t : traces) {
      if (t.interaction_sums[static_cast<std::size_t>(i)].empty() || t.interaction_sums[0].empty()) {
        present = false;
        break;
      }
      const bool base = weighted_argmax(t, Interaction::CtxCtx) == t.gold_index;
      const bool comp = weighted_argmax(t, i) == t.gold_index;
      counts.wrong_to_correct += !base && comp;
      counts.correct_to_wrong += base && !comp;
    }
    if (present) out.push_back(counts);
  }
  ReversedCounts ensemble{"ensemble"};
  bool present = !traces.empty();
  for (const auto& t : traces) {
    if (t.interaction_sums[0].empty()) {
      present = false;
      break;
    }
    const bool base = weighted_argmax(t, Interaction::CtxCtx) == t.gold_index;
    const bool comp = model::argmax(t.ensemble_scores) == t.gold_index;
    ensemble.wrong_to_correct += !base && comp;
    ensemble.correct_to_wrong += base && !comp;
  }
  if (present) out.push_back(ensemble);
  return out;
}

std::vector<TableRow> ablation_sweep(const Corpus& corpus, const TrainConfig& base,
                                     const std::vector<model::InteractionMask>& masks, const std::string& cache_dir) {
  const PreparedCorpus data = prepare_corpus(corpus, base, cache_dir);
  std::vector<TableRow> rows;
  for (const auto& mask : masks) {
    TrainConfig config = base;
    config.model.interactions = mask;
    const RunResult run = train(data.train, data.dev, &data.test, config, corpus.vocab.size());
    rows.push_back({mask.table_label(), run.dev_accuracy, run.test_accuracy.value_or(0.0)});
  }
  return rows;
}

void write_table(std::ostream& out, const std::string& heading, const std::vector<TableRow>& rows) {
  out << heading << "\tdev\ttest\n";
  for (const auto& r : rows) {
    out << r.label << '\t' << std::fixed << std::setprecision(4) << r.dev_accuracy << '\t' << r.test_accuracy << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

}  // namespace knreader::training
