#include "knreader/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "knreader/autodiff/checkpoint.hpp"
#include "knreader/config.hpp"
#include "knreader/error.hpp"
#include "knreader/gradcheck.hpp"
#include "knreader/synthetic.hpp"
#include "knreader/trace.hpp"
#include "knreader/training.hpp"

namespace knreader::cli {
namespace {

namespace fs = std::filesystem;
using config::Json;
using config::RunManifest;

// Invalid flag values detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string cache_dir() {
  const char* dir = std::getenv("KNREADER_CACHE_DIR");
  return dir ? dir : "";
}

std::string with_suffix(const std::string& path, const std::string& suffix) { return path + suffix; }

void write_text(const std::string& path, const std::string& content) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << v;
  return out.str();
}

// Model and run knobs shared by the training-style subcommands.
struct Knobs {
  std::string config_name = "toy";
  std::size_t facts = 0, hidden = 0, embed_dim = 0, batch = 0, epochs = 0, eval_every = 0, embed_train_steps = 0;
  std::uint64_t seed = 0;
  double lr = 0.0;
  std::string variant, kv, interactions;
  bool deterministic = false;
  std::map<std::string, CLI::Option*> opts;

  void add_retrieval(CLI::App* app) {
    opts["config"] = app->add_option("--config", config_name, "Preset (toy, paper), config JSON or run manifest");
    opts["facts"] = app->add_option("--facts", facts, "Facts per instance")->check(CLI::IsMember({50, 100, 200, 500}));
    opts["variant"] = app->add_option("--variant", variant, "Knowledge source variant")
                          ->check(CLI::IsMember({"cn5all", "cn5wn3", "cn5sel"}, CLI::ignore_case));
  }

  void add(CLI::App* app) {
    add_retrieval(app);
    opts["kv"] = app->add_option("--kv", kv, "Key-value strategy")
                     ->check(CLI::IsMember({"subjobj", "objobj"}, CLI::ignore_case));
    opts["interactions"] = app->add_option("--interactions", interactions, "Interaction mask, e.g. cc,kc or all");
    opts["hidden"] = app->add_option("--hidden", hidden, "Encoder hidden width")->check(CLI::PositiveNumber);
    opts["embed_dim"] = app->add_option("--embed-dim", embed_dim, "Embedding width")->check(CLI::PositiveNumber);
    opts["batch"] = app->add_option("--batch", batch, "Batch size")->check(CLI::PositiveNumber);
    opts["lr"] = app->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
    opts["epochs"] = app->add_option("--epochs", epochs, "Training epochs")->check(CLI::NonNegativeNumber);
    opts["eval_every"] = app->add_option("--eval-every", eval_every, "Dev evaluation interval in steps")
                             ->check(CLI::PositiveNumber);
    opts["embed_train_steps"] =
        app->add_option("--embed-train-steps", embed_train_steps, "Steps before embeddings are frozen");
    opts["seed"] = app->add_option("--seed", seed, "Random seed");
    opts["deterministic"] = app->add_flag("--deterministic", deterministic, "Reproducible run (recorded in manifest)");
  }

  bool given(const char* name) const {
    const auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }

  // Defaults < config file < flags.
  training::TrainConfig resolve() const {
    try {
      training::TrainConfig c = config::resolve(config_name);
      if (given("facts")) c.retrieval.total_facts = facts;
      if (given("variant")) c.variant = parse_source_variant(variant);
      if (given("kv")) c.model.kv = model::parse_kv_strategy(kv);
      if (given("interactions")) c.model.interactions = model::InteractionMask::parse(interactions);
      if (given("hidden")) c.model.hidden = hidden;
      if (given("embed_dim")) c.model.embed_dim = embed_dim;
      if (given("batch")) c.batch_size = batch;
      if (given("lr")) c.learning_rate = lr;
      if (given("epochs")) c.epochs = epochs;
      if (given("eval_every")) c.eval_every = eval_every;
      if (given("embed_train_steps")) c.embed_train_steps = embed_train_steps;
      if (given("seed")) c.seed = seed;
      if (given("deterministic")) c.deterministic = true;
      c.validate();
      return c;
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }
};

struct DataInputs {
  std::string train, dev, test, kb, embeddings;
  std::string placeholder = "XXXXX";
  std::size_t min_count = 5;

  void add(CLI::App* app) {
    app->add_option("--train", train, "Training split (CBT format)")->required()->check(CLI::ExistingFile);
    app->add_option("--dev", dev, "Validation split")->required()->check(CLI::ExistingFile);
    app->add_option("--test", test, "Test split")->check(CLI::ExistingFile);
    app->add_option("--kb", kb, "Knowledge triples")->required()->check(CLI::ExistingFile);
    app->add_option("--embeddings", embeddings, "Pretrained vectors, one 'word v1 .. vE' per line")
        ->check(CLI::ExistingFile);
    app->add_option("--placeholder", placeholder, "Question placeholder token");
    app->add_option("--min-count", min_count, "Minimum training frequency for vocabulary words");
  }

  std::map<std::string, std::string> as_inputs() const {
    std::map<std::string, std::string> m{{"train", train}, {"dev", dev}, {"kb", kb}, {"placeholder", placeholder},
                                         {"min_count", std::to_string(min_count)}};
    if (!test.empty()) m["test"] = test;
    if (!embeddings.empty()) m["embeddings"] = embeddings;
    return m;
  }
};

ParseOptions parse_options(const std::string& placeholder, const std::string& split) {
  ParseOptions o;
  o.placeholder = placeholder;
  o.id_prefix = split;
  return o;
}

training::Corpus load_corpus(const DataInputs& in) {
  training::Corpus c{parse_cbt_file(in.train, parse_options(in.placeholder, "train")),
                     parse_cbt_file(in.dev, parse_options(in.placeholder, "dev")),
                     in.test.empty() ? std::vector<ClozeInstance>{}
                                     : parse_cbt_file(in.test, parse_options(in.placeholder, "test")),
                     load_triples(in.kb), Vocabulary{}};
  c.vocab = build_vocabulary(c.train, &c.store, in.min_count);
  return c;
}

// A finished training run directory: manifest.json, vocab.tsv, best.ckpt.
struct TrainedRun {
  training::TrainConfig config;
  Vocabulary vocab;
  FactStore store;
  std::string placeholder;
  autodiff::ParameterSet<float> params;
};

TrainedRun load_run(const std::string& run_dir, const std::string& checkpoint) {
  const RunManifest manifest = RunManifest::read((fs::path(run_dir) / "manifest.json").string());
  if (manifest.subcommand != "train") throw FormatError(run_dir + " does not hold a training run");
  TrainedRun run;
  run.config = config::overlay(training::TrainConfig::toy(), manifest.config);
  run.vocab = Vocabulary::load((fs::path(run_dir) / "vocab.tsv").string());
  const auto kb = manifest.inputs.find("kb");
  if (kb == manifest.inputs.end()) throw FormatError("training manifest lacks the knowledge base path");
  run.store = load_triples(kb->second);
  const auto ph = manifest.inputs.find("placeholder");
  run.placeholder = ph == manifest.inputs.end() ? "XXXXX" : ph->second;
  run.params = autodiff::load_checkpoint<float>(checkpoint.empty() ? (fs::path(run_dir) / "best.ckpt").string()
                                                                   : checkpoint);
  return run;
}

training::Dataset load_split(const TrainedRun& run, const std::string& path, const std::string& split) {
  auto instances = parse_cbt_file(path, parse_options(run.placeholder, split));
  const FactStore store = select_source(run.store, run.config.variant);
  auto facts = training::retrieve_split(split, instances, store, run.config.retrieval, run.config.variant, cache_dir());
  return training::prepare_split(split, std::move(instances), std::move(facts), run.vocab,
                                 training::split_seed(run.config.seed, split));
}

void write_manifest(const std::string& path, const std::string& subcommand, const Json& cfg,
                    std::map<std::string, std::string> inputs, std::map<std::string, std::string> outputs,
                    std::uint64_t seed, Json results = Json::object()) {
  RunManifest m;
  m.subcommand = subcommand;
  m.config = cfg;
  m.inputs = std::move(inputs);
  m.outputs = std::move(outputs);
  m.seed = seed;
  m.results = std::move(results);
  m.write(path);
}

std::string table_string(const std::string& heading, const std::vector<training::TableRow>& rows) {
  std::ostringstream s;
  training::write_table(s, heading, rows);
  return s.str();
}

std::string predictions_string(const std::vector<training::Prediction>& p) {
  std::ostringstream s;
  training::write_predictions(s, p);
  return s.str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-augmented cloze reader: retrieval, training, evaluation and traces", "knreader"};
  app.require_subcommand(1, 1);

  std::string stage = "parsing arguments";

  // ingest-kb
  auto* ingest = app.add_subcommand("ingest-kb", "Normalize a triple file and select a source variant");
  std::string ingest_in, ingest_out, ingest_variant = "cn5all";
  ingest->add_option("--input", ingest_in, "Triples (TSV or JSON lines)")->required()->check(CLI::ExistingFile);
  ingest->add_option("--output", ingest_out, "Normalized TSV")->required();
  ingest->add_option("--variant", ingest_variant, "Source variant")
      ->check(CLI::IsMember({"cn5all", "cn5wn3", "cn5sel"}, CLI::ignore_case));

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "Retrieve facts for every instance of a split");
  Knobs retrieve_knobs;
  retrieve_knobs.add_retrieval(retrieve);
  std::string retrieve_data, retrieve_kb, retrieve_output, retrieve_placeholder = "XXXXX", retrieve_split = "data";
  retrieve->add_option("--data", retrieve_data, "Split (CBT format)")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--kb", retrieve_kb, "Knowledge triples")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--output", retrieve_output, "Retrieved facts, one JSON line per instance")->required();
  retrieve->add_option("--placeholder", retrieve_placeholder, "Question placeholder token");
  retrieve->add_option("--split", retrieve_split, "Split name used for instance ids");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model with dev-based checkpoint selection");
  Knobs train_knobs;
  train_knobs.add(train_cmd);
  DataInputs train_data;
  train_data.add(train_cmd);
  std::string train_out;
  train_cmd->add_option("--out-dir", train_out, "Run directory")->required();

  // eval / trace / stats share the run-directory inputs
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained run on a split");
  auto* trace_cmd = app.add_subcommand("trace", "Export attention traces of a trained run");
  auto* stats_cmd = app.add_subcommand("stats", "Reversed-prediction counts per knowledge component");
  std::string run_dir, run_data, run_split = "test", run_checkpoint, run_output, trace_instance;
  for (auto* cmd : {eval_cmd, trace_cmd, stats_cmd}) {
    cmd->add_option("--run-dir", run_dir, "Directory written by train")->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--data", run_data, "Split (CBT format)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--split", run_split, "Split name (also seeds unknown-word slots)");
    cmd->add_option("--checkpoint", run_checkpoint, "Checkpoint instead of best.ckpt")->check(CLI::ExistingFile);
  }
  eval_cmd->add_option("--predictions", run_output, "Write per-instance predictions here");
  trace_cmd->add_option("--output", run_output, "Trace records, one JSON line per instance")->required();
  trace_cmd->add_option("--instance", trace_instance, "Only this instance");
  stats_cmd->add_option("--output", run_output, "Write the counts table here");

  // render
  auto* render_cmd = app.add_subcommand("render", "Render one trace as SVG heatmap and TSV matrix");
  std::string render_traces, render_instance, render_prefix;
  std::size_t render_top = 5;
  render_cmd->add_option("--traces", render_traces, "Trace file")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--instance", render_instance, "Instance id")->required();
  render_cmd->add_option("--out-prefix", render_prefix, "Writes <prefix>.svg and <prefix>.tsv")->required();
  render_cmd->add_option("--top", render_top, "Candidates shown")->check(CLI::PositiveNumber);

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Train one model per configuration row and tabulate accuracies");
  Knobs ablate_knobs;
  ablate_knobs.add(ablate_cmd);
  DataInputs ablate_data;
  ablate_data.add(ablate_cmd);
  std::string ablate_out, ablate_sweep = "interactions";
  ablate_cmd->add_option("--out-dir", ablate_out, "Directory for table files")->required();
  ablate_cmd->add_option("--sweep", ablate_sweep, "interactions, facts, variants, kv or all")
      ->check(CLI::IsMember({"interactions", "facts", "variants", "kv", "all"}));

  // ensemble
  auto* ensemble_cmd = app.add_subcommand("ensemble", "Majority vote over prediction files");
  std::vector<std::string> ensemble_inputs;
  std::string ensemble_output;
  ensemble_cmd->add_option("--predictions", ensemble_inputs, "Prediction files from eval")
      ->required()
      ->check(CLI::ExistingFile);
  ensemble_cmd->add_option("--output", ensemble_output, "Voted predictions");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every parameter group");
  Knobs grad_knobs;
  grad_knobs.opts["config"] = grad_cmd->add_option("--config", grad_knobs.config_name, "Preset or config file");
  grad_knobs.opts["kv"] = grad_cmd->add_option("--kv", grad_knobs.kv, "Key-value strategy")
                              ->check(CLI::IsMember({"subjobj", "objobj"}, CLI::ignore_case));
  grad_knobs.opts["interactions"] = grad_cmd->add_option("--interactions", grad_knobs.interactions, "Interaction mask");
  grad_knobs.opts["seed"] = grad_cmd->add_option("--seed", grad_knobs.seed, "Parameter init seed");
  double grad_eps = 1e-5, grad_tol = 1e-4;
  grad_cmd->add_option("--epsilon", grad_eps, "Finite-difference step")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--tolerance", grad_tol, "Maximum relative error")->check(CLI::PositiveNumber);

  // synth-data
  auto* synth_cmd = app.add_subcommand("synth-data", "Write the planted-fact synthetic corpus");
  SyntheticConfig synth;
  std::string synth_out;
  synth_cmd->add_option("--out-dir", synth_out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--train-size", synth.train, "Training instances");
  synth_cmd->add_option("--dev-size", synth.dev, "Validation instances");
  synth_cmd->add_option("--test-size", synth.test, "Test instances");

  if (args.empty()) {
    err << app.help();
    return kExitUsage;
  }
  if (!args.front().starts_with("-") && app.get_subcommand_no_throw(args.front()) == nullptr) {
    err << "knreader: unknown subcommand '" << args.front() << "'\n" << "Run with --help for usage.\n";
    return kExitUsage;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "knreader: " << e.what() << "\n" << "Run with --help for usage.\n";
    return kExitUsage;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    if (sub == "ingest-kb") {
      stage = "reading triples";
      const FactStore store = load_triples(ingest_in);
      const FactStore selected = select_source(store, parse_source_variant(ingest_variant));
      stage = "writing triples";
      std::ostringstream s;
      write_triples(selected, s);
      write_text(ingest_out, s.str());
      out << store.size() << " facts read, " << selected.size() << " kept (" << ingest_variant << ")\n";
      write_manifest(with_suffix(ingest_out, ".manifest.json"), sub, Json{{"variant", ingest_variant}},
                     {{"input", ingest_in}}, {{"triples", ingest_out}}, 0,
                     Json{{"facts_read", store.size()}, {"facts_kept", selected.size()}});
    } else if (sub == "retrieve") {
      stage = "resolving configuration";
      const auto cfg = retrieve_knobs.resolve();
      stage = "reading data";
      const auto instances = parse_cbt_file(retrieve_data, parse_options(retrieve_placeholder, retrieve_split));
      const FactStore store = select_source(load_triples(retrieve_kb), cfg.variant);
      stage = "retrieval";
      std::ostringstream s;
      std::size_t total = 0;
      for (const auto& inst : instances) {
        const auto r = retrieve_facts(inst, store, cfg.retrieval);
        total += r.facts.size();
        write_retrieved(s, inst, store, r);
      }
      write_text(retrieve_output, s.str());
      out << instances.size() << " instances, " << total << " facts retrieved\n";
      write_manifest(with_suffix(retrieve_output, ".manifest.json"), sub,
                     Json{{"facts", cfg.retrieval.total_facts}, {"variant", std::string(to_string(cfg.variant))}},
                     {{"data", retrieve_data}, {"kb", retrieve_kb}, {"placeholder", retrieve_placeholder}},
                     {{"retrieved", retrieve_output}}, 0, Json{{"instances", instances.size()}, {"facts", total}});
    } else if (sub == "train") {
      stage = "resolving configuration";
      const auto cfg = train_knobs.resolve();
      stage = "reading data";
      const auto corpus = load_corpus(train_data);
      stage = "retrieval";
      const auto data = training::prepare_corpus(corpus, cfg, cache_dir());
      std::optional<EmbeddingMatrix> embeddings;
      if (!train_data.embeddings.empty()) {
        stage = "reading embeddings";
        Rng rng(cfg.seed);
        embeddings = load_embeddings(train_data.embeddings, corpus.vocab, rng, cfg.model.embed_dim);
      }
      stage = "training";
      fs::create_directories(train_out);
      corpus.vocab.save((fs::path(train_out) / "vocab.tsv").string());
      out << "step\ttrain_loss\tdev_accuracy\n";
      const auto result = training::train(
          data.train, data.dev, corpus.test.empty() ? nullptr : &data.test, cfg, corpus.vocab.size(),
          embeddings ? &*embeddings : nullptr, train_out, [&](const training::EvalPoint& p) {
            out << p.step << '\t' << fmt(p.train_loss) << '\t' << fmt(p.dev_accuracy) << '\n';
          });
      stage = "writing results";
      std::ostringstream history;
      history << "step\ttrain_loss\tdev_accuracy\tcheckpoint\n";
      Json dev_curve = Json::array();
      for (const auto& p : result.history) {
        history << p.step << '\t' << fmt(p.train_loss) << '\t' << fmt(p.dev_accuracy) << '\t'
                << fs::path(p.checkpoint).filename().string() << '\n';
        dev_curve.push_back({{"step", p.step}, {"dev_accuracy", p.dev_accuracy}});
      }
      write_text((fs::path(train_out) / "history.tsv").string(), history.str());
      std::map<std::string, std::string> outputs{{"vocab", "vocab.tsv"},
                                                 {"history", "history.tsv"},
                                                 {"best_checkpoint", "best.ckpt"}};
      Json results{{"dev_accuracy", result.dev_accuracy},
                   {"selected_step", result.history[result.selected].step},
                   {"dev_curve", dev_curve}};
      if (result.test_accuracy) {
        write_text((fs::path(train_out) / "test_predictions.tsv").string(),
                   predictions_string(result.test_predictions));
        outputs["test_predictions"] = "test_predictions.tsv";
        results["test_accuracy"] = *result.test_accuracy;
      }
      write_manifest((fs::path(train_out) / "manifest.json").string(), sub, config::to_json(cfg),
                     train_data.as_inputs(), outputs, cfg.seed, results);
      out << "selected step " << result.history[result.selected].step << ", dev " << fmt(result.dev_accuracy);
      if (result.test_accuracy) out << ", test " << fmt(*result.test_accuracy);
      out << '\n';
    } else if (sub == "eval" || sub == "trace" || sub == "stats") {
      stage = "loading run";
      TrainedRun run = load_run(run_dir, run_checkpoint);
      model::KnReader<float> reader(run.config.model, run.params);
      stage = "reading data";
      const auto data = load_split(run, run_data, run_split);
      stage = "evaluation";
      const auto eval = training::evaluate(reader, data, 32, sub != "eval");
      const std::map<std::string, std::string> inputs{
          {"run_dir", run_dir}, {"data", run_data}, {"split", run_split}, {"checkpoint", run_checkpoint}};
      const Json cfg = config::to_json(run.config);
      out << "accuracy " << fmt(eval.accuracy) << " on " << eval.predictions.size() << " instances\n";
      if (sub == "eval" && !run_output.empty()) {
        write_text(run_output, predictions_string(eval.predictions));
        write_manifest(with_suffix(run_output, ".manifest.json"), sub, cfg, inputs, {{"predictions", run_output}},
                       run.config.seed, Json{{"accuracy", eval.accuracy}});
      } else if (sub == "trace") {
        stage = "writing traces";
        std::vector<Json> records;
        for (std::size_t i = 0; i < eval.traces.size(); ++i) {
          if (!trace_instance.empty() && eval.traces[i].instance_id != trace_instance) continue;
          records.push_back(trace::to_json(eval.traces[i], data.instances[i], data.facts[i]));
        }
        if (!trace_instance.empty() && records.empty()) {
          throw DomainError("no instance '" + trace_instance + "' in " + run_data);
        }
        std::ostringstream s;
        trace::write_records(s, records);
        write_text(run_output, s.str());
        write_manifest(with_suffix(run_output, ".manifest.json"), sub, cfg, inputs, {{"traces", run_output}},
                       run.config.seed, Json{{"records", records.size()}});
        out << records.size() << " trace records written\n";
      } else if (sub == "stats") {
        std::ostringstream s;
        s << "component\twrong_to_correct\tcorrect_to_wrong\n";
        Json results = Json::array();
        for (const auto& c : training::reversed_prediction_stats(eval.traces)) {
          s << c.component << '\t' << c.wrong_to_correct << '\t' << c.correct_to_wrong << '\n';
          results.push_back({{"component", c.component},
                             {"wrong_to_correct", c.wrong_to_correct},
                             {"correct_to_wrong", c.correct_to_wrong}});
        }
        out << s.str();
        if (!run_output.empty()) {
          write_text(run_output, s.str());
          write_manifest(with_suffix(run_output, ".manifest.json"), sub, cfg, inputs, {{"stats", run_output}},
                         run.config.seed, Json{{"components", results}});
        }
      }
    } else if (sub == "render") {
      stage = "reading traces";
      std::ifstream in(render_traces);
      if (!in) throw IoError("cannot open '" + render_traces + "'");
      const auto records = trace::read_records(in);
      stage = "rendering";
      const Json& record = trace::find_record(records, render_instance);
      write_text(render_prefix + ".tsv", trace::heatmap_tsv(trace::heatmap(record, render_top)));
      write_text(render_prefix + ".svg", trace::render_svg(record, render_top));
      write_manifest(render_prefix + ".manifest.json", sub, Json{{"top", render_top}},
                     {{"traces", render_traces}, {"instance", render_instance}},
                     {{"svg", render_prefix + ".svg"}, {"matrix", render_prefix + ".tsv"}}, 0);
      out << "wrote " << render_prefix << ".svg and " << render_prefix << ".tsv\n";
    } else if (sub == "ablate") {
      stage = "resolving configuration";
      const auto cfg = ablate_knobs.resolve();
      stage = "reading data";
      const auto corpus = load_corpus(ablate_data);
      fs::create_directories(ablate_out);
      std::map<std::string, std::string> outputs;
      Json results = Json::object();
      auto emit = [&](const std::string& name, const std::string& heading,
                      const std::vector<training::TableRow>& rows) {
        const std::string table = table_string(heading, rows);
        write_text((fs::path(ablate_out) / ("table_" + name + ".tsv")).string(), table);
        outputs[name] = "table_" + name + ".tsv";
        Json j = Json::array();
        for (const auto& r : rows) j.push_back({{"label", r.label}, {"dev", r.dev_accuracy}, {"test", r.test_accuracy}});
        results[name] = j;
        out << table << '\n';
      };
      auto run_row = [&](const training::TrainConfig& c, const std::string& label) {
        const auto data = training::prepare_corpus(corpus, c, cache_dir());
        const auto r = training::train(data.train, data.dev, corpus.test.empty() ? nullptr : &data.test, c,
                                       corpus.vocab.size());
        return training::TableRow{label, r.dev_accuracy, r.test_accuracy.value_or(0.0)};
      };
      const bool all = ablate_sweep == "all";
      if (all || ablate_sweep == "interactions") {
        stage = "interaction sweep";
        emit("interactions", "interactions",
             training::ablation_sweep(corpus, cfg, model::InteractionMask::ablation_rows(), cache_dir()));
      }
      if (all || ablate_sweep == "facts") {
        stage = "fact budget sweep";
        std::vector<training::TableRow> rows;
        for (std::size_t p : {50, 100, 200, 500}) {
          auto c = cfg;
          c.retrieval.total_facts = p;
          rows.push_back(run_row(c, std::to_string(p) + " facts"));
        }
        emit("facts", "facts", rows);
      }
      if (all || ablate_sweep == "variants") {
        stage = "source variant sweep";
        std::vector<training::TableRow> rows;
        for (auto [v, label] : {std::pair{SourceVariant::CN5All, "CN5All"}, std::pair{SourceVariant::CN5WN3, "CN5WN3"},
                                std::pair{SourceVariant::CN5Sel, "CN5Sel"}}) {
          auto c = cfg;
          c.variant = v;
          rows.push_back(run_row(c, label));
        }
        emit("variants", "source", rows);
      }
      if (all || ablate_sweep == "kv") {
        stage = "key-value sweep";
        std::vector<training::TableRow> rows;
        for (auto kv : {model::KvStrategy::SubjObj, model::KvStrategy::ObjObj}) {
          auto c = cfg;
          c.model.kv = kv;
          rows.push_back(run_row(c, kv == model::KvStrategy::SubjObj ? "Subj/Obj" : "Obj/Obj"));
        }
        emit("kv", "key/value", rows);
      }
      write_manifest((fs::path(ablate_out) / "manifest.json").string(), sub, config::to_json(cfg),
                     ablate_data.as_inputs(), outputs, cfg.seed, results);
    } else if (sub == "ensemble") {
      stage = "reading predictions";
      std::vector<std::vector<training::Prediction>> sets;
      for (const auto& path : ensemble_inputs) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open '" + path + "'");
        sets.push_back(training::read_predictions(in));
      }
      stage = "voting";
      const auto voted = training::majority_vote(sets);
      const double acc = training::accuracy(voted);
      out << "ensemble of " << sets.size() << " runs: accuracy " << fmt(acc) << " on " << voted.size()
          << " instances\n";
      if (!ensemble_output.empty()) {
        write_text(ensemble_output, predictions_string(voted));
        std::map<std::string, std::string> inputs;
        for (std::size_t i = 0; i < ensemble_inputs.size(); ++i) inputs["run_" + std::to_string(i)] = ensemble_inputs[i];
        write_manifest(with_suffix(ensemble_output, ".manifest.json"), sub, Json::object(), inputs,
                       {{"predictions", ensemble_output}}, 0, Json{{"accuracy", acc}});
      }
    } else if (sub == "gradcheck") {
      stage = "resolving configuration";
      model::ModelConfig mc = gradcheck::toy_config();
      std::uint64_t seed = 1;
      try {
        const auto base = config::resolve(grad_knobs.config_name);
        mc.kv = base.model.kv;
        mc.interactions = base.model.interactions;
        mc.gamma = base.model.gamma;
        mc.knowledge_enabled = base.model.knowledge_enabled;
        if (grad_knobs.given("kv")) mc.kv = model::parse_kv_strategy(grad_knobs.kv);
        if (grad_knobs.given("interactions")) mc.interactions = model::InteractionMask::parse(grad_knobs.interactions);
        if (grad_knobs.given("seed")) seed = grad_knobs.seed;
        mc.validate();
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
      stage = "gradient check";
      model::KnReader<double> reader(mc, gradcheck::kToyVocabulary, seed);
      const auto report = gradcheck::check(reader, gradcheck::toy_batch(), grad_eps);
      out << "group\tentries\tmax_relative_error\tmax_absolute_error\n";
      for (const auto& g : report.groups) {
        out << g.group << '\t' << g.checked << '\t' << std::scientific << std::setprecision(3)
            << g.max_relative_error << '\t' << g.max_absolute_error << '\n'
            << std::defaultfloat;
      }
      const bool ok = report.passed(grad_tol);
      out << "max relative error " << std::scientific << std::setprecision(3) << report.max_relative_error()
          << std::defaultfloat << " (tolerance " << grad_tol << "): " << (ok ? "PASS" : "FAIL") << '\n';
      return ok ? kExitOk : kExitFailure;
    } else if (sub == "synth-data") {
      stage = "generating corpus";
      const SyntheticCorpus corpus = generate_synthetic(synth);
      stage = "writing corpus";
      std::map<std::string, std::string> outputs;
      for (const auto& [name, split] : {std::pair{"train", &corpus.train}, std::pair{"dev", &corpus.dev},
                                        std::pair{"test", &corpus.test}}) {
        std::ostringstream s;
        write_cbt(*split, s);
        const auto path = (fs::path(synth_out) / (std::string(name) + ".txt")).string();
        write_text(path, s.str());
        outputs[name] = path;
      }
      std::ostringstream kb;
      write_triples(corpus.store, kb);
      const auto kb_path = (fs::path(synth_out) / "kb.tsv").string();
      write_text(kb_path, kb.str());
      outputs["kb"] = kb_path;
      write_manifest((fs::path(synth_out) / "manifest.json").string(), sub,
                     Json{{"train", synth.train}, {"dev", synth.dev}, {"test", synth.test}}, {}, outputs, synth.seed);
      out << "wrote " << corpus.train.size() << "/" << corpus.dev.size() << "/" << corpus.test.size()
          << " instances and " << corpus.store.size() << " facts to " << synth_out << '\n';
    }
  } catch (const UsageError& e) {
    err << "knreader " << sub << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "knreader " << sub << ": " << stage << " failed: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace knreader::cli
