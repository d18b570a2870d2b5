#include "knreader/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "knreader/error.hpp"

namespace knreader::config {
namespace {

template <typename T>
T get(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown " + where + " key '" + key + "'");
  }
}

}  // namespace

Json to_json(const training::TrainConfig& c) {
  const auto& m = c.model;
  return Json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"eval_every", c.eval_every},
              {"embed_train_steps", c.embed_train_steps},
              {"seed", c.seed},
              {"learning_rate", c.learning_rate},
              {"deterministic", c.deterministic},
              {"variant", std::string(to_string(c.variant))},
              {"facts", c.retrieval.total_facts},
              {"retrieval_weights",
               {c.retrieval.weights.answer, c.retrieval.weights.question, c.retrieval.weights.document}},
              {"model",
               {{"hidden", m.hidden},
                {"embed_dim", m.embed_dim},
                {"gamma", m.gamma},
                {"kv", std::string(model::to_string(m.kv))},
                {"interactions", m.interactions.to_string()},
                {"keep_prob", m.keep_prob},
                {"knowledge_enabled", m.knowledge_enabled},
                {"embedding_init", m.embedding_init}}}};
}

training::TrainConfig overlay(training::TrainConfig c, const Json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  reject_unknown(j,
                 {"epochs", "batch_size", "eval_every", "embed_train_steps", "seed", "learning_rate", "deterministic",
                  "variant", "facts", "retrieval_weights", "model"},
                 "configuration");
  if (j.contains("epochs")) c.epochs = get<std::size_t>(j, "epochs");
  if (j.contains("batch_size")) c.batch_size = get<std::size_t>(j, "batch_size");
  if (j.contains("eval_every")) c.eval_every = get<std::size_t>(j, "eval_every");
  if (j.contains("embed_train_steps")) c.embed_train_steps = get<std::size_t>(j, "embed_train_steps");
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed");
  if (j.contains("learning_rate")) c.learning_rate = get<double>(j, "learning_rate");
  if (j.contains("deterministic")) c.deterministic = get<bool>(j, "deterministic");
  if (j.contains("variant")) c.variant = parse_source_variant(get<std::string>(j, "variant"));
  if (j.contains("facts")) c.retrieval.total_facts = get<std::size_t>(j, "facts");
  if (j.contains("retrieval_weights")) {
    const auto w = get<std::vector<int>>(j, "retrieval_weights");
    if (w.size() != 3) throw ConfigError("retrieval_weights needs three entries (answer, question, document)");
    c.retrieval.weights = {w[0], w[1], w[2]};
  }
  if (j.contains("model")) {
    const Json& m = j.at("model");
    if (!m.is_object()) throw ConfigError("model configuration must be a JSON object");
    reject_unknown(m,
                   {"hidden", "embed_dim", "gamma", "kv", "interactions", "keep_prob", "knowledge_enabled",
                    "embedding_init"},
                   "model");
    auto& mc = c.model;
    if (m.contains("hidden")) mc.hidden = get<std::size_t>(m, "hidden");
    if (m.contains("embed_dim")) mc.embed_dim = get<std::size_t>(m, "embed_dim");
    if (m.contains("gamma")) mc.gamma = get<double>(m, "gamma");
    if (m.contains("kv")) mc.kv = model::parse_kv_strategy(get<std::string>(m, "kv"));
    if (m.contains("interactions")) mc.interactions = model::InteractionMask::parse(get<std::string>(m, "interactions"));
    if (m.contains("keep_prob")) mc.keep_prob = get<double>(m, "keep_prob");
    if (m.contains("knowledge_enabled")) mc.knowledge_enabled = get<bool>(m, "knowledge_enabled");
    if (m.contains("embedding_init")) mc.embedding_init = get<double>(m, "embedding_init");
  }
  c.validate();
  return c;
}

training::TrainConfig resolve(const std::string& name) {
  if (name == "toy") return training::TrainConfig::toy();
  if (name == "paper") return training::TrainConfig::paper();
  std::ifstream in(name);
  if (!in) throw ConfigError("'" + name + "' is neither a preset (toy, paper) nor a readable config file");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("config file '" + name + "': " + e.what());
  }
  if (j.is_object() && j.contains("tool_version") && j.contains("config")) j = j.at("config");
  return overlay(training::TrainConfig::toy(), j);
}

Json RunManifest::to_json() const {
  return Json{{"subcommand", subcommand}, {"config", config},     {"inputs", inputs},
              {"outputs", outputs},       {"seed", seed},         {"results", results},
              {"tool_version", tool_version}};
}

RunManifest RunManifest::from_json(const Json& j) {
  RunManifest m;
  try {
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config = j.at("config");
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.results = j.value("results", Json::object());
    m.tool_version = j.at("tool_version").get<std::string>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("run manifest: ") + e.what());
  }
  return m;
}

void RunManifest::write(const std::string& path) const {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  out << to_json().dump(2) << '\n';
}

RunManifest RunManifest::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  try {
    return from_json(Json::parse(in));
  } catch (const Json::exception& e) {
    throw FormatError("manifest '" + path + "': " + e.what());
  }
}

}  // namespace knreader::config
