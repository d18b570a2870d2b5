#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "knreader/error.hpp"
#include "knreader/knowledge_store.hpp"
#include "knreader/retrieval.hpp"
#include "oracles/retrieval_oracle.hpp"
#include "support.hpp"

using namespace knreader;
using support::triple;

TEST_CASE("ingest reads both record formats") {
  std::istringstream in(
      "# comment\n"
      "bow\t/r/IsUsedFor\thunt animals\t/s/omcs\n"
      "\n"
      "{\"subject\": [\"Apple\"], \"relation\": \"/r/IsA\", \"object\": [\"fruit\"], \"source\": \"/s/wordnet/3.0\"}\n");
  const FactStore store = ingest_triples(in);
  REQUIRE(store.size() == 2);
  CHECK(store.fact(0).to_string() == "bow | /r/IsUsedFor | hunt animals");
  CHECK(store.fact(1).subject_tokens == std::vector<std::string>{"apple"});
  CHECK(store.fact(1).source_tag == "/s/wordnet/3.0");
  CHECK(store.fact(1).store_ordinal == 1);
  for (const char* lemma : {"bow", "hunt", "animal"}) CHECK(store.facts_containing(lemma) == std::vector<FactId>{0});
  CHECK(store.facts_containing("animals").empty());
  CHECK(store.facts_containing("/r/isusedfor").empty());

  std::ostringstream out;
  write_triples(store, out);
  std::istringstream back(out.str());
  const FactStore again = ingest_triples(back);
  REQUIRE(again.size() == store.size());
  for (FactId i = 0; i < store.size(); ++i) CHECK(again.fact(i).to_string() == store.fact(i).to_string());
}

TEST_CASE("ingest errors name the line") {
  std::istringstream two_fields("a\t/r/IsA\n");
  CHECK_THROWS_WITH_AS(ingest_triples(two_fields), doctest::Contains("line 1"), FormatError);
  std::istringstream bad_json("ok\t/r/IsA\tfine\n{oops\n");
  CHECK_THROWS_WITH_AS(ingest_triples(bad_json), doctest::Contains("line 2"), FormatError);
  std::istringstream no_object("{\"subject\": \"a\", \"relation\": \"/r/IsA\"}\n");
  CHECK_THROWS_AS(ingest_triples(no_object), FormatError);
  std::istringstream empty("");
  const FactStore none = ingest_triples(empty);
  CHECK(none.empty());
  CHECK(none.facts_containing("anything").empty());
  CHECK_THROWS_AS(load_triples("/nonexistent/kb.tsv"), IoError);
}

TEST_CASE("index agrees with a linear scan on random stores") {
  std::mt19937_64 rng(21);
  const FactStore store = support::random_store(rng, 1000);
  std::set<std::string> lemmas;
  for (const auto& f : store.facts()) {
    for (const auto& t : f.subject_tokens) lemmas.insert(store.lemma(t));
    for (const auto& t : f.object_tokens) lemmas.insert(store.lemma(t));
  }
  lemmas.insert("absent");
  for (const auto& lemma : lemmas) {
    std::vector<FactId> scan;
    for (FactId id = 0; id < store.size(); ++id) {
      bool hit = false;
      for (const auto& t : store.fact(id).subject_tokens) hit = hit || store.lemma(t) == lemma;
      for (const auto& t : store.fact(id).object_tokens) hit = hit || store.lemma(t) == lemma;
      if (hit) scan.push_back(id);
    }
    CHECK(store.facts_containing(lemma) == scan);
  }
}

TEST_CASE("lookups are monotone under ingestion") {
  std::mt19937_64 rng(5);
  FactStore store;
  std::map<std::string, std::vector<FactId>> before;
  for (int round = 0; round < 5; ++round) {
    for (const auto& w : support::base_words()) before[w] = store.facts_containing(w);
    for (int i = 0; i < 40; ++i) {
      store.add(triple(support::random_phrase(rng), "/r/IsA", support::random_phrase(rng)));
    }
    for (const auto& w : support::base_words()) {
      const auto& now = store.facts_containing(w);
      CHECK(std::includes(now.begin(), now.end(), before[w].begin(), before[w].end()));
    }
  }
}

TEST_CASE("source variants") {
  FactStore store;
  store.add(triple("apple", "/r/IsA", "fruit", "/s/wordnet/3.0"));
  store.add(triple("apple", "/r/AtLocation", "tree", "/s/omcs"));
  store.add(triple("apple", "/r/RelatedTo", "pie", "/s/omcs"));
  store.add(triple("tree", "/r/PartOf", "forest", "/s/WordNet3"));
  store.add(triple("pie", "/r/synonym", "tart", "/s/omcs"));

  const FactStore all = select_source(store, SourceVariant::CN5All);
  const FactStore wn = select_source(store, SourceVariant::CN5WN3);
  const FactStore sel = select_source(store, SourceVariant::CN5Sel);
  CHECK(all.size() == 5);
  REQUIRE(wn.size() == 2);
  CHECK(wn.fact(0).relation == "/r/IsA");
  CHECK(wn.fact(1).relation == "/r/PartOf");
  REQUIRE(sel.size() == 2);
  CHECK(sel.fact(0).relation == "/r/AtLocation");
  CHECK(sel.fact(1).store_ordinal == 3);
  // Views keep ingestion ordinals, so index results stay in ordinal order.
  CHECK(sel.facts_containing("tree") == std::vector<FactId>{0, 1});

  // CN5Sel is CN5All minus exactly the excluded relations.
  std::mt19937_64 rng(9);
  const FactStore big = support::random_store(rng, 300);
  const FactStore big_sel = select_source(big, SourceVariant::CN5Sel);
  std::size_t excluded = 0;
  for (const auto& f : big.facts()) excluded += is_excluded_relation(f.relation) ? 1 : 0;
  CHECK(big_sel.size() + excluded == big.size());
  for (const auto& f : big_sel.facts()) CHECK_FALSE(is_excluded_relation(f.relation));

  FactStore clean;
  clean.add(triple("a", "/r/UsedFor", "b"));
  CHECK(select_source(clean, SourceVariant::CN5Sel).size() == 1);

  CHECK(is_excluded_relation("IsA"));
  CHECK(is_excluded_relation("/r/HasContext"));
  CHECK_FALSE(is_excluded_relation("/r/UsedFor"));
  CHECK(parse_source_variant("CN5Sel") == SourceVariant::CN5Sel);
  CHECK_THROWS_AS(parse_source_variant("cn6"), ConfigError);
}

namespace {

ClozeInstance head_instance() {
  // Ten single-word candidates; "head" is the second.
  return support::make_instance(
      "head", {"the king wore a crown on his head .", "a dog and a cat and a bird saw the hat .",
               "the fox , owl , bee and ant slept ."},
      "the xxxxx wore a crown .", {"king", "head", "crown", "dog", "cat", "bird", "hat", "fox", "owl", "bee"}, "king");
}

std::string serialize(const ClozeInstance& inst, const FactStore& store, const RetrievedFacts& r) {
  std::ostringstream out;
  write_retrieved(out, inst, store, r);
  return out.str();
}

}  // namespace

TEST_CASE("node weights and fact scores") {
  const ClozeInstance inst = head_instance();
  const RetrievalConfig cfg;
  const Lemmatizer lem = default_lemmatize;
  auto w = [&](const std::string& phrase) {
    const auto toks = text::split_whitespace(phrase);
    return node_weight(toks, inst, lem, cfg);
  };
  CHECK(w("heads") == 4);
  CHECK(w("wore") == 3);      // question and document: the higher tier
  CHECK(w("slept") == 2);
  CHECK(w("xxxxx") == 0);     // the placeholder is not a question word
  CHECK(w("dragon") == 0);
  CHECK(w("dragon slept") == 2);
  CHECK(w("slept king") == 4);

  const InstanceLemmas lemmas(inst, lem);
  auto s = [&](const std::string& subj, const std::string& obj) {
    return score_fact(triple(subj, "/r/RelatedTo", obj), lemmas, lem, cfg);
  };
  CHECK(s("head", "hat") == 8);   // A+A
  CHECK(s("head", "wore") == 7);  // A+Q
  CHECK(s("head", "slept") == 6); // A+D
  CHECK(s("slept", "wore") == 5); // D+Q
  CHECK(s("slept", "slept") == 4);
  CHECK(s("head", "dragon") == 4);
  CHECK(s("dragon", "lizard") == 0);
}

TEST_CASE("retrieval fixtures") {
  const ClozeInstance inst = head_instance();
  RetrievalConfig cfg;
  cfg.total_facts = 20;  // two per candidate

  SUBCASE("empty store") {
    FactStore empty;
    CHECK(retrieve_facts(inst, empty, cfg).facts.empty());
  }

  SUBCASE("ties resolve in store order") {
    FactStore store;
    store.add(triple("king", "/r/IsA", "ruler"));     // 4
    store.add(triple("king", "/r/HasA", "throne"));   // 4
    store.add(triple("king", "/r/AtLocation", "castle"));  // 4
    store.add(triple("queen", "/r/IsA", "ruler"));
    const auto r = retrieve_facts(inst, store, cfg);
    REQUIRE(r.facts.size() == 2);
    CHECK(r.facts[0] == RetrievedFact{0, 4, 0});
    CHECK(r.facts[1] == RetrievedFact{1, 4, 0});
    CHECK(serialize(inst, store, r) == serialize(inst, store, oracle::retrieve(inst, store, cfg)));
  }

  SUBCASE("higher scores win over store order") {
    FactStore store;
    store.add(triple("king", "/r/IsA", "ruler"));      // 4
    store.add(triple("king", "/r/Desires", "crown"));  // 8
    store.add(triple("kings", "/r/Do", "slept"));      // 6
    const auto r = retrieve_facts(inst, store, cfg);
    REQUIRE(r.facts.size() == 2);
    CHECK(r.facts[0].fact_id == 1);
    CHECK(r.facts[0].weight == 8);
    // Fact 1 also mentions "crown" (candidate 2) but is owned by "king".
    CHECK(r.facts[1].fact_id == 2);
  }

  SUBCASE("quota per candidate") {
    FactStore store;
    for (int i = 0; i < 30; ++i) {
      for (const auto& c : inst.candidates) store.add(triple(c, "/r/IsA", "thing" + std::to_string(i)));
    }
    const auto r = retrieve_facts(inst, store, cfg);
    CHECK(r.facts.size() == 20);
    std::map<std::size_t, int> per;
    for (const auto& f : r.facts) ++per[f.candidate_index];
    CHECK(per.size() == 10);
    for (const auto& [c, n] : per) CHECK(n == 2);
  }

  SUBCASE("a fact mentioning two candidates is added once, to the earlier one") {
    FactStore store;
    store.add(triple("head", "/r/PartOf", "dog"));  // candidates 1 and 3
    const auto r = retrieve_facts(inst, store, cfg);
    REQUIRE(r.facts.size() == 1);
    CHECK(r.facts[0].candidate_index == 1);
    CHECK(r.facts[0].weight == 8);
  }

  SUBCASE("dedup frees the quota for the next fact") {
    FactStore store;
    store.add(triple("head", "/r/PartOf", "dog"));   // 0: owned by head
    store.add(triple("dog", "/r/IsA", "hat"));       // 1: A+A for dog
    store.add(triple("dog", "/r/IsA", "animal"));    // 2
    store.add(triple("dog", "/r/CapableOf", "bark"));  // 3
    const auto r = retrieve_facts(inst, store, cfg);
    std::vector<FactId> dog;
    for (const auto& f : r.facts) {
      if (f.candidate_index == 3) dog.push_back(f.fact_id);
    }
    // Fact 0 is skipped without using up dog's quota; fact 1 stays with dog, not hat.
    CHECK(dog == std::vector<FactId>{1, 2});
    CHECK(r.facts.size() == 3);
    CHECK(serialize(inst, store, r) == serialize(inst, store, oracle::retrieve(inst, store, cfg)));
  }

  SUBCASE("budget must divide among candidates") {
    FactStore store;
    RetrievalConfig bad;
    bad.total_facts = 25;
    CHECK_THROWS_AS(retrieve_facts(inst, store, bad), ConfigError);
    bad.total_facts = 50;
    bad.weights = {2, 3, 4};
    CHECK_THROWS_AS(retrieve_facts(inst, store, bad), ConfigError);
  }
}

TEST_CASE("retrieval equals the brute-force oracle on random stores") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const FactStore store = support::random_store(rng, 1 + rng() % 100);
    const ClozeInstance inst = support::random_instance(rng, "r" + std::to_string(trial));
    RetrievalConfig cfg;
    cfg.total_facts = 10 * (1 + rng() % 5);
    const auto got = retrieve_facts(inst, store, cfg);
    CHECK(serialize(inst, store, got) == serialize(inst, store, oracle::retrieve(inst, store, cfg)));

    // Quota, ordering, dedup.
    std::map<std::size_t, std::vector<int>> slices;
    std::set<FactId> ids;
    for (const auto& f : got.facts) {
      slices[f.candidate_index].push_back(f.weight);
      CHECK(ids.insert(f.fact_id).second);
    }
    CHECK(got.facts.size() <= cfg.total_facts);
    for (const auto& [c, w] : slices) {
      CHECK(w.size() <= cfg.per_candidate_cap(10));
      CHECK(std::is_sorted(w.begin(), w.end(), std::greater<>()));
    }
    CHECK(retrieve_facts(inst, store, cfg) == got);
  }
}

TEST_CASE("retrieved records round-trip") {
  std::mt19937_64 rng(3);
  const FactStore store = support::random_store(rng, 80);
  const ClozeInstance inst = support::random_instance(rng, "io");
  const auto got = retrieve_facts(inst, store, RetrievalConfig{});
  std::stringstream buf;
  write_retrieved(buf, inst, store, got);
  const auto records = read_retrieved(buf);
  REQUIRE(records.size() == 1);
  CHECK(records[0].instance_id == "io");
  const auto resolved = resolve(got, store);
  REQUIRE(records[0].facts.size() == resolved.size());
  for (std::size_t i = 0; i < resolved.size(); ++i) {
    CHECK(records[0].facts[i].triple.to_string() == resolved[i].triple.to_string());
    CHECK(records[0].facts[i].triple.store_ordinal == resolved[i].triple.store_ordinal);
    CHECK(records[0].facts[i].candidate_index == resolved[i].candidate_index);
    CHECK(records[0].facts[i].weight == resolved[i].weight);
  }
  std::istringstream bad("{\"instance_id\": 1}\n");
  CHECK_THROWS_AS(read_retrieved(bad), FormatError);
}
