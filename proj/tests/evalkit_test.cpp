#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "jobembed/evalkit.hpp"
#include "test_support.hpp"

using namespace jobembed;
namespace jt = jobembed::testing;

namespace {

CandidatePool make_pool(std::vector<PoolEntry> entries, PoolMode mode = PoolMode::Combined) {
  return CandidatePool{mode, std::move(entries)};
}

RankedList fixed_ranking(std::vector<std::string> ids) {
  RankedList r;
  r.query_id = "q";
  double score = 1.0;
  for (auto& id : ids) {
    r.items.push_back({std::move(id), score, LangTag::L2, ""});
    score -= 0.01;
  }
  return r;
}

}  // namespace

TEST_CASE("rank orders by cosine with deterministic tie-break") {
  SUBCASE("pool of one") {
    const auto pool = make_pool({{"c1", LangTag::L2, LangTag::L2, "g", {1.0f, 0.0f}}});
    const RankedList r = rank(std::vector<float>{0.5f, 0.5f}, pool, "q", false);
    REQUIRE(r.items.size() == 1);
    CHECK(r.items[0].id == "c1");
  }

  SUBCASE("an identical candidate scores 1.0 at rank 1") {
    const std::vector<float> q = jt::unit({0.3f, -0.2f, 0.9f});
    auto pool = make_pool({{"far", LangTag::L2, LangTag::L2, "g", jt::unit({-1.0f, 0.2f, 0.1f})},
                           {"same", LangTag::L2, LangTag::L2, "g", q}});
    const RankedList r = rank(q, pool, "q", false);
    CHECK(r.items[0].id == "same");
    CHECK(r.items[0].score == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("ties break by ascending candidate id") {
    const std::vector<float> v = jt::unit({1.0f, 1.0f});
    const auto pool = make_pool({{"b", LangTag::L2, LangTag::L2, "g", v},
                                 {"a", LangTag::L2, LangTag::L2, "g", v},
                                 {"c", LangTag::L2, LangTag::L2, "g", v}});
    const RankedList r = rank(v, pool, "q", false);
    CHECK(r.items[0].id == "a");
    CHECK(r.items[1].id == "b");
    CHECK(r.items[2].id == "c");
  }

  SUBCASE("exclude_self drops the query id") {
    const std::vector<float> v = jt::unit({1.0f, 0.0f});
    const auto pool = make_pool(
        {{"q", LangTag::L2, LangTag::L2, "g", v}, {"c", LangTag::L2, LangTag::L2, "g", v}});
    const RankedList r = rank(v, pool, "q", true);
    REQUIRE(r.items.size() == 1);
    CHECK(r.items[0].id == "c");
  }

  SUBCASE("ordering matches a brute-force oracle on random pools") {
    std::mt19937_64 rng(404);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<PoolEntry> entries;
      const std::size_t n = 30 + trial;
      for (std::size_t i = 0; i < n; ++i) {
        entries.push_back({"c" + std::to_string(i), LangTag::L2, LangTag::L2, "g",
                           jt::random_unit(rng, 8)});
      }
      const std::vector<float> q = jt::random_unit(rng, 8);
      const auto pool = make_pool(entries);
      const RankedList r = rank(q, pool, "query", false);

      // Oracle: exhaustive cosine + stable sort on (score desc, id asc).
      std::vector<std::pair<double, std::string>> oracle;
      for (const auto& e : entries) {
        double dot = 0.0, nq = 0.0, nc = 0.0;
        for (std::size_t d = 0; d < 8; ++d) {
          dot += static_cast<double>(q[d]) * e.vec[d];
          nq += static_cast<double>(q[d]) * q[d];
          nc += static_cast<double>(e.vec[d]) * e.vec[d];
        }
        oracle.emplace_back(dot / std::sqrt(nq * nc), e.id);
      }
      std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      REQUIRE(r.items.size() == oracle.size());
      for (std::size_t i = 0; i < oracle.size(); ++i) {
        CHECK(r.items[i].id == oracle[i].second);
        CHECK(r.items[i].score == doctest::Approx(oracle[i].first).epsilon(1e-12));
      }
      for (std::size_t i = 1; i < r.items.size(); ++i) {
        CHECK(r.items[i - 1].score >= r.items[i].score);
      }
    }
  }

  CHECK_THROWS_AS(rank(std::vector<float>{1.0f}, make_pool({}), "q", false),
                  std::invalid_argument);
}

TEST_CASE("recall_at_k") {
  const RankedList r = fixed_ranking({"a", "b", "c", "d", "e"});
  CHECK(recall_at_k(r, IdSet::of({"a", "b"}), 2) == 1.0);
  CHECK(recall_at_k(r, IdSet::of({"d", "e"}), 2) == 0.0);
  CHECK(recall_at_k(r, IdSet::of({"a", "c", "zz"}), 10) == doctest::Approx(2.0 / 3.0));
  // Monotone in k.
  const IdSet rel = IdSet::of({"b", "d"});
  double prev = 0.0;
  for (std::size_t k = 1; k <= 5; ++k) {
    const double v = recall_at_k(r, rel, k);
    CHECK(v >= prev);
    prev = v;
  }
  // Capped variant can reach 1.0 when |relevant| > k.
  CHECK(recall_at_k(r, IdSet::of({"a", "b", "c", "zz"}), 2, true) == 1.0);
  CHECK_THROWS_AS(recall_at_k(r, IdSet::of({}), 2), std::invalid_argument);
  CHECK_THROWS_AS(recall_at_k(r, rel, 0), std::invalid_argument);
}

TEST_CASE("average_precision_at_k") {
  const RankedList r = fixed_ranking({"a", "b", "c", "d", "e"});
  CHECK(average_precision_at_k(r, IdSet::of({"a"}), 25) == 1.0);
  CHECK(average_precision_at_k(r, IdSet::of({"b"}), 25) == 0.5);
  CHECK(average_precision_at_k(r, IdSet::of({"a", "c"}), 25) ==
        doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  // AP = 1 iff the top min(|relevant|, k) ranks are all relevant.
  CHECK(average_precision_at_k(r, IdSet::of({"a", "b"}), 25) == 1.0);
  CHECK(average_precision_at_k(r, IdSet::of({"a", "b", "c", "d", "e", "zz"}), 5) == 1.0);
  CHECK(average_precision_at_k(r, IdSet::of({"a", "c"}), 25) < 1.0);
  CHECK_THROWS_AS(average_precision_at_k(r, IdSet::of({}), 25), std::invalid_argument);
}

namespace {

// Two groups, both languages, language-blind vectors (same vector per
// group), plus one query per language per group.
SynonymBenchmark symmetric_benchmark(std::map<std::string, std::vector<float>>& table) {
  SynonymBenchmark bench;
  const std::vector<float> g1 = jt::unit({1.0f, 0.0f, 0.0f});
  const std::vector<float> g2 = jt::unit({0.0f, 1.0f, 0.0f});
  auto add_candidate = [&](const std::string& id, LangTag lang, const std::string& group,
                           const std::vector<float>& v) {
    bench.candidates.push_back({id, "text-" + id, lang, group});
    table[id] = v;
  };
  add_candidate("c0", LangTag::L1, "g1", g1);
  add_candidate("c1", LangTag::L2, "g1", g1);
  add_candidate("c2", LangTag::L1, "g2", g2);
  add_candidate("c3", LangTag::L2, "g2", g2);
  auto add_query = [&](const std::string& id, LangTag lang, const std::string& group,
                       const std::vector<float>& v) {
    bench.queries.push_back({id, "q-" + id, lang, group});
    table[id] = v;
  };
  add_query("q0", LangTag::L1, "g1", g1);
  add_query("q1", LangTag::L2, "g1", g1);
  add_query("q2", LangTag::L1, "g2", g2);
  add_query("q3", LangTag::L2, "g2", g2);
  return bench;
}

}  // namespace

TEST_CASE("evaluate_synonym protocol") {
  std::map<std::string, std::vector<float>> table;
  const SynonymBenchmark bench = symmetric_benchmark(table);
  jt::FixedEmbeddingSource source(3, table);

  SUBCASE("l1 pools contain only l1 candidates") {
    const CandidatePool pool = build_pool(source, bench.candidates, PoolMode::L1Only);
    REQUIRE(pool.entries.size() == 2);
    for (const auto& e : pool.entries) CHECK(e.lang == LangTag::L1);
    const CandidatePool pool2 = build_pool(source, bench.candidates, PoolMode::L2Only);
    for (const auto& e : pool2.entries) CHECK(e.lang == LangTag::L2);
    CHECK(build_pool(source, bench.candidates, PoolMode::Combined).entries.size() == 4);
  }

  SUBCASE("language-blind embeddings score identically across query languages") {
    const MetricsReport report = evaluate_synonym(source, bench, PoolMode::Combined);
    CHECK(report.skipped == 0);
    REQUIRE(report.by_lang.count(LangTag::L1) == 1);
    REQUIRE(report.by_lang.count(LangTag::L2) == 1);
    const auto& l1 = report.by_lang.at(LangTag::L1);
    const auto& l2 = report.by_lang.at(LangTag::L2);
    REQUIRE(l1.recalls.size() == l2.recalls.size());
    for (std::size_t i = 0; i < l1.recalls.size(); ++i) CHECK(l1.recalls[i] == l2.recalls[i]);
    for (std::size_t i = 0; i < l1.maps.size(); ++i) CHECK(l1.maps[i] == l2.maps[i]);
    CHECK(report.overall.recalls[0] == 1.0);  // perfect retrieval by construction
  }

  SUBCASE("identical runs give identical reports") {
    const MetricsReport a = evaluate_synonym(source, bench, PoolMode::Combined);
    const MetricsReport b = evaluate_synonym(source, bench, PoolMode::Combined);
    CHECK(metrics_csv(a) == metrics_csv(b));
    CHECK(metrics_per_query_csv(a) == metrics_per_query_csv(b));
  }

  SUBCASE("queries without reachable relevant candidates are skipped") {
    std::map<std::string, std::vector<float>> t2 = table;
    SynonymBenchmark lopsided = bench;
    // g3 has only an L2 candidate; its query is unreachable in an L1 pool.
    lopsided.candidates.push_back({"c4", "text-c4", LangTag::L2, "g3"});
    lopsided.queries.push_back({"q4", "q-c4", LangTag::L2, "g3"});
    t2["c4"] = jt::unit({0.0f, 0.0f, 1.0f});
    t2["q4"] = t2["c4"];
    jt::FixedEmbeddingSource s2(3, t2);
    const MetricsReport report = evaluate_synonym(s2, lopsided, PoolMode::L1Only);
    // q0..q3 target groups g1/g2, each with one L1 candidate; q4 is skipped.
    CHECK(report.skipped == 1);
    CHECK(report.overall.n_queries == 4);
    CHECK(report.per_query.size() + report.skipped == 5);
  }
}

TEST_CASE("dictionary-style benchmarks self-exclude by id") {
  // Queries reuse candidate ids (role-less loading); each record must not
  // retrieve itself, and groups of two resolve to the other member at rank 1.
  std::map<std::string, std::vector<float>> table;
  SynonymBenchmark bench;
  std::mt19937_64 rng(31);
  for (int g = 0; g < 5; ++g) {
    const std::string group = "g" + std::to_string(g);
    const auto proto = jt::random_unit(rng, 6);
    for (int k = 0; k < 2; ++k) {
      const std::string id = "c" + std::to_string(g * 2 + k);
      bench.candidates.push_back({id, "x", k ? LangTag::L1 : LangTag::L2, group});
      table[id] = proto;
    }
  }
  bench.queries = bench.candidates;
  jt::FixedEmbeddingSource source(6, table);
  MetricsConfig mcfg;
  mcfg.recall_at = {1};
  const MetricsReport report = evaluate_synonym(source, bench, PoolMode::Combined, mcfg);
  CHECK(report.skipped == 0);
  CHECK(report.overall.n_queries == 10);
  CHECK(report.overall.recalls[0] == 1.0);
}

TEST_CASE("embedding dumps round-trip and validate") {
  const auto dir = jt::temp_dir("dump");
  std::mt19937_64 rng(7);
  std::vector<DumpRecord> records;
  for (int i = 0; i < 5; ++i) {
    records.push_back(
        {"id" + std::to_string(i), i % 2 ? LangTag::L1 : LangTag::L2, jt::random_unit(rng, 6)});
  }
  save_embedding_dump(dir / "dump.jsonl", 6, records);

  SUBCASE("round-trip within 1e-6") {
    const EmbeddingDump dump = load_embedding_dump(dir / "dump.jsonl");
    CHECK(dump.dim == 6);
    CHECK(dump.renormalized == 0);
    REQUIRE(dump.records.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(dump.records[i].id == records[i].id);
      CHECK(dump.records[i].lang == records[i].lang);
      for (std::size_t d = 0; d < 6; ++d) {
        CHECK(dump.records[i].vec[d] == doctest::Approx(records[i].vec[d]).epsilon(1e-6));
      }
    }
  }

  SUBCASE("unnormalized vectors are normalized with a warning count") {
    std::vector<DumpRecord> wild = records;
    wild[1].vec = {2.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f};
    wild[3].vec = {0.0f, 3.0f, 0.0f, 0.0f, 0.0f, 0.0f};
    save_embedding_dump(dir / "wild.jsonl", 6, wild);
    const EmbeddingDump dump = load_embedding_dump(dir / "wild.jsonl");
    CHECK(dump.renormalized == 2);
    CHECK(dump.records[1].vec[0] == 1.0f);
  }

  SUBCASE("dimension mismatch names the record") {
    std::string content = jt::slurp(dir / "dump.jsonl");
    const auto at = content.find("\"vector\":[");
    content.insert(at + 10, "0.25,");
    jt::write_file(dir, "baddim.jsonl", content);
    CHECK_THROWS_WITH_AS(load_embedding_dump(dir / "baddim.jsonl"), doctest::Contains(":2"),
                         std::runtime_error);
  }

  SUBCASE("count mismatch and missing header are errors") {
    std::string content = jt::slurp(dir / "dump.jsonl");
    jt::write_file(dir, "short.jsonl", content.substr(0, content.rfind("{\"id\":\"id4\"")));
    CHECK_THROWS_AS(load_embedding_dump(dir / "short.jsonl"), std::runtime_error);
    jt::write_file(dir, "headerless.jsonl", "{\"id\":\"x\",\"vector\":[1.0]}\n");
    CHECK_THROWS_AS(load_embedding_dump(dir / "headerless.jsonl"), std::runtime_error);
  }

  SUBCASE("dump source errors on unknown ids") {
    DumpEmbeddingSource source(load_embedding_dump(dir / "dump.jsonl"));
    std::vector<EmbedRequest> ok = {{"id1", ""}};
    CHECK(source.embed(ok).size() == 1);
    std::vector<EmbedRequest> missing = {{"nope", ""}};
    CHECK_THROWS_WITH_AS(source.embed(missing), doctest::Contains("nope"), std::runtime_error);
  }
}

TEST_CASE("linear probe on separable embeddings") {
  // Three tight clusters around orthogonal prototypes.
  std::mt19937_64 rng(99);
  std::normal_distribution<float> noise(0.0f, 0.05f);
  const std::size_t dim = 8, per_class = 40;
  Matrix<float> x_train(3 * per_class, dim), x_test(3 * 10, dim);
  std::vector<int> y_train, y_test;
  auto fill = [&](Matrix<float>& x, std::vector<int>& y, std::size_t per) {
    std::size_t row = 0;
    for (int c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < per; ++i, ++row) {
        std::vector<float> v(dim, 0.0f);
        v[static_cast<std::size_t>(c)] = 1.0f;
        for (auto& e : v) e += noise(rng);
        const auto u = jt::unit(v);
        std::copy(u.begin(), u.end(), x.row(row).begin());
        y.push_back(c);
      }
    }
  };
  fill(x_train, y_train, per_class);
  fill(x_test, y_test, 10);

  ProbeConfig cfg;
  cfg.epochs = 60;
  const LinearProbe probe = train_probe(x_train, y_train, {"a", "b", "c"}, cfg);

  const double acc1 = probe_acc_at_k(probe, x_test, y_test, 1);
  const double acc3 = probe_acc_at_k(probe, x_test, y_test, 3);
  CHECK(acc1 >= 0.95);
  CHECK(acc1 <= acc3);
  CHECK(acc3 == 1.0);  // k = n_classes

  SUBCASE("acc@k is monotone in k") {
    double prev = 0.0;
    for (std::size_t k = 1; k <= 3; ++k) {
      const double v = probe_acc_at_k(probe, x_test, y_test, k);
      CHECK(v >= prev);
      prev = v;
    }
  }

  SUBCASE("missing train classes are detected") {
    const std::vector<int> train_labels = {0, 0, 1};
    const std::vector<int> test_labels = {0, 2};
    const std::vector<std::string> classes = {"a", "b", "c"};
    const auto missing = missing_train_classes(train_labels, test_labels, classes);
    REQUIRE(missing.size() == 1);
    CHECK(missing[0] == "c");
  }
}
