#include "jobembed/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "jobembed/io.hpp"
#include "jobembed/rng.hpp"

namespace jobembed {

std::string_view to_string(PoolMode mode) {
  switch (mode) {
    case PoolMode::L1Only: return "l1";
    case PoolMode::L2Only: return "l2";
    case PoolMode::Combined: return "combined";
  }
  return "combined";
}

std::optional<PoolMode> pool_mode_from_string(std::string_view s) {
  if (s == "l1") return PoolMode::L1Only;
  if (s == "l2") return PoolMode::L2Only;
  if (s == "combined") return PoolMode::Combined;
  return std::nullopt;
}

RankedList rank(std::span<const float> query_vec, const CandidatePool& pool,
                std::string_view query_id, bool exclude_self) {
  if (pool.entries.empty()) throw std::invalid_argument("rank: empty candidate pool");
  double qsq = 0.0;
  for (float v : query_vec) qsq += static_cast<double>(v) * v;
  const double qnorm = std::max(std::sqrt(qsq), 1e-30);

  struct Scored {
    double score;
    std::size_t index;
  };
  std::vector<Scored> scored;
  scored.reserve(pool.entries.size());
  for (std::size_t i = 0; i < pool.entries.size(); ++i) {
    const auto& e = pool.entries[i];
    if (exclude_self && e.id == query_id) continue;
    if (e.vec.size() != query_vec.size()) {
      throw std::invalid_argument("rank: dimension mismatch for candidate " + e.id);
    }
    double dot = 0.0, csq = 0.0;
    for (std::size_t d = 0; d < e.vec.size(); ++d) {
      dot += static_cast<double>(query_vec[d]) * e.vec[d];
      csq += static_cast<double>(e.vec[d]) * e.vec[d];
    }
    scored.push_back({dot / (qnorm * std::max(std::sqrt(csq), 1e-30)), i});
  }
  std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return pool.entries[a.index].id < pool.entries[b.index].id;
  });
  RankedList out;
  out.query_id = std::string(query_id);
  out.items.reserve(scored.size());
  for (const auto& s : scored) {
    const auto& e = pool.entries[s.index];
    out.items.push_back({e.id, s.score, e.folded_lang, e.group});
  }
  return out;
}

IdSet IdSet::of(std::vector<std::string> ids) {
  normalize_fields(ids);
  return IdSet{std::move(ids)};
}

bool IdSet::contains(const std::string& id) const {
  return std::binary_search(ids.begin(), ids.end(), id);
}

double recall_at_k(const RankedList& ranked, const IdSet& relevant, std::size_t k, bool capped) {
  if (relevant.empty()) throw std::invalid_argument("recall_at_k: empty relevant set");
  if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
  std::size_t hits = 0;
  const std::size_t top = std::min(k, ranked.items.size());
  for (std::size_t r = 0; r < top; ++r) {
    if (relevant.contains(ranked.items[r].id)) ++hits;
  }
  const std::size_t denom = capped ? std::min(relevant.size(), k) : relevant.size();
  return static_cast<double>(hits) / static_cast<double>(denom);
}

double average_precision_at_k(const RankedList& ranked, const IdSet& relevant, std::size_t k) {
  if (relevant.empty()) throw std::invalid_argument("average_precision_at_k: empty relevant set");
  if (k < 1) throw std::invalid_argument("average_precision_at_k: k must be >= 1");
  std::size_t hits = 0;
  double sum = 0.0;
  const std::size_t top = std::min(k, ranked.items.size());
  for (std::size_t r = 0; r < top; ++r) {
    if (relevant.contains(ranked.items[r].id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(std::min(relevant.size(), k));
}

std::vector<std::vector<float>> ModelEmbeddingSource::embed(
    std::span<const EmbedRequest> requests) {
  std::vector<std::vector<float>> out;
  out.reserve(requests.size());
  constexpr std::size_t kChunk = 256;
  std::vector<std::string> texts;
  for (std::size_t at = 0; at < requests.size(); at += kChunk) {
    const std::size_t n = std::min(kChunk, requests.size() - at);
    texts.clear();
    for (std::size_t i = 0; i < n; ++i) texts.push_back(requests[at + i].text);
    const Matrix<float> emb = encode(model_, texts);
    for (std::size_t i = 0; i < n; ++i) {
      out.emplace_back(emb.row(i).begin(), emb.row(i).end());
    }
  }
  return out;
}

EmbeddingDump load_embedding_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing file: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  EmbeddingDump dump;
  std::size_t declared_count = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": malformed JSON: " + e.what());
    }
    if (!have_header) {
      if (!j.contains("format_version") || !j.contains("dim") || !j.contains("count")) {
        throw std::runtime_error(path.string() + ": first record must be the dump header");
      }
      if (j["format_version"].get<int>() != kDumpVersion) {
        throw std::runtime_error(path.string() + ": unsupported dump format_version");
      }
      dump.dim = j["dim"].get<std::size_t>();
      if (dump.dim == 0) throw std::runtime_error(path.string() + ": dim must be positive");
      declared_count = j["count"].get<std::size_t>();
      have_header = true;
      continue;
    }
    DumpRecord rec;
    rec.id = j.at("id").get<std::string>();
    if (auto tag = lang_from_string(j.value("lang", "l2"))) {
      rec.lang = *tag;
    } else {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": unknown lang");
    }
    rec.vec = j.at("vector").get<std::vector<float>>();
    if (rec.vec.size() != dump.dim) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": vector dim " + std::to_string(rec.vec.size()) +
                               " != declared dim " + std::to_string(dump.dim));
    }
    double sq = 0.0;
    for (float v : rec.vec) {
      if (!std::isfinite(v)) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": non-finite vector entry");
      }
      sq += static_cast<double>(v) * v;
    }
    const double norm = std::sqrt(sq);
    if (norm == 0.0) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": zero vector");
    }
    if (std::abs(norm - 1.0) > 1e-3) ++dump.renormalized;
    for (float& v : rec.vec) v = static_cast<float>(v / norm);
    dump.records.push_back(std::move(rec));
  }
  if (!have_header) throw std::runtime_error(path.string() + ": empty dump");
  if (declared_count != dump.records.size()) {
    throw std::runtime_error(path.string() + ": header count " + std::to_string(declared_count) +
                             " != records " + std::to_string(dump.records.size()));
  }
  return dump;
}

void save_embedding_dump(const std::filesystem::path& path, std::size_t dim,
                         std::span<const DumpRecord> records) {
  nlohmann::ordered_json header;
  header["format_version"] = kDumpVersion;
  header["dim"] = dim;
  header["count"] = records.size();
  std::string out = header.dump();
  out += '\n';
  for (const auto& rec : records) {
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    j["lang"] = std::string(to_string(rec.lang));
    j["vector"] = rec.vec;
    out += j.dump();
    out += '\n';
  }
  atomic_write_file(path, out);
}

DumpEmbeddingSource::DumpEmbeddingSource(EmbeddingDump dump) : dump_(std::move(dump)) {
  for (std::size_t i = 0; i < dump_.records.size(); ++i) {
    if (!by_id_.emplace(dump_.records[i].id, i).second) {
      throw std::runtime_error("duplicate id in embedding dump: " + dump_.records[i].id);
    }
  }
}

std::vector<std::vector<float>> DumpEmbeddingSource::embed(std::span<const EmbedRequest> requests) {
  std::vector<std::vector<float>> out;
  out.reserve(requests.size());
  for (const auto& req : requests) {
    const auto it = by_id_.find(req.id);
    if (it == by_id_.end()) {
      throw std::runtime_error("embedding dump has no record for id '" + req.id + "'");
    }
    out.push_back(dump_.records[it->second].vec);
  }
  return out;
}

CandidatePool build_pool(EmbeddingSource& source, std::span<const SynonymEntry> candidates,
                         PoolMode mode, const ScriptConfig& scripts) {
  std::vector<EmbedRequest> requests;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (mode == PoolMode::L1Only && c.lang != LangTag::L1) continue;
    if (mode == PoolMode::L2Only && c.lang != LangTag::L2) continue;
    kept.push_back(i);
    requests.push_back({c.id, c.text});
  }
  const auto vecs = source.embed(requests);
  CandidatePool pool;
  pool.mode = mode;
  pool.entries.reserve(kept.size());
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const auto& c = candidates[kept[k]];
    PoolEntry e;
    e.id = c.id;
    e.lang = c.lang;
    e.folded_lang =
        c.lang == LangTag::CodeSwitched ? dominant_language(c.text, scripts) : c.lang;
    e.group = c.group;
    e.vec = vecs[k];
    pool.entries.push_back(std::move(e));
  }
  return pool;
}

namespace {

MetricsSummary summarize(std::span<const QueryMetrics* const> queries, const MetricsConfig& cfg) {
  MetricsSummary s;
  s.n_queries = queries.size();
  s.recalls.assign(cfg.recall_at.size(), 0.0);
  s.maps.assign(cfg.map_at.size(), 0.0);
  if (queries.empty()) return s;
  for (const QueryMetrics* q : queries) {
    for (std::size_t i = 0; i < s.recalls.size(); ++i) s.recalls[i] += q->recalls[i];
    for (std::size_t i = 0; i < s.maps.size(); ++i) s.maps[i] += q->maps[i];
  }
  for (auto& v : s.recalls) v /= static_cast<double>(queries.size());
  for (auto& v : s.maps) v /= static_cast<double>(queries.size());
  return s;
}

}  // namespace

MetricsReport evaluate_synonym(EmbeddingSource& source, const SynonymBenchmark& bench,
                               PoolMode mode, const MetricsConfig& config) {
  MetricsReport report;
  report.mode = mode;
  report.config = config;
  const CandidatePool pool = build_pool(source, bench.candidates, mode);

  std::unordered_map<std::string, std::vector<std::string>> group_ids;
  for (const auto& e : pool.entries) group_ids[e.group].push_back(e.id);

  std::vector<EmbedRequest> requests;
  requests.reserve(bench.queries.size());
  for (const auto& q : bench.queries) requests.push_back({q.id, q.text});
  const auto qvecs = source.embed(requests);

  for (std::size_t qi = 0; qi < bench.queries.size(); ++qi) {
    const auto& q = bench.queries[qi];
    std::vector<std::string> relevant_ids;
    if (const auto it = group_ids.find(q.group); it != group_ids.end()) {
      for (const auto& id : it->second) {
        if (id != q.id) relevant_ids.push_back(id);
      }
    }
    if (relevant_ids.empty()) {
      // No reachable relevant candidate in this pool mode.
      ++report.skipped;
      continue;
    }
    const IdSet relevant = IdSet::of(std::move(relevant_ids));
    const RankedList ranked = rank(qvecs[qi], pool, q.id, /*exclude_self=*/true);
    QueryMetrics m;
    m.query_id = q.id;
    m.lang = q.lang;
    m.group = q.group;
    for (std::size_t k : config.recall_at) {
      m.recalls.push_back(recall_at_k(ranked, relevant, k, config.capped_recall));
    }
    for (std::size_t k : config.map_at) m.maps.push_back(average_precision_at_k(ranked, relevant, k));
    report.per_query.push_back(std::move(m));
  }

  std::vector<const QueryMetrics*> all;
  std::map<LangTag, std::vector<const QueryMetrics*>> by_lang;
  for (const auto& q : report.per_query) {
    all.push_back(&q);
    by_lang[q.lang].push_back(&q);
  }
  report.overall = summarize(all, config);
  for (const auto& [lang, queries] : by_lang) report.by_lang[lang] = summarize(queries, config);
  return report;
}

std::string metrics_csv(const MetricsReport& report) {
  CsvBuilder csv({"pool_mode", "subcategory", "metric", "value", "n_queries", "skipped"});
  const std::string mode(to_string(report.mode));
  const std::string skipped = std::to_string(report.skipped);
  auto emit = [&](const std::string& subcat, const MetricsSummary& s) {
    for (std::size_t i = 0; i < report.config.recall_at.size(); ++i) {
      csv.add_row({mode, subcat, "r@" + std::to_string(report.config.recall_at[i]),
                   format_double(s.recalls[i]), std::to_string(s.n_queries), skipped});
    }
    for (std::size_t i = 0; i < report.config.map_at.size(); ++i) {
      csv.add_row({mode, subcat, "map@" + std::to_string(report.config.map_at[i]),
                   format_double(s.maps[i]), std::to_string(s.n_queries), skipped});
    }
  };
  emit("all", report.overall);
  for (const auto& [lang, summary] : report.by_lang) emit(std::string(to_string(lang)), summary);
  return csv.content();
}

std::string metrics_per_query_csv(const MetricsReport& report) {
  std::vector<std::string> header = {"query_id", "lang", "group"};
  for (std::size_t k : report.config.recall_at) header.push_back("r@" + std::to_string(k));
  for (std::size_t k : report.config.map_at) header.push_back("map@" + std::to_string(k));
  CsvBuilder csv(header);
  for (const auto& q : report.per_query) {
    std::vector<std::string> row = {q.query_id, std::string(to_string(q.lang)), q.group};
    for (double v : q.recalls) row.push_back(format_double(v));
    for (double v : q.maps) row.push_back(format_double(v));
    csv.add_row(row);
  }
  return csv.content();
}

LinearProbe train_probe(const Matrix<float>& x, std::span<const int> y,
                        std::vector<std::string> classes, const ProbeConfig& config) {
  if (x.rows == 0) throw std::invalid_argument("train_probe: empty training set");
  if (x.rows != y.size()) throw std::invalid_argument("train_probe: labels/rows mismatch");
  if (classes.empty()) throw std::invalid_argument("train_probe: empty class vocabulary");
  const std::size_t n_classes = classes.size();
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
      throw std::invalid_argument("train_probe: label out of range");
    }
  }
  LinearProbe probe;
  probe.classes = std::move(classes);
  Rng rng(derive_seed(config.seed, "probe-init"));
  probe.weights = Matrix<float>(n_classes, x.cols);
  glorot_init(probe.weights, rng);
  probe.bias.assign(n_classes, 0.0f);

  AdamState<float> opt_w, opt_b;
  opt_w.cfg = opt_b.cfg = AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8};

  Rng shuffle_rng(derive_seed(config.seed, "probe-shuffle"));
  std::vector<std::size_t> order(x.rows);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Matrix<float> gw(n_classes, x.cols);
  std::vector<float> gb(n_classes);
  std::vector<double> logits(n_classes);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t at = 0; at < order.size(); at += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - at);
      std::fill(gw.data.begin(), gw.data.end(), 0.0f);
      std::fill(gb.begin(), gb.end(), 0.0f);
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t i = order[at + b];
        const auto xi = x.row(i);
        double zmax = -1e300;
        for (std::size_t c = 0; c < n_classes; ++c) {
          double z = probe.bias[c];
          const auto w = probe.weights.row(c);
          for (std::size_t d = 0; d < xi.size(); ++d) z += static_cast<double>(w[d]) * xi[d];
          logits[c] = z;
          zmax = std::max(zmax, z);
        }
        double sum = 0.0;
        for (double z : logits) sum += std::exp(z - zmax);
        for (std::size_t c = 0; c < n_classes; ++c) {
          const double p = std::exp(logits[c] - zmax) / sum;
          const double g = (p - (static_cast<std::size_t>(y[i]) == c ? 1.0 : 0.0)) /
                           static_cast<double>(n);
          gb[c] += static_cast<float>(g);
          auto gwr = gw.row(c);
          for (std::size_t d = 0; d < xi.size(); ++d) {
            gwr[d] += static_cast<float>(g * xi[d]);
          }
        }
      }
      adam_step<float>(opt_w, probe.weights.data, gw.data);
      adam_step<float>(opt_b, probe.bias, gb);
    }
  }
  return probe;
}

double probe_acc_at_k(const LinearProbe& probe, const Matrix<float>& x, std::span<const int> y,
                      std::size_t k) {
  if (x.rows == 0) throw std::invalid_argument("probe_acc_at_k: empty test set");
  if (x.rows != y.size()) throw std::invalid_argument("probe_acc_at_k: labels/rows mismatch");
  if (k < 1) throw std::invalid_argument("probe_acc_at_k: k must be >= 1");
  const std::size_t n_classes = probe.classes.size();
  const std::size_t top = std::min(k, n_classes);
  std::size_t hits = 0;
  std::vector<std::pair<double, std::size_t>> scored(n_classes);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto xi = x.row(i);
    for (std::size_t c = 0; c < n_classes; ++c) {
      double z = probe.bias[c];
      const auto w = probe.weights.row(c);
      for (std::size_t d = 0; d < xi.size(); ++d) z += static_cast<double>(w[d]) * xi[d];
      scored[c] = {z, c};
    }
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(top),
                      scored.end(), [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;  // tie: ascending class index
                      });
    for (std::size_t r = 0; r < top; ++r) {
      if (scored[r].second == static_cast<std::size_t>(y[i])) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(x.rows);
}

std::vector<std::string> missing_train_classes(std::span<const int> y_train,
                                               std::span<const int> y_test,
                                               std::span<const std::string> classes) {
  std::vector<bool> in_train(classes.size(), false);
  for (int label : y_train) in_train[static_cast<std::size_t>(label)] = true;
  std::vector<bool> flagged(classes.size(), false);
  std::vector<std::string> missing;
  for (int label : y_test) {
    const auto i = static_cast<std::size_t>(label);
    if (!in_train[i] && !flagged[i]) {
      flagged[i] = true;
      missing.push_back(classes[i]);
    }
  }
  std::sort(missing.begin(), missing.end());
  return missing;
}

}  // namespace jobembed
