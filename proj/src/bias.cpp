#include "jobembed/bias.hpp"

#include <cmath>
#include <unordered_map>

#include "jobembed/io.hpp"

namespace jobembed {

std::string_view to_string(LogBase base) {
  switch (base) {
    case LogBase::E: return "e";
    case LogBase::Two: return "2";
    case LogBase::Ten: return "10";
  }
  return "e";
}

std::optional<LogBase> log_base_from_string(std::string_view s) {
  if (s == "e") return LogBase::E;
  if (s == "2") return LogBase::Two;
  if (s == "10") return LogBase::Ten;
  return std::nullopt;
}

namespace {

double log_scale(LogBase base) {
  switch (base) {
    case LogBase::E: return 1.0;
    case LogBase::Two: return 1.0 / std::log(2.0);
    case LogBase::Ten: return 1.0 / std::log(10.0);
  }
  return 1.0;
}

void check_distribution(const LanguageDistribution& d, const char* what) {
  if (d.p_l1 < 0.0 || d.p_l2 < 0.0 || std::abs(d.p_l1 + d.p_l2 - 1.0) > 1e-6) {
    throw std::invalid_argument(std::string("lbkl_per_query: invalid ") + what +
                                " distribution");
  }
}

}  // namespace

LanguageDistribution language_proportions(std::span<const LangTag> items) {
  if (items.empty()) throw std::invalid_argument("language_proportions: empty list");
  std::size_t l1 = 0, l2 = 0;
  for (LangTag tag : items) {
    if (tag == LangTag::L1) ++l1;
    else if (tag == LangTag::L2) ++l2;
    else throw std::invalid_argument("language_proportions: unfolded code-switched item");
  }
  const double n = static_cast<double>(l1 + l2);
  return {static_cast<double>(l1) / n, static_cast<double>(l2) / n};
}

double lbkl_per_query(const LanguageDistribution& gt, const LanguageDistribution& pred,
                      LogBase base) {
  check_distribution(gt, "ground-truth");
  check_distribution(pred, "predicted");
  double q1 = pred.p_l1, q2 = pred.p_l2;
  const bool smooth1 = gt.p_l1 > 0.0 && q1 == 0.0;
  const bool smooth2 = gt.p_l2 > 0.0 && q2 == 0.0;
  if (smooth1 || smooth2) {
    if (smooth1) q1 = kLbklEpsilon;
    if (smooth2) q2 = kLbklEpsilon;
    const double total = q1 + q2;
    q1 /= total;
    q2 /= total;
  }
  double kl = 0.0;
  if (gt.p_l1 > 0.0) kl += gt.p_l1 * std::log(gt.p_l1 / q1);
  if (gt.p_l2 > 0.0) kl += gt.p_l2 * std::log(gt.p_l2 / q2);
  return kl * log_scale(base);
}

LBKLReport lbkl(std::span<const LbklQuery> queries, std::optional<std::size_t> pred_k,
                LogBase base) {
  LBKLReport report;
  double sum = 0.0;
  for (const auto& q : queries) {
    if (q.gt.empty()) {
      throw std::invalid_argument("lbkl: query '" + q.query_id + "' has empty ground truth");
    }
    const std::size_t cut = std::min(pred_k.value_or(q.gt.size()), q.pred.size());
    if (cut == 0) {
      ++report.skipped;
      report.skip_reasons.push_back(q.query_id + ": empty prediction after truncation");
      continue;
    }
    const LanguageDistribution gt = language_proportions(q.gt);
    const LanguageDistribution pred =
        language_proportions(std::span<const LangTag>(q.pred.data(), cut));
    const double d = lbkl_per_query(gt, pred, base);
    if (report.per_query.empty()) {
      report.min = report.max = d;
    } else {
      report.min = std::min(report.min, d);
      report.max = std::max(report.max, d);
    }
    report.per_query.emplace_back(q.query_id, d);
    sum += d;
  }
  report.q = report.per_query.size();
  report.mean = report.q == 0 ? 0.0 : sum / static_cast<double>(report.q);
  return report;
}

LBKLReport lbkl_evaluate(EmbeddingSource& source, const SynonymBenchmark& bench,
                         std::optional<std::size_t> pred_k, LogBase base,
                         const ScriptConfig& scripts) {
  const CandidatePool pool = build_pool(source, bench.candidates, PoolMode::Combined, scripts);
  std::unordered_map<std::string, std::vector<const PoolEntry*>> group_entries;
  for (const auto& e : pool.entries) group_entries[e.group].push_back(&e);

  std::vector<EmbedRequest> requests;
  requests.reserve(bench.queries.size());
  for (const auto& q : bench.queries) requests.push_back({q.id, q.text});
  const auto qvecs = source.embed(requests);

  std::vector<LbklQuery> queries;
  queries.reserve(bench.queries.size());
  std::vector<std::string> dropped;
  for (std::size_t qi = 0; qi < bench.queries.size(); ++qi) {
    const auto& q = bench.queries[qi];
    LbklQuery lq;
    lq.query_id = q.id;
    if (const auto it = group_entries.find(q.group); it != group_entries.end()) {
      for (const PoolEntry* e : it->second) {
        if (e->id != q.id) lq.gt.push_back(e->folded_lang);
      }
    }
    if (lq.gt.empty()) {
      dropped.push_back(q.id + ": no ground-truth candidates in pool");
      continue;
    }
    const RankedList ranked = rank(qvecs[qi], pool, q.id, /*exclude_self=*/true);
    const std::size_t want = pred_k.value_or(lq.gt.size());
    for (std::size_t r = 0; r < std::min(want, ranked.items.size()); ++r) {
      lq.pred.push_back(ranked.items[r].folded_lang);
    }
    queries.push_back(std::move(lq));
  }
  LBKLReport report = lbkl(queries, pred_k, base);
  report.skipped += dropped.size();
  for (auto& reason : dropped) report.skip_reasons.push_back(std::move(reason));
  return report;
}

HistogramReport language_histogram(EmbeddingSource& source, const SynonymBenchmark& bench,
                                   std::size_t top_k, const ScriptConfig& scripts) {
  if (top_k == 0) throw std::invalid_argument("language_histogram: top_k must be >= 1");
  const CandidatePool pool = build_pool(source, bench.candidates, PoolMode::Combined, scripts);
  HistogramReport report;
  report.top_k = std::min(top_k, pool.entries.size());
  report.clamped = report.top_k < top_k;

  std::vector<EmbedRequest> requests;
  requests.reserve(bench.queries.size());
  for (const auto& q : bench.queries) requests.push_back({q.id, q.text});
  const auto qvecs = source.embed(requests);

  for (std::size_t qi = 0; qi < bench.queries.size(); ++qi) {
    const auto& q = bench.queries[qi];
    const RankedList ranked = rank(qvecs[qi], pool, q.id, /*exclude_self=*/true);
    const std::size_t cut = std::min(report.top_k, ranked.items.size());
    std::size_t l1 = 0;
    for (std::size_t r = 0; r < cut; ++r) {
      if (ranked.items[r].folded_lang == LangTag::L1) ++l1;
    }
    const std::size_t l2 = cut - l1;
    auto& h1 = report.l1_hist[q.lang];
    auto& h2 = report.l2_hist[q.lang];
    if (h1.empty()) {
      h1.assign(report.top_k + 1, 0);
      h2.assign(report.top_k + 1, 0);
    }
    ++h1[l1];
    ++h2[l2];
    ++report.query_counts[q.lang];
  }
  return report;
}

std::string lbkl_csv(const LBKLReport& report, std::string_view benchmark_name) {
  CsvBuilder csv({"benchmark", "q", "mean_lbkl", "min", "max", "skipped"});
  csv.add_row({std::string(benchmark_name), std::to_string(report.q), format_double(report.mean),
               format_double(report.min), format_double(report.max),
               std::to_string(report.skipped)});
  return csv.content();
}

std::string lbkl_per_query_csv(const LBKLReport& report) {
  CsvBuilder csv({"query_id", "lbkl"});
  for (const auto& [id, d] : report.per_query) csv.add_row({id, format_double(d)});
  return csv.content();
}

std::string histogram_csv(const HistogramReport& report) {
  CsvBuilder csv({"subcategory", "language", "bin", "count"});
  for (const auto& [subcat, hist] : report.l1_hist) {
    for (std::size_t b = 0; b < hist.size(); ++b) {
      csv.add_row({std::string(to_string(subcat)), "l1", std::to_string(b),
                   std::to_string(hist[b])});
    }
  }
  for (const auto& [subcat, hist] : report.l2_hist) {
    for (std::size_t b = 0; b < hist.size(); ++b) {
      csv.add_row({std::string(to_string(subcat)), "l2", std::to_string(b),
                   std::to_string(hist[b])});
    }
  }
  return csv.content();
}

}  // namespace jobembed
