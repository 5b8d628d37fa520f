#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jobembed/evalkit.hpp"

namespace jobembed {

enum class LogBase { E, Two, Ten };

std::string_view to_string(LogBase base);
std::optional<LogBase> log_base_from_string(std::string_view s);

struct LanguageDistribution {
  double p_l1 = 0.0;
  double p_l2 = 0.0;
};

// Counts L1/L2 tags and normalizes to proportions. Items must be pre-folded:
// code-switched texts count as their dominant script.
LanguageDistribution language_proportions(std::span<const LangTag> items);

inline constexpr double kLbklEpsilon = 1e-9;

// Directed divergence Σ_l gt_l · log(gt_l / pred_l). A zero
// gt component contributes 0; a zero pred component facing a positive gt one
// is smoothed by ε = 1e-9 and the pred distribution renormalized, keeping
// the metric finite exactly where bias is extreme.
double lbkl_per_query(const LanguageDistribution& gt, const LanguageDistribution& pred,
                      LogBase base = LogBase::E);

struct LbklQuery {
  std::string query_id;
  std::vector<LangTag> gt;    // language tags of the ground-truth list
  std::vector<LangTag> pred;  // language tags of the predicted list, best first
};

struct LBKLReport {
  std::size_t q = 0;  // evaluated queries
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<std::pair<std::string, double>> per_query;
  std::size_t skipped = 0;
  std::vector<std::string> skip_reasons;
};

// Per query the prediction is truncated to the ground-truth length (or
// pred_k when given), both lists become proportions, and the mean divergence
// over evaluated queries is reported.
LBKLReport lbkl(std::span<const LbklQuery> queries, std::optional<std::size_t> pred_k,
                LogBase base = LogBase::E);

// Full pipeline over a synonym benchmark: combined pool, ground truth = the
// query's group members, prediction = the ranked list.
LBKLReport lbkl_evaluate(EmbeddingSource& source, const SynonymBenchmark& bench,
                         std::optional<std::size_t> pred_k, LogBase base = LogBase::E,
                         const ScriptConfig& scripts = {});

struct HistogramReport {
  std::size_t top_k = 0;  // effective cutoff after clamping
  bool clamped = false;
  // Histograms over per-query language counts in the top-k, one per query
  // subcategory; index b = number of queries with exactly b candidates of
  // that language.
  std::map<LangTag, std::vector<std::size_t>> l1_hist;
  std::map<LangTag, std::vector<std::size_t>> l2_hist;
  std::map<LangTag, std::size_t> query_counts;
};

// Top-k language-frequency histogram over the combined pool, ignoring
// relevance. Pools smaller than top_k clamp the cutoff with a warning flag.
HistogramReport language_histogram(EmbeddingSource& source, const SynonymBenchmark& bench,
                                   std::size_t top_k = 100, const ScriptConfig& scripts = {});

std::string lbkl_csv(const LBKLReport& report, std::string_view benchmark_name);
std::string lbkl_per_query_csv(const LBKLReport& report);
std::string histogram_csv(const HistogramReport& report);

}  // namespace jobembed
