#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jobembed/corpus.hpp"
#include "jobembed/encoder.hpp"
#include "jobembed/numcore.hpp"

namespace jobembed {

enum class PoolMode { L1Only, L2Only, Combined };

std::string_view to_string(PoolMode mode);
std::optional<PoolMode> pool_mode_from_string(std::string_view s);

struct PoolEntry {
  std::string id;
  LangTag lang = LangTag::L2;       // as tagged in the benchmark
  LangTag folded_lang = LangTag::L2;  // code-switched folded onto the dominant script
  std::string group;
  std::vector<float> vec;
};

struct CandidatePool {
  PoolMode mode = PoolMode::Combined;
  std::vector<PoolEntry> entries;
};

struct RankedItem {
  std::string id;
  double score = 0.0;
  LangTag folded_lang = LangTag::L2;
  std::string group;
};

struct RankedList {
  std::string query_id;
  std::vector<RankedItem> items;  // scores non-increasing, ties by ascending id
};

// Full descending cosine ordering over the pool; deterministic tie-break by
// ascending candidate id. The query's own id is dropped when exclude_self.
RankedList rank(std::span<const float> query_vec, const CandidatePool& pool,
                std::string_view query_id, bool exclude_self);

struct IdSet {
  std::vector<std::string> ids;  // sorted unique

  static IdSet of(std::vector<std::string> ids);
  bool contains(const std::string& id) const;
  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

// |top-k ∩ relevant| / |relevant| (or min(|relevant|, k) when capped).
double recall_at_k(const RankedList& ranked, const IdSet& relevant, std::size_t k,
                   bool capped = false);

// Truncated average precision with denominator min(|relevant|, k).
double average_precision_at_k(const RankedList& ranked, const IdSet& relevant,
                              std::size_t k = 25);

// Anything that turns (id, text) requests into unit-norm embeddings: a
// trained encoder or a pre-computed dump keyed by id.
struct EmbedRequest {
  std::string id;
  std::string text;
};

class EmbeddingSource {
 public:
  virtual ~EmbeddingSource() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<std::vector<float>> embed(std::span<const EmbedRequest> requests) = 0;
};

class ModelEmbeddingSource final : public EmbeddingSource {
 public:
  explicit ModelEmbeddingSource(const EncoderModel<float>& model) : model_(model) {}
  std::size_t dim() const override { return model_.dim; }
  std::vector<std::vector<float>> embed(std::span<const EmbedRequest> requests) override;

 private:
  const EncoderModel<float>& model_;
};

struct DumpRecord {
  std::string id;
  LangTag lang = LangTag::L2;
  std::vector<float> vec;
};

struct EmbeddingDump {
  std::size_t dim = 0;
  std::vector<DumpRecord> records;
  std::size_t renormalized = 0;  // records whose norm deviated more than 1e-3 on load
};

inline constexpr int kDumpVersion = 1;

// JSON-lines dump: header {format_version, dim, count} then {id, lang,
// vector}. Vectors are L2-normalized on load.
EmbeddingDump load_embedding_dump(const std::filesystem::path& path);
void save_embedding_dump(const std::filesystem::path& path, std::size_t dim,
                         std::span<const DumpRecord> records);

class DumpEmbeddingSource final : public EmbeddingSource {
 public:
  explicit DumpEmbeddingSource(EmbeddingDump dump);
  std::size_t dim() const override { return dump_.dim; }
  std::vector<std::vector<float>> embed(std::span<const EmbedRequest> requests) override;

 private:
  EmbeddingDump dump_;
  std::map<std::string, std::size_t> by_id_;
};

struct MetricsConfig {
  std::vector<std::size_t> recall_at = {5, 10};
  std::vector<std::size_t> map_at = {25};
  bool capped_recall = false;
};

struct QueryMetrics {
  std::string query_id;
  LangTag lang = LangTag::L2;
  std::string group;
  std::vector<double> recalls;  // aligned with MetricsConfig::recall_at
  std::vector<double> maps;     // aligned with MetricsConfig::map_at
};

struct MetricsSummary {
  std::size_t n_queries = 0;
  std::vector<double> recalls;
  std::vector<double> maps;
};

struct MetricsReport {
  PoolMode mode = PoolMode::Combined;
  MetricsConfig config;
  std::vector<QueryMetrics> per_query;
  std::size_t skipped = 0;  // queries whose group is absent from the pool
  MetricsSummary overall;
  std::map<LangTag, MetricsSummary> by_lang;
};

// Retrieval protocol over a synonym benchmark: pool per mode, relevance by
// shared group id, micro-average = unweighted mean over evaluated queries,
// subcategory breakdown by query language tag.
MetricsReport evaluate_synonym(EmbeddingSource& source, const SynonymBenchmark& bench,
                               PoolMode mode, const MetricsConfig& config = {});

// Builds the filtered pool (embedding candidates through the source).
CandidatePool build_pool(EmbeddingSource& source, std::span<const SynonymEntry> candidates,
                         PoolMode mode, const ScriptConfig& scripts = {});

std::string metrics_csv(const MetricsReport& report);
std::string metrics_per_query_csv(const MetricsReport& report);

struct ProbeConfig {
  std::size_t epochs = 100;
  double learning_rate = 0.05;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

// Single linear layer over frozen embeddings, trained with Adam + softmax
// cross-entropy.
struct LinearProbe {
  Matrix<float> weights;  // n_classes × dim
  std::vector<float> bias;
  std::vector<std::string> classes;
};

LinearProbe train_probe(const Matrix<float>& x, std::span<const int> y,
                        std::vector<std::string> classes, const ProbeConfig& config = {});

// Fraction of samples whose true label is among the top-k probe scores;
// ties break by ascending class index.
double probe_acc_at_k(const LinearProbe& probe, const Matrix<float>& x, std::span<const int> y,
                      std::size_t k);

// Class names that occur in the test labels but never in train.
std::vector<std::string> missing_train_classes(std::span<const int> y_train,
                                               std::span<const int> y_test,
                                               std::span<const std::string> classes);

}  // namespace jobembed
