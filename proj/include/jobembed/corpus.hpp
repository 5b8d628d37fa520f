#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "jobembed/lang.hpp"

namespace jobembed {

// One recruitment posting. job_fields is kept sorted and de-duplicated.
struct JobPosting {
  std::string id;
  std::string title_l1;
  std::string title_l2;
  std::string description;
  std::vector<std::string> job_fields;
};

// Aligned bilingual title pair from a single posting.
struct TitlePair {
  std::string l1_text;
  std::string l2_text;
  std::string source_id;
};

// Description-title training pair. Negatives certify iou_at_sampling below
// the sampling threshold against the anchor posting's field set.
struct MatchPair {
  std::string description;
  std::string title;
  bool positive = false;
  double iou_at_sampling = 0.0;
  std::string anchor_id;
  std::string other_id;  // equals anchor_id for positives
};

struct SynonymEntry {
  std::string id;
  std::string text;
  LangTag lang = LangTag::L2;
  std::string group;
};

struct SynonymBenchmark {
  std::vector<SynonymEntry> queries;
  std::vector<SynonymEntry> candidates;
};

enum class Split { Train, Val, Test };

struct OccupationSample {
  std::string text;
  std::string label;
  Split split = Split::Train;
};

struct OccupationDataset {
  std::vector<OccupationSample> samples;
  std::vector<std::string> labels;  // sorted unique label vocabulary
};

// |A ∩ B| / |A ∪ B| over sorted unique field vectors. Throws on empty input.
double iou(std::span<const std::string> fields_a, std::span<const std::string> fields_b);

// Sorts and de-duplicates a field list in place.
void normalize_fields(std::vector<std::string>& fields);

struct LoadReport {
  std::size_t records = 0;
  std::vector<std::string> warnings;
};

// JSON-lines loaders. Malformed input throws with the 1-based line number.
std::vector<JobPosting> load_postings(const std::filesystem::path& path,
                                      LoadReport* report = nullptr);
SynonymBenchmark load_synonym_benchmark(const std::filesystem::path& path);

inline constexpr std::uint64_t kDefaultSplitSeed = 9601;

// Records without an explicit split are partitioned 80/10/10 by a stable
// seeded shuffle.
OccupationDataset load_occupation_dataset(const std::filesystem::path& path,
                                          std::uint64_t split_seed = kDefaultSplitSeed);

void save_postings(const std::filesystem::path& path, std::span<const JobPosting> postings);
void save_synonym_benchmark(const std::filesystem::path& path, const SynonymBenchmark& bench);
void save_occupation_dataset(const std::filesystem::path& path, const OccupationDataset& data);

struct PairBuildReport {
  std::size_t pairs = 0;
  std::size_t skipped = 0;  // postings lacking one of the titles
};

std::vector<TitlePair> build_translation_pairs(std::span<const JobPosting> postings,
                                               PairBuildReport* report = nullptr);

struct MatchSampleReport {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t shortfall = 0;        // negative slots that found no eligible posting
  std::size_t skipped_anchors = 0;  // postings without description or title
};

// One positive per posting plus up to negatives_per_positive sampled
// negatives whose field IoU with the anchor is strictly below threshold.
// Rejection sampling caps at 100 attempts per slot.
std::vector<MatchPair> sample_match_pairs(std::span<const JobPosting> postings,
                                          int negatives_per_positive, double threshold,
                                          std::uint64_t seed,
                                          MatchSampleReport* report = nullptr);

std::vector<TitlePair> load_title_pairs(const std::filesystem::path& path);
void save_title_pairs(const std::filesystem::path& path, std::span<const TitlePair> pairs);
std::vector<MatchPair> load_match_pairs(const std::filesystem::path& path);
void save_match_pairs(const std::filesystem::path& path, std::span<const MatchPair> pairs);

struct SyntheticCorpus {
  std::vector<JobPosting> postings;
  SynonymBenchmark synonyms;
  OccupationDataset occupations;
};

// Deterministic bilingual corpus with a bijective token mapping between a
// pseudo-L1 vocabulary (Thai codepoints) and a pseudo-L2 vocabulary (Latin),
// so ground-truth cross-lingual alignment is known exactly.
SyntheticCorpus generate_synthetic_corpus(std::size_t n_postings, std::size_t n_fields,
                                          std::size_t vocab_size, std::uint64_t seed);

}  // namespace jobembed
