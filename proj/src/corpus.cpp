#include "jobembed/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "jobembed/io.hpp"
#include "jobembed/rng.hpp"

namespace jobembed {

namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void line_error(const std::filesystem::path& path, std::size_t line_no,
                             const std::string& what) {
  throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + what);
}

nlohmann::json parse_line(const std::filesystem::path& path, std::size_t line_no,
                          const std::string& line) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    line_error(path, line_no, std::string("malformed JSON: ") + e.what());
  }
}

std::string get_string(const nlohmann::json& j, const char* key,
                       const std::filesystem::path& path, std::size_t line_no,
                       bool required) {
  if (!j.contains(key)) {
    if (required) line_error(path, line_no, std::string("missing key '") + key + "'");
    return {};
  }
  if (!j[key].is_string()) {
    line_error(path, line_no, std::string("key '") + key + "' is not a string");
  }
  return j[key].get<std::string>();
}

// Applies fn to each non-empty line; returns the number of lines seen.
template <class Fn>
std::size_t for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing file: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    fn(line_no, line);
  }
  return line_no;
}

std::string indexed_id(char prefix, std::size_t i) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%c%06zu", prefix, i);
  return std::string(buf);
}

}  // namespace

void normalize_fields(std::vector<std::string>& fields) {
  std::sort(fields.begin(), fields.end());
  fields.erase(std::unique(fields.begin(), fields.end()), fields.end());
}

double iou(std::span<const std::string> fields_a, std::span<const std::string> fields_b) {
  if (fields_a.empty() || fields_b.empty()) {
    throw std::invalid_argument("iou: field sets must be non-empty");
  }
  // Inputs are sorted unique vectors; intersect by merge walk.
  std::size_t i = 0, j = 0, inter = 0;
  while (i < fields_a.size() && j < fields_b.size()) {
    const int cmp = fields_a[i].compare(fields_b[j]);
    if (cmp == 0) {
      ++inter;
      ++i;
      ++j;
    } else if (cmp < 0) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = fields_a.size() + fields_b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<JobPosting> load_postings(const std::filesystem::path& path, LoadReport* report) {
  std::vector<JobPosting> postings;
  std::unordered_set<std::string> seen_ids;
  const std::size_t lines = for_each_line(path, [&](std::size_t line_no, const std::string& line) {
    const nlohmann::json j = parse_line(path, line_no, line);
    JobPosting p;
    p.id = get_string(j, "id", path, line_no, true);
    if (p.id.empty()) line_error(path, line_no, "empty id");
    if (!seen_ids.insert(p.id).second) line_error(path, line_no, "duplicate id '" + p.id + "'");
    p.title_l1 = get_string(j, "title_l1", path, line_no, false);
    p.title_l2 = get_string(j, "title_l2", path, line_no, false);
    p.description = get_string(j, "description", path, line_no, false);
    if (p.title_l1.empty() && p.title_l2.empty()) {
      line_error(path, line_no, "posting has no title in either language");
    }
    if (!j.contains("job_fields") || !j["job_fields"].is_array()) {
      line_error(path, line_no, "missing key 'job_fields'");
    }
    for (const auto& f : j["job_fields"]) {
      if (!f.is_string()) line_error(path, line_no, "job_fields entries must be strings");
      p.job_fields.push_back(f.get<std::string>());
    }
    normalize_fields(p.job_fields);
    if (p.job_fields.empty()) line_error(path, line_no, "empty job_fields");
    postings.push_back(std::move(p));
  });
  if (report) {
    report->records = postings.size();
    if (lines == 0) report->warnings.push_back("empty postings file: " + path.string());
  }
  return postings;
}

SynonymBenchmark load_synonym_benchmark(const std::filesystem::path& path) {
  struct RawEntry {
    SynonymEntry entry;
    int role = -1;  // -1 none, 0 candidate, 1 query
  };
  std::vector<RawEntry> raw;
  bool any_role = false;
  for_each_line(path, [&](std::size_t line_no, const std::string& line) {
    const nlohmann::json j = parse_line(path, line_no, line);
    RawEntry r;
    r.entry.text = get_string(j, "text", path, line_no, true);
    if (r.entry.text.empty()) line_error(path, line_no, "empty text");
    r.entry.group = get_string(j, "group", path, line_no, true);
    if (r.entry.group.empty()) line_error(path, line_no, "empty group");
    const std::string lang = get_string(j, "lang", path, line_no, false);
    if (lang.empty()) {
      r.entry.lang = tag_language(r.entry.text);
    } else if (auto tag = lang_from_string(lang)) {
      r.entry.lang = *tag;
    } else {
      line_error(path, line_no, "unknown lang '" + lang + "' (expected l1|l2|cs)");
    }
    const std::string role = get_string(j, "role", path, line_no, false);
    if (!role.empty()) {
      any_role = true;
      if (role == "candidate") r.role = 0;
      else if (role == "query") r.role = 1;
      else line_error(path, line_no, "unknown role '" + role + "' (expected query|candidate)");
    }
    raw.push_back(std::move(r));
  });

  SynonymBenchmark bench;
  if (!any_role) {
    // Dictionary-style file: every record is a candidate and also queries its
    // own group; query ids reuse the candidate ids so rankings self-exclude.
    for (std::size_t i = 0; i < raw.size(); ++i) {
      raw[i].entry.id = indexed_id('c', i);
      bench.candidates.push_back(raw[i].entry);
      bench.queries.push_back(raw[i].entry);
    }
  } else {
    std::size_t ci = 0, qi = 0;
    for (auto& r : raw) {
      if (r.role == 1) {
        r.entry.id = indexed_id('q', qi++);
        bench.queries.push_back(std::move(r.entry));
      } else {
        r.entry.id = indexed_id('c', ci++);
        bench.candidates.push_back(std::move(r.entry));
      }
    }
  }

  std::unordered_set<std::string> candidate_groups;
  for (const auto& c : bench.candidates) candidate_groups.insert(c.group);
  for (const auto& q : bench.queries) {
    if (!candidate_groups.count(q.group)) {
      throw std::runtime_error(path.string() + ": query group '" + q.group +
                               "' has no candidates");
    }
  }
  return bench;
}

OccupationDataset load_occupation_dataset(const std::filesystem::path& path,
                                          std::uint64_t split_seed) {
  OccupationDataset data;
  std::size_t with_split = 0;
  for_each_line(path, [&](std::size_t line_no, const std::string& line) {
    const nlohmann::json j = parse_line(path, line_no, line);
    OccupationSample s;
    s.text = get_string(j, "text", path, line_no, true);
    s.label = get_string(j, "label", path, line_no, true);
    if (s.text.empty() || s.label.empty()) line_error(path, line_no, "empty text or label");
    const std::string split = get_string(j, "split", path, line_no, false);
    if (!split.empty()) {
      ++with_split;
      if (split == "train") s.split = Split::Train;
      else if (split == "val") s.split = Split::Val;
      else if (split == "test") s.split = Split::Test;
      else line_error(path, line_no, "unknown split '" + split + "'");
    }
    data.samples.push_back(std::move(s));
  });
  if (with_split != 0 && with_split != data.samples.size()) {
    throw std::runtime_error(path.string() + ": split given on some records but not all");
  }
  if (with_split == 0 && !data.samples.empty()) {
    // 80/10/10 by stable seeded shuffle; val and test both get floor(n/10).
    std::vector<std::size_t> order(data.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(split_seed, "occupation-split"));
    rng.shuffle(order);
    const std::size_t n = order.size();
    const std::size_t n_hold = n / 10;
    for (std::size_t pos = 0; pos < n; ++pos) {
      Split s = Split::Train;
      if (pos >= n - n_hold) s = Split::Test;
      else if (pos >= n - 2 * n_hold) s = Split::Val;
      data.samples[order[pos]].split = s;
    }
  }
  for (const auto& s : data.samples) data.labels.push_back(s.label);
  normalize_fields(data.labels);
  return data;
}

void save_postings(const std::filesystem::path& path, std::span<const JobPosting> postings) {
  std::string out;
  for (const auto& p : postings) {
    ordered_json j;
    j["id"] = p.id;
    j["title_l1"] = p.title_l1;
    j["title_l2"] = p.title_l2;
    j["description"] = p.description;
    j["job_fields"] = p.job_fields;
    out += j.dump();
    out += '\n';
  }
  atomic_write_file(path, out);
}

void save_synonym_benchmark(const std::filesystem::path& path, const SynonymBenchmark& bench) {
  std::string out;
  auto emit = [&](const SynonymEntry& e, const char* role) {
    ordered_json j;
    j["text"] = e.text;
    j["lang"] = std::string(to_string(e.lang));
    j["group"] = e.group;
    j["role"] = role;
    out += j.dump();
    out += '\n';
  };
  for (const auto& c : bench.candidates) emit(c, "candidate");
  for (const auto& q : bench.queries) emit(q, "query");
  atomic_write_file(path, out);
}

void save_occupation_dataset(const std::filesystem::path& path, const OccupationDataset& data) {
  std::string out;
  for (const auto& s : data.samples) {
    ordered_json j;
    j["text"] = s.text;
    j["label"] = s.label;
    j["split"] = s.split == Split::Train ? "train" : (s.split == Split::Val ? "val" : "test");
    out += j.dump();
    out += '\n';
  }
  atomic_write_file(path, out);
}

std::vector<TitlePair> build_translation_pairs(std::span<const JobPosting> postings,
                                               PairBuildReport* report) {
  std::vector<TitlePair> pairs;
  std::size_t skipped = 0;
  for (const auto& p : postings) {
    if (p.title_l1.empty() || p.title_l2.empty()) {
      ++skipped;
      continue;
    }
    pairs.push_back({p.title_l1, p.title_l2, p.id});
  }
  if (report) {
    report->pairs = pairs.size();
    report->skipped = skipped;
  }
  return pairs;
}

namespace {

const std::string& preferred_title(const JobPosting& p) {
  return p.title_l2.empty() ? p.title_l1 : p.title_l2;
}

}  // namespace

std::vector<MatchPair> sample_match_pairs(std::span<const JobPosting> postings,
                                          int negatives_per_positive, double threshold,
                                          std::uint64_t seed, MatchSampleReport* report) {
  if (postings.size() < 2) {
    throw std::invalid_argument("sample_match_pairs: need at least 2 postings");
  }
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("sample_match_pairs: threshold must be in (0,1]");
  }
  if (negatives_per_positive < 0) {
    throw std::invalid_argument("sample_match_pairs: negatives_per_positive must be >= 0");
  }
  constexpr int kMaxAttempts = 100;
  Rng rng(derive_seed(seed, "match-pairs"));
  std::vector<MatchPair> out;
  MatchSampleReport rep;
  for (std::size_t i = 0; i < postings.size(); ++i) {
    const JobPosting& anchor = postings[i];
    if (anchor.description.empty() || preferred_title(anchor).empty()) {
      ++rep.skipped_anchors;
      continue;
    }
    out.push_back({anchor.description, preferred_title(anchor), true, 1.0, anchor.id, anchor.id});
    ++rep.positives;
    for (int slot = 0; slot < negatives_per_positive; ++slot) {
      bool filled = false;
      for (int attempt = 0; attempt < kMaxAttempts && !filled; ++attempt) {
        const std::size_t j = rng.uniform_index(postings.size());
        if (j == i) continue;
        const JobPosting& other = postings[j];
        if (preferred_title(other).empty()) continue;
        const double score = iou(anchor.job_fields, other.job_fields);
        if (score < threshold) {  // strictly below; the boundary is never emitted
          out.push_back(
              {anchor.description, preferred_title(other), false, score, anchor.id, other.id});
          ++rep.negatives;
          filled = true;
        }
      }
      if (!filled) ++rep.shortfall;
    }
  }
  if (report) *report = rep;
  return out;
}

std::vector<TitlePair> load_title_pairs(const std::filesystem::path& path) {
  std::vector<TitlePair> pairs;
  for_each_line(path, [&](std::size_t line_no, const std::string& line) {
    const nlohmann::json j = parse_line(path, line_no, line);
    TitlePair p;
    p.l1_text = get_string(j, "l1", path, line_no, true);
    p.l2_text = get_string(j, "l2", path, line_no, true);
    p.source_id = get_string(j, "source_id", path, line_no, true);
    if (p.l1_text.empty() || p.l2_text.empty()) line_error(path, line_no, "empty title text");
    pairs.push_back(std::move(p));
  });
  return pairs;
}

void save_title_pairs(const std::filesystem::path& path, std::span<const TitlePair> pairs) {
  std::string out;
  for (const auto& p : pairs) {
    ordered_json j;
    j["l1"] = p.l1_text;
    j["l2"] = p.l2_text;
    j["source_id"] = p.source_id;
    out += j.dump();
    out += '\n';
  }
  atomic_write_file(path, out);
}

std::vector<MatchPair> load_match_pairs(const std::filesystem::path& path) {
  std::vector<MatchPair> pairs;
  for_each_line(path, [&](std::size_t line_no, const std::string& line) {
    const nlohmann::json j = parse_line(path, line_no, line);
    MatchPair p;
    p.description = get_string(j, "description", path, line_no, true);
    p.title = get_string(j, "title", path, line_no, true);
    const std::string label = get_string(j, "label", path, line_no, true);
    if (label == "positive") p.positive = true;
    else if (label == "negative") p.positive = false;
    else line_error(path, line_no, "unknown label '" + label + "'");
    if (!j.contains("iou") || !j["iou"].is_number()) line_error(path, line_no, "missing key 'iou'");
    p.iou_at_sampling = j["iou"].get<double>();
    p.anchor_id = get_string(j, "anchor_id", path, line_no, false);
    p.other_id = get_string(j, "other_id", path, line_no, false);
    pairs.push_back(std::move(p));
  });
  return pairs;
}

void save_match_pairs(const std::filesystem::path& path, std::span<const MatchPair> pairs) {
  std::string out;
  for (const auto& p : pairs) {
    ordered_json j;
    j["description"] = p.description;
    j["title"] = p.title;
    j["label"] = p.positive ? "positive" : "negative";
    j["iou"] = p.iou_at_sampling;
    j["anchor_id"] = p.anchor_id;
    j["other_id"] = p.other_id;
    out += j.dump();
    out += '\n';
  }
  atomic_write_file(path, out);
}

namespace {

// Synthetic generator internals. Token i of the L2 vocabulary translates to
// token i of the L1 vocabulary, so cross-lingual ground truth is exact.
struct SynthVocab {
  std::vector<std::string> l2;
  std::vector<std::string> l1;
};

SynthVocab make_vocab(std::size_t vocab_size, Rng& rng) {
  SynthVocab v;
  v.l2.reserve(vocab_size);
  v.l1.reserve(vocab_size);
  std::set<std::string> seen;
  while (v.l2.size() < vocab_size) {
    const std::size_t len = 3 + rng.uniform_index(4);
    std::string tok;
    for (std::size_t k = 0; k < len; ++k) {
      tok.push_back(static_cast<char>('a' + rng.uniform_index(26)));
    }
    if (seen.insert(tok).second) v.l2.push_back(std::move(tok));
  }
  seen.clear();
  while (v.l1.size() < vocab_size) {
    const std::size_t len = 2 + rng.uniform_index(3);
    std::string tok;
    for (std::size_t k = 0; k < len; ++k) {
      // Thai consonants, U+0E01..U+0E2E.
      encode_utf8(static_cast<char32_t>(0x0E01 + rng.uniform_index(0x2E)), tok);
    }
    if (seen.insert(tok).second) v.l1.push_back(std::move(tok));
  }
  return v;
}

std::string render_tokens(const std::vector<std::size_t>& toks, const std::vector<std::string>& forms) {
  std::string out;
  for (std::size_t k = 0; k < toks.size(); ++k) {
    if (k) out += ' ';
    out += forms[toks[k]];
  }
  return out;
}

// Token reordering/dropping/insertion; avoids sequences already emitted for
// the group when it can.
std::vector<std::size_t> make_variant(const std::vector<std::size_t>& tokens, Rng& rng,
                                      const std::vector<std::size_t>& pool,
                                      std::set<std::vector<std::size_t>>& emitted) {
  std::vector<std::size_t> best;
  for (int attempt = 0; attempt < 6; ++attempt) {
    std::vector<std::size_t> v = tokens;
    if (v.size() == 1) {
      const std::size_t extra = pool[rng.uniform_index(pool.size())];
      const std::size_t at = rng.uniform_index(2);
      v.insert(v.begin() + static_cast<std::ptrdiff_t>(at), extra);
    } else {
      const std::size_t r = 1 + rng.uniform_index(v.size() - 1);
      std::rotate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(r), v.end());
      if (v.size() >= 3 && rng.bernoulli(0.4)) v.pop_back();
    }
    best = v;
    if (v != tokens && emitted.insert(v).second) return v;
  }
  emitted.insert(best);
  return best;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(std::size_t n_postings, std::size_t n_fields,
                                          std::size_t vocab_size, std::uint64_t seed) {
  if (n_postings < 10) throw std::invalid_argument("generate_synthetic_corpus: n_postings >= 10");
  if (vocab_size < 50) throw std::invalid_argument("generate_synthetic_corpus: vocab_size >= 50");
  if (n_fields < 2 || n_fields > vocab_size) {
    throw std::invalid_argument("generate_synthetic_corpus: n_fields must be in [2, vocab_size]");
  }

  Rng rng(derive_seed(seed, "synthetic-corpus"));
  const SynthVocab vocab = make_vocab(vocab_size, rng);

  std::vector<std::string> field_names(n_fields);
  for (std::size_t f = 0; f < n_fields; ++f) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "field_%02zu", f);
    field_names[f] = buf;
  }
  // Disjoint topic pools: token t belongs to field t % n_fields.
  std::vector<std::vector<std::size_t>> pools(n_fields);
  for (std::size_t t = 0; t < vocab_size; ++t) pools[t % n_fields].push_back(t);

  SyntheticCorpus corpus;
  std::vector<std::vector<std::size_t>> title_tokens(n_postings);
  std::vector<std::size_t> primary_field(n_postings);

  for (std::size_t p = 0; p < n_postings; ++p) {
    JobPosting post;
    post.id = indexed_id('p', p);
    const std::size_t primary = rng.uniform_index(n_fields);
    primary_field[p] = primary;
    std::set<std::size_t> fields{primary};
    if (rng.bernoulli(0.35)) fields.insert(rng.uniform_index(n_fields));
    if (rng.bernoulli(0.10)) fields.insert(rng.uniform_index(n_fields));

    // The leading token always comes from the primary field's pool so the
    // occupation label stays recoverable from the title text.
    const std::size_t title_len = 1 + rng.uniform_index(4);
    auto& toks = title_tokens[p];
    toks.push_back(pools[primary][rng.uniform_index(pools[primary].size())]);
    while (toks.size() < title_len) {
      const std::size_t tok = rng.bernoulli(0.7)
                                  ? pools[primary][rng.uniform_index(pools[primary].size())]
                                  : rng.uniform_index(vocab_size);
      if (std::find(toks.begin(), toks.end(), tok) == toks.end()) toks.push_back(tok);
    }
    post.title_l2 = render_tokens(toks, vocab.l2);
    post.title_l1 = render_tokens(toks, vocab.l1);

    const std::size_t desc_len = 8 + rng.uniform_index(9);
    std::vector<std::size_t> field_list(fields.begin(), fields.end());
    std::string desc;
    for (std::size_t k = 0; k < desc_len; ++k) {
      const std::size_t f = field_list[rng.uniform_index(field_list.size())];
      const std::size_t tok = rng.bernoulli(0.75) ? pools[f][rng.uniform_index(pools[f].size())]
                                                  : rng.uniform_index(vocab_size);
      if (k) desc += ' ';
      desc += rng.bernoulli(0.25) ? vocab.l1[tok] : vocab.l2[tok];
    }
    post.description = std::move(desc);

    for (std::size_t f : fields) post.job_fields.push_back(field_names[f]);
    normalize_fields(post.job_fields);
    corpus.postings.push_back(std::move(post));
  }

  // Occupation samples: both title renderings labelled by the primary field.
  for (std::size_t p = 0; p < n_postings; ++p) {
    const std::string& label = field_names[primary_field[p]];
    corpus.occupations.samples.push_back({corpus.postings[p].title_l2, label, Split::Train});
    corpus.occupations.samples.push_back({corpus.postings[p].title_l1, label, Split::Train});
  }
  {
    std::vector<std::size_t> order(corpus.occupations.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng split_rng(derive_seed(seed, "synthetic-occupation-split"));
    split_rng.shuffle(order);
    const std::size_t n = order.size();
    const std::size_t n_hold = n / 10;
    for (std::size_t pos = 0; pos < n; ++pos) {
      Split s = Split::Train;
      if (pos >= n - n_hold) s = Split::Test;
      else if (pos >= n - 2 * n_hold) s = Split::Val;
      corpus.occupations.samples[order[pos]].split = s;
    }
    for (const auto& s : corpus.occupations.samples) corpus.occupations.labels.push_back(s.label);
    normalize_fields(corpus.occupations.labels);
  }

  // Synonym benchmark: variant titles (reordered/dropped tokens) form the
  // candidate groups; queries are further variants held out from training.
  Rng syn_rng(derive_seed(seed, "synthetic-synonyms"));
  const std::size_t n_groups = std::min(n_postings, std::max<std::size_t>(20, n_postings / 4));
  std::size_t ci = 0, qi = 0;
  for (std::size_t g = 0; g < n_groups; ++g) {
    const std::size_t p = g * n_postings / n_groups;
    const auto& toks = title_tokens[p];
    const auto& pool = pools[primary_field[p]];
    const std::string& group = corpus.postings[p].id;
    std::set<std::vector<std::size_t>> emitted{toks};

    for (int k = 0; k < 2; ++k) {
      const std::vector<std::size_t> v = make_variant(toks, syn_rng, pool, emitted);
      corpus.synonyms.candidates.push_back(
          {indexed_id('c', ci++), render_tokens(v, vocab.l2), LangTag::L2, group});
      corpus.synonyms.candidates.push_back(
          {indexed_id('c', ci++), render_tokens(v, vocab.l1), LangTag::L1, group});
    }

    const std::vector<std::size_t> qv = make_variant(toks, syn_rng, pool, emitted);
    SynonymEntry q;
    q.id = indexed_id('q', qi++);
    q.group = group;
    if (g % 19 == 18 && qv.size() >= 2) {
      std::string text;
      for (std::size_t k = 0; k < qv.size(); ++k) {
        if (k) text += ' ';
        text += (k % 2 == 0) ? vocab.l2[qv[k]] : vocab.l1[qv[k]];
      }
      q.text = std::move(text);
      q.lang = LangTag::CodeSwitched;
    } else if (g % 2 == 0) {
      q.text = render_tokens(qv, vocab.l2);
      q.lang = LangTag::L2;
    } else {
      q.text = render_tokens(qv, vocab.l1);
      q.lang = LangTag::L1;
    }
    corpus.synonyms.queries.push_back(std::move(q));
  }

  return corpus;
}

}  // namespace jobembed
