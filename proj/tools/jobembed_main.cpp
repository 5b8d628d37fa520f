#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "jobembed/bias.hpp"
#include "jobembed/corpus.hpp"
#include "jobembed/encoder.hpp"
#include "jobembed/evalkit.hpp"
#include "jobembed/io.hpp"
#include "jobembed/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace jobembed;

namespace {

// Every run drops a manifest beside its outputs: effective config, seed,
// format versions and input checksums, so outputs are reproducible from the
// manifest alone.
void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    std::uint64_t seed, const ordered_json& config,
                    const std::vector<fs::path>& inputs, const std::vector<std::string>& outputs) {
  ordered_json m;
  m["tool"] = "jobembed";
  m["subcommand"] = subcommand;
  m["seed"] = seed;
  m["format_versions"] = {{"checkpoint", kCheckpointVersion}, {"dump", kDumpVersion}};
  m["config"] = config;
  ordered_json ins = ordered_json::array();
  for (const auto& p : inputs) {
    ordered_json rec;
    rec["path"] = p.string();
    rec["fnv1a64"] = file_checksum(p);
    ins.push_back(rec);
  }
  m["inputs"] = ins;
  m["outputs"] = outputs;
  atomic_write_file(out_dir / (subcommand + ".manifest.json"), m.dump(2) + "\n");
}

struct SourceOptions {
  std::string model_path;
  std::string dump_path;
};

void add_source_options(CLI::App* cmd, SourceOptions& opts) {
  auto* model = cmd->add_option("--model", opts.model_path, "model checkpoint to encode with");
  auto* dump = cmd->add_option("--dump", opts.dump_path, "pre-computed embedding dump");
  model->excludes(dump);
  dump->excludes(model);
}

// Keeps whichever backing object the source needs alive.
struct SourceHolder {
  std::optional<ModelBundle> bundle;
  std::unique_ptr<EmbeddingSource> source;
  fs::path input;
};

SourceHolder open_source(const SourceOptions& opts) {
  SourceHolder holder;
  if (!opts.model_path.empty()) {
    holder.bundle = load_checkpoint(opts.model_path);
    holder.source = std::make_unique<ModelEmbeddingSource>(holder.bundle->encoder);
    holder.input = opts.model_path;
  } else if (!opts.dump_path.empty()) {
    holder.source = std::make_unique<DumpEmbeddingSource>(load_embedding_dump(opts.dump_path));
    holder.input = opts.dump_path;
  } else {
    throw std::runtime_error("one of --model or --dump is required");
  }
  return holder;
}

std::string occupation_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "o%06zu", i);
  return buf;
}

int run_gen_synthetic(std::size_t n, std::size_t n_fields, std::size_t vocab,
                      std::uint64_t seed, const fs::path& out_dir) {
  const SyntheticCorpus corpus = generate_synthetic_corpus(n, n_fields, vocab, seed);
  fs::create_directories(out_dir);
  save_postings(out_dir / "postings.jsonl", corpus.postings);
  save_synonym_benchmark(out_dir / "synonym.jsonl", corpus.synonyms);
  save_occupation_dataset(out_dir / "occupation.jsonl", corpus.occupations);
  ordered_json cfg;
  cfg["n_postings"] = n;
  cfg["n_fields"] = n_fields;
  cfg["vocab_size"] = vocab;
  write_manifest(out_dir, "gen-synthetic", seed, cfg, {},
                 {"postings.jsonl", "synonym.jsonl", "occupation.jsonl"});
  std::cout << "wrote " << corpus.postings.size() << " postings, "
            << corpus.synonyms.candidates.size() << " synonym candidates, "
            << corpus.synonyms.queries.size() << " queries, "
            << corpus.occupations.samples.size() << " occupation samples to " << out_dir.string()
            << "\n";
  return 0;
}

int run_build_pairs(const fs::path& postings_path, int negatives, double threshold,
                    std::uint64_t seed, const fs::path& out_dir) {
  LoadReport load_report;
  const auto postings = load_postings(postings_path, &load_report);
  for (const auto& w : load_report.warnings) std::cerr << "warning: " << w << "\n";

  PairBuildReport pair_report;
  const auto pairs = build_translation_pairs(postings, &pair_report);
  MatchSampleReport match_report;
  const auto matches = sample_match_pairs(postings, negatives, threshold, seed, &match_report);

  fs::create_directories(out_dir);
  save_title_pairs(out_dir / "title_pairs.jsonl", pairs);
  save_match_pairs(out_dir / "match_pairs.jsonl", matches);
  ordered_json cfg;
  cfg["negatives_per_positive"] = negatives;
  cfg["iou_threshold"] = threshold;
  write_manifest(out_dir, "build-pairs", seed, cfg, {postings_path},
                 {"title_pairs.jsonl", "match_pairs.jsonl"});
  std::cout << "title pairs: " << pair_report.pairs << " (skipped " << pair_report.skipped
            << "), match pairs: " << match_report.positives << " positive + "
            << match_report.negatives << " negative (shortfall " << match_report.shortfall
            << ", skipped anchors " << match_report.skipped_anchors << ")\n";
  return 0;
}

struct TrainCliOptions {
  std::string postings;
  std::string title_pairs;
  std::string match_pairs;
  std::string config_path;
  std::string out_dir;
  std::string tasks;
  int negatives = 1;
  double iou_threshold = 0.5;
  std::optional<double> lr, tau;
  std::optional<std::size_t> steps, batch, dim, hidden, head_width, checkpoint_every;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> hash_bits;
  bool symmetric = false;
  bool summed = false;
  bool freeze_heads = false;
  bool resample_negatives = false;
};

int run_train(const TrainCliOptions& opts) {
  TrainConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = train_config_from_json(nlohmann::json::parse(read_file(opts.config_path)));
  }
  if (opts.lr) cfg.learning_rate = *opts.lr;
  if (opts.tau) cfg.temperature = *opts.tau;
  if (opts.steps) cfg.steps = *opts.steps;
  if (opts.batch) cfg.batch_size = *opts.batch;
  if (opts.dim) cfg.dim = *opts.dim;
  if (opts.hidden) cfg.hidden_layers = *opts.hidden;
  if (opts.head_width) cfg.head_width = *opts.head_width;
  if (opts.checkpoint_every) cfg.checkpoint_every = *opts.checkpoint_every;
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.hash_bits) cfg.hash_bits = *opts.hash_bits;
  if (opts.symmetric) cfg.symmetric_contrastive = true;
  if (opts.summed) cfg.summed_loss = true;
  if (opts.freeze_heads) cfg.freeze_encoder_for_heads = true;
  if (opts.resample_negatives) cfg.resample_negatives_per_epoch = true;
  if (!opts.tasks.empty()) {
    cfg.task_jt = opts.tasks.find("jt") != std::string::npos;
    cfg.task_jd = opts.tasks.find("jd") != std::string::npos;
    cfg.task_jf = opts.tasks.find("jf") != std::string::npos;
    if (!cfg.task_jt && !cfg.task_jd && !cfg.task_jf) {
      throw std::runtime_error("--tasks selected no known task (expected e.g. jt,jd,jf)");
    }
  }

  std::vector<fs::path> inputs{opts.postings};
  const auto postings = load_postings(opts.postings);
  TrainData data;
  data.fields = build_field_training_set(postings);
  if (cfg.task_jt) {
    if (!opts.title_pairs.empty()) {
      data.title_pairs = load_title_pairs(opts.title_pairs);
      inputs.push_back(opts.title_pairs);
    } else {
      data.title_pairs = build_translation_pairs(postings);
    }
  }
  if (cfg.task_jd) {
    if (cfg.resample_negatives_per_epoch) {
      data.postings = postings;
      data.negatives_per_positive = opts.negatives;
      data.iou_threshold = opts.iou_threshold;
    } else if (!opts.match_pairs.empty()) {
      data.match_pairs = load_match_pairs(opts.match_pairs);
      inputs.push_back(opts.match_pairs);
    } else {
      data.match_pairs =
          sample_match_pairs(postings, opts.negatives, opts.iou_threshold, cfg.seed);
    }
  }

  const fs::path out_dir = opts.out_dir;
  fs::create_directories(out_dir);
  const TrainResult result = train(cfg, data, [&](std::size_t step, const ModelBundle& bundle) {
    char name[48];
    std::snprintf(name, sizeof(name), "checkpoint-step%06zu.bin", step);
    save_checkpoint(out_dir / name, bundle);
  });
  save_checkpoint(out_dir / "checkpoint.bin", result.bundle);
  atomic_write_file(out_dir / "loss_log.csv", loss_log_csv(result.loss_log));
  write_manifest(out_dir, "train", cfg.seed, train_config_to_json(cfg), inputs,
                 {"checkpoint.bin", "loss_log.csv"});

  const auto& first = result.loss_log.front().losses;
  const auto& last = result.loss_log.back().losses;
  auto show = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string("-");
  };
  std::cout << "trained " << cfg.steps << " steps; losses jt " << show(first.jt) << " -> "
            << show(last.jt) << ", jd " << show(first.jd) << " -> " << show(last.jd) << ", jf "
            << show(first.jf) << " -> " << show(last.jf) << "\n";
  return 0;
}

int run_encode(const SourceOptions& source_opts, const std::string& texts_path,
               const std::string& benchmark_path, const std::string& occupation_path,
               const fs::path& out_dir) {
  const int given = (!texts_path.empty()) + (!benchmark_path.empty()) + (!occupation_path.empty());
  if (given != 1) {
    throw std::runtime_error("exactly one of --texts, --benchmark, --occupation is required");
  }
  SourceHolder holder = open_source(source_opts);

  std::vector<EmbedRequest> requests;
  std::vector<DumpRecord> records;
  fs::path input;
  if (!benchmark_path.empty()) {
    input = benchmark_path;
    const SynonymBenchmark bench = load_synonym_benchmark(benchmark_path);
    std::set<std::string> seen;
    for (const auto& e : bench.candidates) {
      requests.push_back({e.id, e.text});
      records.push_back({e.id, e.lang, {}});
      seen.insert(e.id);
    }
    for (const auto& e : bench.queries) {
      if (seen.count(e.id)) continue;  // dictionary-style files reuse candidate ids
      requests.push_back({e.id, e.text});
      records.push_back({e.id, e.lang, {}});
    }
  } else if (!occupation_path.empty()) {
    input = occupation_path;
    const OccupationDataset data = load_occupation_dataset(occupation_path);
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
      requests.push_back({occupation_id(i), data.samples[i].text});
      LangTag lang = LangTag::L2;
      try {
        lang = tag_language(data.samples[i].text);
      } catch (const std::invalid_argument&) {
      }
      records.push_back({occupation_id(i), lang, {}});
    }
  } else {
    input = texts_path;
    std::ifstream in(texts_path);
    if (!in) throw std::runtime_error("missing file: " + texts_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      const std::string id = j.at("id").get<std::string>();
      const std::string text = j.at("text").get<std::string>();
      LangTag lang = LangTag::L2;
      if (j.contains("lang")) {
        const auto tag = lang_from_string(j["lang"].get<std::string>());
        if (!tag) {
          throw std::runtime_error(texts_path + ":" + std::to_string(line_no) + ": unknown lang");
        }
        lang = *tag;
      } else {
        try {
          lang = tag_language(text);
        } catch (const std::invalid_argument&) {
        }
      }
      requests.push_back({id, text});
      records.push_back({id, lang, {}});
    }
  }

  const auto vecs = holder.source->embed(requests);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].vec = vecs[i];
  fs::create_directories(out_dir);
  save_embedding_dump(out_dir / "dump.jsonl", holder.source->dim(), records);
  ordered_json cfg;
  cfg["count"] = records.size();
  cfg["dim"] = holder.source->dim();
  write_manifest(out_dir, "encode", 0, cfg, {holder.input, input}, {"dump.jsonl"});
  std::cout << "encoded " << records.size() << " texts (dim " << holder.source->dim() << ")\n";
  return 0;
}

int run_eval_synonym(const SourceOptions& source_opts, const std::string& benchmark_path,
                     const std::string& pool, std::vector<std::size_t> recall_at,
                     std::vector<std::size_t> map_at, bool capped, const fs::path& out_dir) {
  const auto mode = pool_mode_from_string(pool);
  if (!mode) throw std::runtime_error("unknown pool mode '" + pool + "' (l1|l2|combined)");
  SourceHolder holder = open_source(source_opts);
  const SynonymBenchmark bench = load_synonym_benchmark(benchmark_path);
  MetricsConfig mcfg;
  if (!recall_at.empty()) mcfg.recall_at = std::move(recall_at);
  if (!map_at.empty()) mcfg.map_at = std::move(map_at);
  mcfg.capped_recall = capped;
  const MetricsReport report = evaluate_synonym(*holder.source, bench, *mode, mcfg);

  fs::create_directories(out_dir);
  atomic_write_file(out_dir / "metrics.csv", metrics_csv(report));
  atomic_write_file(out_dir / "metrics_per_query.csv", metrics_per_query_csv(report));
  ordered_json cfg;
  cfg["pool"] = pool;
  cfg["recall_at"] = mcfg.recall_at;
  cfg["map_at"] = mcfg.map_at;
  cfg["capped_recall"] = mcfg.capped_recall;
  write_manifest(out_dir, "eval-synonym", 0, cfg, {holder.input, benchmark_path},
                 {"metrics.csv", "metrics_per_query.csv"});
  std::cout << "evaluated " << report.overall.n_queries << " queries (skipped " << report.skipped
            << ") on pool " << pool << "\n";
  for (std::size_t i = 0; i < mcfg.recall_at.size(); ++i) {
    std::cout << "  r@" << mcfg.recall_at[i] << " = " << format_double(report.overall.recalls[i])
              << "\n";
  }
  for (std::size_t i = 0; i < mcfg.map_at.size(); ++i) {
    std::cout << "  map@" << mcfg.map_at[i] << " = " << format_double(report.overall.maps[i])
              << "\n";
  }
  return 0;
}

int run_probe(const SourceOptions& source_opts, const std::string& occupation_path,
              std::size_t epochs, double lr, std::uint64_t seed, const fs::path& out_dir) {
  SourceHolder holder = open_source(source_opts);
  const OccupationDataset data = load_occupation_dataset(occupation_path);
  if (data.samples.empty()) throw std::runtime_error("occupation dataset is empty");

  std::vector<EmbedRequest> requests;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    requests.push_back({occupation_id(i), data.samples[i].text});
  }
  const auto vecs = holder.source->embed(requests);
  const std::size_t dim = holder.source->dim();

  auto subset = [&](Split split, Matrix<float>& x, std::vector<int>& y) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
      if (data.samples[i].split == split) idx.push_back(i);
    }
    x = Matrix<float>(idx.size(), dim);
    y.clear();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      std::copy(vecs[idx[r]].begin(), vecs[idx[r]].end(), x.row(r).begin());
      const auto it = std::lower_bound(data.labels.begin(), data.labels.end(),
                                       data.samples[idx[r]].label);
      y.push_back(static_cast<int>(it - data.labels.begin()));
    }
  };
  Matrix<float> x_train, x_val, x_test;
  std::vector<int> y_train, y_val, y_test;
  subset(Split::Train, x_train, y_train);
  subset(Split::Val, x_val, y_val);
  subset(Split::Test, x_test, y_test);
  if (x_train.rows == 0 || x_test.rows == 0) {
    throw std::runtime_error("occupation dataset needs non-empty train and test splits");
  }
  for (const auto& name : missing_train_classes(y_train, y_test, data.labels)) {
    std::cerr << "warning: class '" << name << "' present in test but absent in train\n";
  }

  ProbeConfig pcfg;
  pcfg.epochs = epochs;
  pcfg.learning_rate = lr;
  pcfg.seed = seed;
  const LinearProbe probe = train_probe(x_train, y_train, data.labels, pcfg);

  CsvBuilder csv({"split", "metric", "value", "n_samples"});
  auto emit = [&](const char* split, const Matrix<float>& x, std::span<const int> y) {
    if (x.rows == 0) return;
    for (std::size_t k : {std::size_t{1}, std::size_t{3}, std::size_t{5}}) {
      csv.add_row({split, "acc@" + std::to_string(k),
                   format_double(probe_acc_at_k(probe, x, y, k)), std::to_string(x.rows)});
    }
  };
  emit("val", x_val, y_val);
  emit("test", x_test, y_test);
  fs::create_directories(out_dir);
  csv.write(out_dir / "probe.csv");
  ordered_json cfg;
  cfg["epochs"] = epochs;
  cfg["learning_rate"] = lr;
  write_manifest(out_dir, "probe", seed, cfg, {holder.input, occupation_path}, {"probe.csv"});
  std::cout << "probe acc@1 (test) = "
            << format_double(probe_acc_at_k(probe, x_test, y_test, 1)) << " over " << x_test.rows
            << " samples\n";
  return 0;
}

int run_bias_lbkl(const SourceOptions& source_opts, const std::string& benchmark_path,
                  std::optional<std::size_t> pred_k, const std::string& log_base,
                  const fs::path& out_dir) {
  const auto base = log_base_from_string(log_base);
  if (!base) throw std::runtime_error("unknown log base '" + log_base + "' (e|2|10)");
  SourceHolder holder = open_source(source_opts);
  const SynonymBenchmark bench = load_synonym_benchmark(benchmark_path);
  const LBKLReport report = lbkl_evaluate(*holder.source, bench, pred_k, *base);

  fs::create_directories(out_dir);
  const std::string name = fs::path(benchmark_path).stem().string();
  atomic_write_file(out_dir / "lbkl.csv", lbkl_csv(report, name));
  atomic_write_file(out_dir / "lbkl_per_query.csv", lbkl_per_query_csv(report));
  ordered_json cfg;
  cfg["pred_k"] = pred_k ? ordered_json(*pred_k) : ordered_json(nullptr);
  cfg["log_base"] = log_base;
  write_manifest(out_dir, "bias-lbkl", 0, cfg, {holder.input, benchmark_path},
                 {"lbkl.csv", "lbkl_per_query.csv"});
  std::cout << "lbkl mean = " << format_double(report.mean) << " over " << report.q
            << " queries (skipped " << report.skipped << ")\n";
  return 0;
}

int run_bias_histogram(const SourceOptions& source_opts, const std::string& benchmark_path,
                       std::size_t top_k, const fs::path& out_dir) {
  SourceHolder holder = open_source(source_opts);
  const SynonymBenchmark bench = load_synonym_benchmark(benchmark_path);
  const HistogramReport report = language_histogram(*holder.source, bench, top_k);
  if (report.clamped) {
    std::cerr << "warning: pool smaller than top-k, clamped to " << report.top_k << "\n";
  }
  fs::create_directories(out_dir);
  atomic_write_file(out_dir / "histogram.csv", histogram_csv(report));
  ordered_json cfg;
  cfg["top_k"] = top_k;
  cfg["effective_top_k"] = report.top_k;
  write_manifest(out_dir, "bias-histogram", 0, cfg, {holder.input, benchmark_path},
                 {"histogram.csv"});
  std::cout << "histogram over top-" << report.top_k << " written\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"jobembed: bilingual recruitment-text embedding toolkit"};
  app.require_subcommand(1);
  int rc = 0;

  // gen-synthetic
  std::size_t gen_n = 2000, gen_fields = 28, gen_vocab = 400;
  std::uint64_t gen_seed = 0;
  std::string gen_out = "out";
  auto* gen = app.add_subcommand("gen-synthetic", "generate a synthetic bilingual corpus");
  gen->add_option("--n", gen_n, "number of postings")->check(CLI::PositiveNumber);
  gen->add_option("--fields", gen_fields, "number of job fields");
  gen->add_option("--vocab", gen_vocab, "token vocabulary size");
  gen->add_option("--seed", gen_seed, "run seed");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->callback([&] { rc = run_gen_synthetic(gen_n, gen_fields, gen_vocab, gen_seed, gen_out); });

  // build-pairs
  std::string bp_postings, bp_out = "out";
  int bp_negatives = 1;
  double bp_threshold = 0.5;
  std::uint64_t bp_seed = 0;
  auto* bp = app.add_subcommand("build-pairs", "build translation and match training pairs");
  bp->add_option("--postings", bp_postings, "postings JSON-lines file")->required();
  bp->add_option("--negatives", bp_negatives, "negatives per positive");
  bp->add_option("--iou-threshold", bp_threshold, "field IoU bound for negatives (strict <)");
  bp->add_option("--seed", bp_seed, "run seed");
  bp->add_option("--out", bp_out, "output directory")->required();
  bp->callback([&] { rc = run_build_pairs(bp_postings, bp_negatives, bp_threshold, bp_seed, bp_out); });

  // train
  TrainCliOptions tr;
  auto* train_cmd = app.add_subcommand("train", "train the multi-task dual encoder");
  train_cmd->add_option("--postings", tr.postings, "postings JSON-lines file")->required();
  train_cmd->add_option("--title-pairs", tr.title_pairs, "prebuilt title pairs (else derived)");
  train_cmd->add_option("--match-pairs", tr.match_pairs, "prebuilt match pairs (else sampled)");
  train_cmd->add_option("--config", tr.config_path, "flat JSON TrainConfig file");
  train_cmd->add_option("--negatives", tr.negatives, "negatives per positive when sampling");
  train_cmd->add_option("--iou-threshold", tr.iou_threshold, "IoU bound when sampling");
  train_cmd->add_option("--lr", tr.lr, "learning rate");
  train_cmd->add_option("--tau", tr.tau, "contrastive temperature");
  train_cmd->add_option("--steps", tr.steps, "training steps");
  train_cmd->add_option("--batch", tr.batch, "mini-batch size");
  train_cmd->add_option("--dim", tr.dim, "embedding dimension");
  train_cmd->add_option("--hash-bits", tr.hash_bits, "log2 of the feature hash space");
  train_cmd->add_option("--hidden-layers", tr.hidden, "encoder hidden layer count");
  train_cmd->add_option("--head-width", tr.head_width, "task head width");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "intermediate checkpoint period");
  train_cmd->add_option("--seed", tr.seed, "run seed");
  train_cmd->add_option("--tasks", tr.tasks, "comma list of enabled tasks (jt,jd,jf)");
  train_cmd->add_flag("--symmetric", tr.symmetric, "average both contrastive directions");
  train_cmd->add_flag("--summed", tr.summed, "one summed update instead of three sequential");
  train_cmd->add_flag("--freeze-encoder-heads", tr.freeze_heads,
                      "heads do not backpropagate into the encoder");
  train_cmd->add_flag("--resample-negatives", tr.resample_negatives,
                      "redraw JD negatives each epoch instead of a fixed pre-sampled set");
  train_cmd->add_option("--out", tr.out_dir, "output directory")->required();
  train_cmd->callback([&] { rc = run_train(tr); });

  // encode
  SourceOptions enc_source;
  std::string enc_texts, enc_bench, enc_occ, enc_out = "out";
  auto* enc = app.add_subcommand("encode", "write an embedding dump for texts");
  add_source_options(enc, enc_source);
  enc->add_option("--texts", enc_texts, "JSON-lines {id, text[, lang]} file");
  enc->add_option("--benchmark", enc_bench, "synonym benchmark file");
  enc->add_option("--occupation", enc_occ, "occupation dataset file");
  enc->add_option("--out", enc_out, "output directory")->required();
  enc->callback([&] { rc = run_encode(enc_source, enc_texts, enc_bench, enc_occ, enc_out); });

  // eval-synonym
  SourceOptions ev_source;
  std::string ev_bench, ev_pool = "combined", ev_out = "out";
  std::vector<std::size_t> ev_recall, ev_map;
  bool ev_capped = false;
  auto* ev = app.add_subcommand("eval-synonym", "retrieval metrics over a synonym benchmark");
  add_source_options(ev, ev_source);
  ev->add_option("--benchmark", ev_bench, "synonym benchmark file")->required();
  ev->add_option("--pool", ev_pool, "candidate pool mode: l1|l2|combined");
  ev->add_option("--recall-at", ev_recall, "recall cutoffs (default 5 10)");
  ev->add_option("--map-at", ev_map, "average-precision cutoffs (default 25)");
  ev->add_flag("--capped-recall", ev_capped, "divide recall by min(|relevant|, k)");
  ev->add_option("--out", ev_out, "output directory")->required();
  ev->callback([&] {
    rc = run_eval_synonym(ev_source, ev_bench, ev_pool, ev_recall, ev_map, ev_capped, ev_out);
  });

  // probe
  SourceOptions pr_source;
  std::string pr_occ, pr_out = "out";
  std::size_t pr_epochs = 100;
  double pr_lr = 0.05;
  std::uint64_t pr_seed = 0;
  auto* pr = app.add_subcommand("probe", "linear probe over frozen embeddings");
  add_source_options(pr, pr_source);
  pr->add_option("--occupation", pr_occ, "occupation dataset file")->required();
  pr->add_option("--epochs", pr_epochs, "probe training epochs");
  pr->add_option("--lr", pr_lr, "probe learning rate");
  pr->add_option("--seed", pr_seed, "run seed");
  pr->add_option("--out", pr_out, "output directory")->required();
  pr->callback([&] { rc = run_probe(pr_source, pr_occ, pr_epochs, pr_lr, pr_seed, pr_out); });

  // bias-lbkl
  SourceOptions lb_source;
  std::string lb_bench, lb_base = "e", lb_out = "out";
  std::optional<std::size_t> lb_pred_k;
  auto* lb = app.add_subcommand("bias-lbkl", "language-bias KL divergence over a benchmark");
  add_source_options(lb, lb_source);
  lb->add_option("--benchmark", lb_bench, "synonym benchmark file")->required();
  lb->add_option("--pred-k", lb_pred_k, "fixed predicted-list length (default: |ground truth|)");
  lb->add_option("--log-base", lb_base, "logarithm base: e|2|10");
  lb->add_option("--out", lb_out, "output directory")->required();
  lb->callback([&] { rc = run_bias_lbkl(lb_source, lb_bench, lb_pred_k, lb_base, lb_out); });

  // bias-histogram
  SourceOptions hg_source;
  std::string hg_bench, hg_out = "out";
  std::size_t hg_top_k = 100;
  auto* hg = app.add_subcommand("bias-histogram", "top-k language frequency histogram");
  add_source_options(hg, hg_source);
  hg->add_option("--benchmark", hg_bench, "synonym benchmark file")->required();
  hg->add_option("--top-k", hg_top_k, "ranking cutoff")->check(CLI::PositiveNumber);
  hg->add_option("--out", hg_out, "output directory")->required();
  hg->callback([&] { rc = run_bias_histogram(hg_source, hg_bench, hg_top_k, hg_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
