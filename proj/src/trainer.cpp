#include "jobembed/trainer.hpp"

#include <algorithm>

#include "jobembed/io.hpp"

namespace jobembed {

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.temperature = j.value("temperature", cfg.temperature);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.steps = j.value("steps", cfg.steps);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.task_jt = j.value("task_jt", cfg.task_jt);
  cfg.task_jd = j.value("task_jd", cfg.task_jd);
  cfg.task_jf = j.value("task_jf", cfg.task_jf);
  cfg.symmetric_contrastive = j.value("symmetric_contrastive", cfg.symmetric_contrastive);
  cfg.summed_loss = j.value("summed_loss", cfg.summed_loss);
  cfg.freeze_encoder_for_heads = j.value("freeze_encoder_for_heads", cfg.freeze_encoder_for_heads);
  cfg.resample_negatives_per_epoch =
      j.value("resample_negatives_per_epoch", cfg.resample_negatives_per_epoch);
  cfg.dim = j.value("dim", cfg.dim);
  cfg.hash_bits = j.value("hash_bits", cfg.hash_bits);
  cfg.hidden_layers = j.value("hidden_layers", cfg.hidden_layers);
  cfg.head_width = j.value("head_width", cfg.head_width);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* known[] = {
        "temperature",    "batch_size", "learning_rate",
        "steps",          "seed",       "task_jt",
        "task_jd",        "task_jf",    "symmetric_contrastive",
        "summed_loss",    "freeze_encoder_for_heads",
        "resample_negatives_per_epoch",
        "dim",            "hash_bits",  "hidden_layers",
        "head_width",     "checkpoint_every"};
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return it.key() == k; }) == std::end(known)) {
      throw std::invalid_argument("unknown config key: " + it.key());
    }
  }
  return cfg;
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["temperature"] = cfg.temperature;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["steps"] = cfg.steps;
  j["seed"] = cfg.seed;
  j["task_jt"] = cfg.task_jt;
  j["task_jd"] = cfg.task_jd;
  j["task_jf"] = cfg.task_jf;
  j["symmetric_contrastive"] = cfg.symmetric_contrastive;
  j["summed_loss"] = cfg.summed_loss;
  j["freeze_encoder_for_heads"] = cfg.freeze_encoder_for_heads;
  j["resample_negatives_per_epoch"] = cfg.resample_negatives_per_epoch;
  j["dim"] = cfg.dim;
  j["hash_bits"] = cfg.hash_bits;
  j["hidden_layers"] = cfg.hidden_layers;
  j["head_width"] = cfg.head_width;
  j["checkpoint_every"] = cfg.checkpoint_every;
  return j;
}

FieldTrainingSet build_field_training_set(std::span<const JobPosting> postings) {
  FieldTrainingSet set;
  for (const auto& p : postings) {
    for (const auto& f : p.job_fields) set.field_names.push_back(f);
  }
  normalize_fields(set.field_names);
  std::vector<std::pair<std::string, const JobPosting*>> rows;
  for (const auto& p : postings) {
    if (!p.title_l2.empty()) rows.emplace_back(p.title_l2, &p);
    if (!p.title_l1.empty()) rows.emplace_back(p.title_l1, &p);
  }
  set.targets = Matrix<float>(rows.size(), set.field_names.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    set.titles.push_back(rows[r].first);
    for (const auto& f : rows[r].second->job_fields) {
      const auto it = std::lower_bound(set.field_names.begin(), set.field_names.end(), f);
      set.targets(r, static_cast<std::size_t>(it - set.field_names.begin())) = 1.0f;
    }
  }
  return set;
}

Trainer::Trainer(const TrainConfig& cfg, std::vector<std::string> field_names) : cfg_(cfg) {
  if (cfg.temperature <= 0.0) throw std::invalid_argument("TrainConfig: temperature must be > 0");
  if (cfg.task_jt && cfg.batch_size < 2) {
    throw std::invalid_argument("TrainConfig: batch_size must be >= 2 for the JT task");
  }
  if (cfg.task_jf && field_names.empty()) {
    throw std::invalid_argument("TrainConfig: JF task enabled but no field vocabulary");
  }
  FeaturizerConfig feat;
  feat.hash_bits = cfg.hash_bits;
  Rng rng(derive_seed(cfg.seed, "model-init"));
  bundle_.encoder = make_encoder<float>(feat, cfg.dim, cfg.hidden_layers, rng);
  bundle_.match_head = make_match_head<float>(cfg.dim, cfg.head_width, rng);
  bundle_.field_head =
      make_field_head<float>(cfg.dim, std::max<std::size_t>(field_names.size(), 1), cfg.head_width, rng);
  bundle_.field_names = std::move(field_names);

  const AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8};
  proj_opt_.cfg = adam;
  hidden_opt_.resize(bundle_.encoder.hidden.size());
  for (auto& o : hidden_opt_) o.w.cfg = o.b.cfg = adam;
  match_opt_.resize(bundle_.match_head.layers.size());
  for (auto& o : match_opt_) o.w.cfg = o.b.cfg = adam;
  field_opt_.resize(bundle_.field_head.layers.size());
  for (auto& o : field_opt_) o.w.cfg = o.b.cfg = adam;
}

void Trainer::apply_encoder_grads(EncoderGradBuilder<float>& grads) {
  std::vector<std::uint32_t> rows;
  rows.reserve(grads.proj_rows.size());
  Matrix<float> row_grads(grads.proj_rows.size(), bundle_.encoder.dim);
  std::size_t r = 0;
  for (const auto& [row, g] : grads.proj_rows) {
    rows.push_back(row);
    std::copy(g.begin(), g.end(), row_grads.row(r).begin());
    ++r;
  }
  adam_step_rows(proj_opt_, bundle_.encoder.projection, rows, row_grads);
  for (std::size_t l = 0; l < bundle_.encoder.hidden.size(); ++l) {
    auto& layer = bundle_.encoder.hidden[l];
    adam_step<float>(hidden_opt_[l].w, layer.weights.data, grads.hidden[l].weights.data);
    adam_step<float>(hidden_opt_[l].b, layer.bias, grads.hidden[l].bias);
  }
}

void Trainer::apply_head_grads(Mlp<float>& head, std::vector<LayerOpt>& opt,
                               std::vector<DenseGrad<float>>& grads) {
  for (std::size_t l = 0; l < head.layers.size(); ++l) {
    adam_step<float>(opt[l].w, head.layers[l].weights.data, grads[l].weights.data);
    adam_step<float>(opt[l].b, head.layers[l].bias, grads[l].bias);
  }
}

void Trainer::accumulate_encoder(EncoderGradBuilder<float>& into,
                                 const EncoderGradBuilder<float>& from) {
  for (const auto& [row, g] : from.proj_rows) {
    auto& dst = into.proj_rows[row];
    if (dst.empty()) dst.assign(g.size(), 0.0f);
    for (std::size_t d = 0; d < g.size(); ++d) dst[d] += g[d];
  }
  for (std::size_t l = 0; l < from.hidden.size(); ++l) {
    for (std::size_t k = 0; k < from.hidden[l].weights.size(); ++k) {
      into.hidden[l].weights.data[k] += from.hidden[l].weights.data[k];
    }
    for (std::size_t k = 0; k < from.hidden[l].bias.size(); ++k) {
      into.hidden[l].bias[k] += from.hidden[l].bias[k];
    }
  }
}

TaskLosses Trainer::multi_task_step(std::span<const TitlePair> jt_batch,
                                    std::span<const MatchPair> jd_batch,
                                    std::span<const std::string> jf_titles,
                                    const Matrix<float>& jf_targets) {
  TaskLosses losses;
  const std::size_t step_no = steps_done_ + 1;
  auto guard = [&](const char* task, double loss) {
    if (!std::isfinite(loss)) {
      throw std::runtime_error("task " + std::string(task) + ": non-finite loss at step " +
                               std::to_string(step_no));
    }
    return loss;
  };

  if (!cfg_.summed_loss) {
    // "One by one": each task runs a full loss/backward/Adam cycle.
    if (cfg_.task_jt) {
      EncoderGradBuilder<float> grads;
      grads.init(bundle_.encoder);
      losses.jt = guard("jt", jt_loss(bundle_.encoder, jt_batch, cfg_.temperature,
                                      cfg_.symmetric_contrastive, &grads));
      apply_encoder_grads(grads);
    }
    if (cfg_.task_jd) {
      EncoderGradBuilder<float> grads;
      grads.init(bundle_.encoder);
      std::vector<DenseGrad<float>> head_grads;
      losses.jd = guard("jd", jd_loss(bundle_.encoder, bundle_.match_head, jd_batch, &grads,
                                      &head_grads, cfg_.freeze_encoder_for_heads));
      if (!cfg_.freeze_encoder_for_heads) apply_encoder_grads(grads);
      apply_head_grads(bundle_.match_head, match_opt_, head_grads);
    }
    if (cfg_.task_jf) {
      EncoderGradBuilder<float> grads;
      grads.init(bundle_.encoder);
      std::vector<DenseGrad<float>> head_grads;
      losses.jf = guard("jf", jf_loss(bundle_.encoder, bundle_.field_head, jf_titles, jf_targets,
                                      &grads, &head_grads, cfg_.freeze_encoder_for_heads));
      if (!cfg_.freeze_encoder_for_heads) apply_encoder_grads(grads);
      apply_head_grads(bundle_.field_head, field_opt_, head_grads);
    }
  } else {
    EncoderGradBuilder<float> total;
    total.init(bundle_.encoder);
    std::vector<DenseGrad<float>> match_grads, field_grads;
    if (cfg_.task_jt) {
      EncoderGradBuilder<float> grads;
      grads.init(bundle_.encoder);
      losses.jt = guard("jt", jt_loss(bundle_.encoder, jt_batch, cfg_.temperature,
                                      cfg_.symmetric_contrastive, &grads));
      accumulate_encoder(total, grads);
    }
    if (cfg_.task_jd) {
      EncoderGradBuilder<float> grads;
      grads.init(bundle_.encoder);
      losses.jd = guard("jd", jd_loss(bundle_.encoder, bundle_.match_head, jd_batch, &grads,
                                      &match_grads, cfg_.freeze_encoder_for_heads));
      if (!cfg_.freeze_encoder_for_heads) accumulate_encoder(total, grads);
    }
    if (cfg_.task_jf) {
      EncoderGradBuilder<float> grads;
      grads.init(bundle_.encoder);
      losses.jf = guard("jf", jf_loss(bundle_.encoder, bundle_.field_head, jf_titles, jf_targets,
                                      &grads, &field_grads, cfg_.freeze_encoder_for_heads));
      if (!cfg_.freeze_encoder_for_heads) accumulate_encoder(total, grads);
    }
    apply_encoder_grads(total);
    if (cfg_.task_jd) apply_head_grads(bundle_.match_head, match_opt_, match_grads);
    if (cfg_.task_jf) apply_head_grads(bundle_.field_head, field_opt_, field_grads);
  }
  ++steps_done_;
  return losses;
}

namespace {

// Cycling mini-batch iterator with a seeded reshuffle at each epoch boundary.
class BatchCycler {
 public:
  BatchCycler(std::size_t n, std::uint64_t seed) : rng_(seed), indices_(n) {
    reshuffle();
  }

  std::vector<std::size_t> next(std::size_t k) {
    if (indices_.empty()) throw std::logic_error("BatchCycler: empty index set");
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      if (pos_ == indices_.size()) reshuffle();
      out.push_back(indices_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    for (std::size_t i = 0; i < indices_.size(); ++i) indices_[i] = i;
    rng_.shuffle(indices_);
    pos_ = 0;
  }

  Rng rng_;
  std::vector<std::size_t> indices_;
  std::size_t pos_ = 0;
};

// JD batches with optional per-epoch renegotiation of the negative set.
class MatchPairProvider {
 public:
  MatchPairProvider(const TrainConfig& cfg, const TrainData& data)
      : cfg_(cfg), data_(data), rng_(derive_seed(cfg.seed, "jd-shuffle")) {
    if (!cfg.task_jd) return;
    current_ = cfg_.resample_negatives_per_epoch ? resample() : data_.match_pairs;
    reshuffle();
  }

  std::vector<MatchPair> next(std::size_t k) {
    std::vector<MatchPair> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      if (pos_ == order_.size()) {
        ++epoch_;
        if (cfg_.resample_negatives_per_epoch) current_ = resample();
        reshuffle();
        if (current_.empty()) {
          throw std::runtime_error("train: JD sampling produced no match pairs");
        }
      }
      out.push_back(current_[order_[pos_++]]);
    }
    return out;
  }

 private:
  std::vector<MatchPair> resample() const {
    return sample_match_pairs(data_.postings, data_.negatives_per_positive, data_.iou_threshold,
                              derive_seed(cfg_.seed, "jd-resample-" + std::to_string(epoch_)));
  }

  void reshuffle() {
    order_.resize(current_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    rng_.shuffle(order_);
    pos_ = 0;
  }

  const TrainConfig& cfg_;
  const TrainData& data_;
  Rng rng_;
  std::vector<MatchPair> current_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace

TrainResult train(const TrainConfig& cfg, const TrainData& data,
                  const CheckpointHook& checkpoint_hook) {
  if (cfg.steps == 0) throw std::invalid_argument("train: steps must be >= 1");
  if (cfg.task_jt && data.title_pairs.empty()) {
    throw std::invalid_argument("train: JT task enabled but no title pairs");
  }
  if (cfg.task_jd) {
    if (cfg.resample_negatives_per_epoch) {
      if (data.postings.size() < 2) {
        throw std::invalid_argument("train: per-epoch resampling needs the postings");
      }
    } else if (data.match_pairs.empty()) {
      throw std::invalid_argument("train: JD task enabled but no match pairs");
    }
  }
  if (cfg.task_jf && data.fields.titles.empty()) {
    throw std::invalid_argument("train: JF task enabled but no field training rows");
  }

  Trainer trainer(cfg, data.fields.field_names);
  BatchCycler jt_cycle(data.title_pairs.size(), derive_seed(cfg.seed, "jt-shuffle"));
  MatchPairProvider jd_pairs(cfg, data);
  BatchCycler jf_cycle(data.fields.titles.size(), derive_seed(cfg.seed, "jf-shuffle"));

  TrainResult result;
  const std::size_t n_fields = data.fields.field_names.size();
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<TitlePair> jt_batch;
    std::vector<MatchPair> jd_batch;
    std::vector<std::string> jf_titles;
    Matrix<float> jf_targets;
    if (cfg.task_jt) {
      for (std::size_t i : jt_cycle.next(cfg.batch_size)) jt_batch.push_back(data.title_pairs[i]);
    }
    if (cfg.task_jd) jd_batch = jd_pairs.next(cfg.batch_size);
    if (cfg.task_jf) {
      const auto idx = jf_cycle.next(cfg.batch_size);
      jf_targets = Matrix<float>(idx.size(), n_fields);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        jf_titles.push_back(data.fields.titles[idx[r]]);
        std::copy(data.fields.targets.row(idx[r]).begin(), data.fields.targets.row(idx[r]).end(),
                  jf_targets.row(r).begin());
      }
    }
    const TaskLosses losses = trainer.multi_task_step(jt_batch, jd_batch, jf_titles, jf_targets);
    result.loss_log.push_back({step, losses});
    if (checkpoint_hook && cfg.checkpoint_every != 0 && step % cfg.checkpoint_every == 0 &&
        step != cfg.steps) {
      checkpoint_hook(step, trainer.bundle());
    }
  }
  result.bundle = std::move(trainer.bundle());
  return result;
}

std::string loss_log_csv(std::span<const LossLogRow> rows) {
  CsvBuilder csv({"step", "loss_jt", "loss_jd", "loss_jf"});
  auto cell = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
  };
  for (const auto& row : rows) {
    csv.add_row({std::to_string(row.step), cell(row.losses.jt), cell(row.losses.jd),
                 cell(row.losses.jf)});
  }
  return csv.content();
}

}  // namespace jobembed
