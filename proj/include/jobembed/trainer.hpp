#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jobembed/corpus.hpp"
#include "jobembed/encoder.hpp"
#include "jobembed/numcore.hpp"

namespace jobembed {

struct TrainConfig {
  double temperature = 0.05;
  std::size_t batch_size = 64;  // reference setting is 512; 64 is the desk-scale default
  double learning_rate = 3e-5;
  std::size_t steps = 200;
  std::uint64_t seed = 0;
  bool task_jt = true;
  bool task_jd = true;
  bool task_jf = true;
  bool symmetric_contrastive = false;
  bool summed_loss = false;  // one summed update instead of three sequential ones
  bool freeze_encoder_for_heads = false;
  bool resample_negatives_per_epoch = false;  // default: fixed pre-sampled set
  std::size_t dim = 128;
  std::uint32_t hash_bits = 18;
  std::size_t hidden_layers = 1;
  std::size_t head_width = 512;
  std::size_t checkpoint_every = 0;  // steps; 0 disables intermediate checkpoints
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg);

struct TaskLosses {
  std::optional<double> jt, jd, jf;
};

template <class T>
struct ContrastiveResult {
  double loss = 0.0;
  Matrix<T> grad_anchors;
  Matrix<T> grad_candidates;
};

namespace detail {

// One direction of the in-batch InfoNCE objective: softmax over candidates
// per anchor, positive on the diagonal, log-sum-exp stabilized by
// max-subtraction. Gradients accumulate scaled by `weight`.
template <class T>
double info_nce_direction(const Matrix<T>& anchors, const Matrix<T>& candidates, double tau,
                          double weight, Matrix<T>* grad_anchors, Matrix<T>* grad_candidates) {
  const std::size_t batch = anchors.rows;
  Matrix<double> logits(batch, batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto a = anchors.row(i);
    for (std::size_t j = 0; j < batch; ++j) {
      const auto c = candidates.row(j);
      double dot = 0.0;
      for (std::size_t d = 0; d < a.size(); ++d) {
        dot += static_cast<double>(a[d]) * static_cast<double>(c[d]);
      }
      logits(i, j) = dot / tau;
    }
  }
  double loss = 0.0;
  Matrix<double> dlogits(batch, batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto z = logits.row(i);
    double zmax = z[0];
    for (double v : z) zmax = std::max(zmax, v);
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double lse = zmax + std::log(sum);
    loss += lse - z[i];
    for (std::size_t j = 0; j < batch; ++j) {
      const double p = std::exp(z[j] - lse);
      dlogits(i, j) = (p - (i == j ? 1.0 : 0.0)) / static_cast<double>(batch);
    }
  }
  loss /= static_cast<double>(batch);
  if (grad_anchors) {
    for (std::size_t i = 0; i < batch; ++i) {
      auto ga = grad_anchors->row(i);
      for (std::size_t j = 0; j < batch; ++j) {
        const double coef = weight * dlogits(i, j) / tau;
        if (coef == 0.0) continue;
        const auto c = candidates.row(j);
        for (std::size_t d = 0; d < ga.size(); ++d) {
          ga[d] = static_cast<T>(static_cast<double>(ga[d]) + coef * c[d]);
        }
      }
    }
    for (std::size_t j = 0; j < batch; ++j) {
      auto gc = grad_candidates->row(j);
      for (std::size_t i = 0; i < batch; ++i) {
        const double coef = weight * dlogits(i, j) / tau;
        if (coef == 0.0) continue;
        const auto a = anchors.row(i);
        for (std::size_t d = 0; d < gc.size(); ++d) {
          gc[d] = static_cast<T>(static_cast<double>(gc[d]) + coef * a[d]);
        }
      }
    }
  }
  return loss;
}

template <class T>
void check_unit_rows(const Matrix<T>& m, const char* what) {
  for (std::size_t b = 0; b < m.rows; ++b) {
    double sq = 0.0;
    for (T v : m.row(b)) sq += static_cast<double>(v) * static_cast<double>(v);
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-3) {
      throw std::invalid_argument(std::string("contrastive_loss: ") + what + " row " +
                                  std::to_string(b) + " is not unit-norm");
    }
  }
}

}  // namespace detail

// Contrastive ranking loss over aligned unit-norm embedding batches:
// L = (1/B) Σ_i −log softmax_j(sim(a_i, c_j)/τ)[i] with in-batch negatives
// (N = B); perfect alignment drives it to 0.
template <class T>
ContrastiveResult<T> contrastive_loss(const Matrix<T>& anchors, const Matrix<T>& candidates,
                                      double tau, bool symmetric = false) {
  if (tau <= 0.0) throw std::invalid_argument("contrastive_loss: temperature must be > 0");
  if (anchors.rows != candidates.rows || anchors.cols != candidates.cols) {
    throw std::invalid_argument("contrastive_loss: batch shape mismatch");
  }
  if (anchors.rows < 2) {
    throw std::invalid_argument("contrastive_loss: batch size must be >= 2 for in-batch negatives");
  }
  detail::check_unit_rows(anchors, "anchors");
  detail::check_unit_rows(candidates, "candidates");
  ContrastiveResult<T> res;
  res.grad_anchors = Matrix<T>(anchors.rows, anchors.cols);
  res.grad_candidates = Matrix<T>(anchors.rows, anchors.cols);
  if (!symmetric) {
    res.loss = detail::info_nce_direction(anchors, candidates, tau, 1.0, &res.grad_anchors,
                                          &res.grad_candidates);
  } else {
    const double fwd = detail::info_nce_direction(anchors, candidates, tau, 0.5,
                                                  &res.grad_anchors, &res.grad_candidates);
    const double bwd = detail::info_nce_direction(candidates, anchors, tau, 0.5,
                                                  &res.grad_candidates, &res.grad_anchors);
    res.loss = 0.5 * (fwd + bwd);
  }
  return res;
}

// Task A through the encoder: contrastive alignment of translation pairs.
// Anchors are the L2 titles, candidates the L1 titles.
template <class T>
double jt_loss(const EncoderModel<T>& model, std::span<const TitlePair> batch, double tau,
               bool symmetric, EncoderGradBuilder<T>* grads) {
  if (batch.empty()) throw std::invalid_argument("jt_loss: empty batch");
  std::vector<std::string> l2_texts, l1_texts;
  l2_texts.reserve(batch.size());
  l1_texts.reserve(batch.size());
  for (const auto& p : batch) {
    l2_texts.push_back(p.l2_text);
    l1_texts.push_back(p.l1_text);
  }
  EncodeCache<T> cache_a, cache_c;
  const Matrix<T> anchors = encode(model, l2_texts, grads ? &cache_a : nullptr);
  const Matrix<T> candidates = encode(model, l1_texts, grads ? &cache_c : nullptr);
  const ContrastiveResult<T> res = contrastive_loss(anchors, candidates, tau, symmetric);
  if (grads) {
    encode_backward(model, cache_a, res.grad_anchors, *grads);
    encode_backward(model, cache_c, res.grad_candidates, *grads);
  }
  return res.loss;
}

namespace detail {

// d(mean BCE)/dz for one logit, numerically stable form of σ(z) − y scaled
// by the mean weight.
inline double bce_with_logit(double z, double y, double weight, double* dz) {
  const double loss = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  *dz = (sig - y) * weight;
  return loss * weight;
}

}  // namespace detail

// Task B: mean binary cross-entropy of the match head over description-title
// pairs. Gradients flow into the shared encoder unless frozen.
template <class T>
double jd_loss(const EncoderModel<T>& model, const Mlp<T>& head, std::span<const MatchPair> batch,
               EncoderGradBuilder<T>* enc_grads, std::vector<DenseGrad<T>>* head_grads,
               bool freeze_encoder = false) {
  if (batch.empty()) throw std::invalid_argument("jd_loss: empty batch");
  std::vector<std::string> descs, titles;
  descs.reserve(batch.size());
  titles.reserve(batch.size());
  for (const auto& p : batch) {
    descs.push_back(p.description);
    titles.push_back(p.title);
  }
  const bool want_grads = enc_grads != nullptr || head_grads != nullptr;
  EncodeCache<T> cache_d, cache_t;
  const Matrix<T> u = encode(model, descs, want_grads ? &cache_d : nullptr);
  const Matrix<T> v = encode(model, titles, want_grads ? &cache_t : nullptr);
  const Matrix<T> combined = nli_combine(u, v);
  std::vector<DenseCache<T>> head_cache;
  const Matrix<T> logits = head.forward(combined, want_grads ? &head_cache : nullptr);

  const double weight = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  Matrix<T> dlogits(logits.rows, 1);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    double dz = 0.0;
    loss += detail::bce_with_logit(static_cast<double>(logits(b, 0)),
                                   batch[b].positive ? 1.0 : 0.0, weight, &dz);
    dlogits(b, 0) = static_cast<T>(dz);
  }
  if (want_grads) {
    const Matrix<T> dcombined = head.backward(head_cache, dlogits, head_grads);
    if (enc_grads && !freeze_encoder) {
      Matrix<T> du, dv;
      nli_combine_backward(u, v, dcombined, &du, &dv);
      encode_backward(model, cache_d, du, *enc_grads);
      encode_backward(model, cache_t, dv, *enc_grads);
    }
  }
  return loss;
}

// Task C: multi-label field classification, mean BCE over batch and classes.
// Every target row must have at least one positive field.
template <class T>
double jf_loss(const EncoderModel<T>& model, const Mlp<T>& head,
               std::span<const std::string> titles, const Matrix<T>& targets,
               EncoderGradBuilder<T>* enc_grads, std::vector<DenseGrad<T>>* head_grads,
               bool freeze_encoder = false) {
  if (titles.empty()) throw std::invalid_argument("jf_loss: empty batch");
  if (targets.rows != titles.size()) throw std::invalid_argument("jf_loss: target rows mismatch");
  for (std::size_t b = 0; b < targets.rows; ++b) {
    bool any = false;
    for (const T& t : targets.row(b)) any = any || t > T{0};
    if (!any) {
      throw std::invalid_argument("jf_loss: all-zero target row " + std::to_string(b));
    }
  }
  const bool want_grads = enc_grads != nullptr || head_grads != nullptr;
  EncodeCache<T> cache;
  const Matrix<T> emb = encode(model, titles, want_grads ? &cache : nullptr);
  std::vector<DenseCache<T>> head_cache;
  const Matrix<T> logits = head.forward(emb, want_grads ? &head_cache : nullptr);

  const double weight = 1.0 / static_cast<double>(logits.rows * logits.cols);
  double loss = 0.0;
  Matrix<T> dlogits(logits.rows, logits.cols);
  for (std::size_t b = 0; b < logits.rows; ++b) {
    for (std::size_t c = 0; c < logits.cols; ++c) {
      double dz = 0.0;
      loss += detail::bce_with_logit(static_cast<double>(logits(b, c)),
                                     static_cast<double>(targets(b, c)), weight, &dz);
      dlogits(b, c) = static_cast<T>(dz);
    }
  }
  if (want_grads) {
    const Matrix<T> demb = head.backward(head_cache, dlogits, head_grads);
    if (enc_grads && !freeze_encoder) encode_backward(model, cache, demb, *enc_grads);
  }
  return loss;
}

// Field-classification training rows extracted from postings: one row per
// available title rendering, with a multi-hot target over the sorted field
// vocabulary.
struct FieldTrainingSet {
  std::vector<std::string> titles;
  Matrix<float> targets;
  std::vector<std::string> field_names;
};

FieldTrainingSet build_field_training_set(std::span<const JobPosting> postings);

struct TrainData {
  std::vector<TitlePair> title_pairs;
  std::vector<MatchPair> match_pairs;
  FieldTrainingSet fields;
  // Needed only when resample_negatives_per_epoch is set: each JD epoch
  // redraws match pairs from these postings.
  std::vector<JobPosting> postings;
  int negatives_per_positive = 1;
  double iou_threshold = 0.5;
};

struct LossLogRow {
  std::size_t step = 0;
  TaskLosses losses;
};

// Owns the model, heads and per-tensor Adam states; runs the multi-task
// schedule one mini-batch at a time.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<std::string> field_names);

  // Three sequential updates (JT then JD then JF), each a full
  // loss/backward/Adam cycle with weight 1.0; disabled tasks are skipped.
  // With summed_loss, one update is applied to the summed gradients.
  TaskLosses multi_task_step(std::span<const TitlePair> jt_batch,
                             std::span<const MatchPair> jd_batch,
                             std::span<const std::string> jf_titles,
                             const Matrix<float>& jf_targets);

  const ModelBundle& bundle() const { return bundle_; }
  ModelBundle& bundle() { return bundle_; }
  const TrainConfig& config() const { return cfg_; }
  std::size_t step_count() const { return steps_done_; }

 private:
  struct LayerOpt {
    AdamState<float> w, b;
  };

  void apply_encoder_grads(EncoderGradBuilder<float>& grads);
  void apply_head_grads(Mlp<float>& head, std::vector<LayerOpt>& opt,
                        std::vector<DenseGrad<float>>& grads);
  void accumulate_encoder(EncoderGradBuilder<float>& into, const EncoderGradBuilder<float>& from);

  TrainConfig cfg_;
  ModelBundle bundle_;
  AdamState<float> proj_opt_;
  std::vector<LayerOpt> hidden_opt_;
  std::vector<LayerOpt> match_opt_;
  std::vector<LayerOpt> field_opt_;
  std::size_t steps_done_ = 0;
};

struct TrainResult {
  ModelBundle bundle;
  std::vector<LossLogRow> loss_log;
};

using CheckpointHook = std::function<void(std::size_t step, const ModelBundle&)>;

// Full training loop: seeded per-epoch shuffling per task, `steps`
// mini-batches, loss log row per step.
TrainResult train(const TrainConfig& cfg, const TrainData& data,
                  const CheckpointHook& checkpoint_hook = {});

std::string loss_log_csv(std::span<const LossLogRow> rows);

}  // namespace jobembed
