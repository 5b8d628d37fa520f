#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "jobembed/lang.hpp"
#include "jobembed/numcore.hpp"
#include "jobembed/rng.hpp"

namespace jobembed {

struct FeaturizerConfig {
  std::uint32_t hash_bits = 18;
  std::vector<int> ngram_orders = {2, 3, 4};
  ScriptConfig scripts{};

  std::size_t hash_dim() const { return std::size_t{1} << hash_bits; }
};

// Sparse hashed character-n-gram counts, indices sorted unique.
struct FeatureVector {
  std::vector<std::uint32_t> index;
  std::vector<float> count;
};

// Lowercases Latin letters, pads each order with '^'/'$' boundary marks, and
// hashes the n-grams of the codepoint sequence into hash_dim buckets.
FeatureVector featurize(std::string_view text, const FeaturizerConfig& cfg);

// Sentence encoder: sparse projection (hash_dim → dim) followed by dense
// hidden layers and L2 normalization.
template <class T>
struct EncoderModel {
  FeaturizerConfig feat;
  std::size_t dim = 128;
  Matrix<T> projection;  // hash_dim × dim
  std::vector<DenseLayer<T>> hidden;
};

template <class T>
EncoderModel<T> make_encoder(const FeaturizerConfig& feat, std::size_t dim,
                             std::size_t hidden_layers, Rng& rng) {
  EncoderModel<T> m;
  m.feat = feat;
  m.dim = dim;
  m.projection = Matrix<T>(feat.hash_dim(), dim);
  glorot_init(m.projection, rng);
  for (std::size_t i = 0; i < hidden_layers; ++i) {
    m.hidden.push_back(make_dense_layer<T>(dim, dim, Activation::Tanh, rng));
  }
  return m;
}

template <class T>
struct EncodeCache {
  std::vector<FeatureVector> feats;
  std::vector<DenseCache<T>> hidden;
  Matrix<T> prenorm;      // B × dim, output of the last hidden layer
  std::vector<T> norms;   // clamped at 1e-12
  Matrix<T> normalized;   // B × dim
};

namespace detail {
inline constexpr double kNormFloor = 1e-12;
}

template <class T>
Matrix<T> encode_features(const EncoderModel<T>& model, std::span<const FeatureVector> feats,
                          EncodeCache<T>* cache = nullptr) {
  if (feats.empty()) throw std::invalid_argument("encode: empty batch");
  const std::size_t batch = feats.size();
  Matrix<T> x(batch, model.dim);
  for (std::size_t b = 0; b < batch; ++b) {
    auto out = x.row(b);
    const auto& fv = feats[b];
    for (std::size_t k = 0; k < fv.index.size(); ++k) {
      const auto w = model.projection.row(fv.index[k]);
      const T c = static_cast<T>(fv.count[k]);
      for (std::size_t d = 0; d < out.size(); ++d) out[d] += c * w[d];
    }
  }
  if (cache) {
    cache->feats.assign(feats.begin(), feats.end());
    cache->hidden.resize(model.hidden.size());
  }
  for (std::size_t l = 0; l < model.hidden.size(); ++l) {
    x = dense_forward(model.hidden[l], x, cache ? &cache->hidden[l] : nullptr);
  }
  Matrix<T> out(batch, model.dim);
  std::vector<T> norms(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    double sq = 0.0;
    const auto row = x.row(b);
    for (T v : row) sq += static_cast<double>(v) * static_cast<double>(v);
    const T norm = static_cast<T>(std::max(std::sqrt(sq), detail::kNormFloor));
    norms[b] = norm;
    auto o = out.row(b);
    for (std::size_t d = 0; d < row.size(); ++d) o[d] = row[d] / norm;
  }
  if (cache) {
    cache->prenorm = std::move(x);
    cache->norms = std::move(norms);
    cache->normalized = out;
  }
  return out;
}

// Unit-norm embeddings for a batch of texts (rows aligned with input order).
template <class T>
Matrix<T> encode(const EncoderModel<T>& model, std::span<const std::string> texts,
                 EncodeCache<T>* cache = nullptr) {
  if (texts.empty()) throw std::invalid_argument("encode: empty batch");
  std::vector<FeatureVector> feats;
  feats.reserve(texts.size());
  for (const auto& t : texts) feats.push_back(featurize(t, model.feat));
  return encode_features(model, feats, cache);
}

// Accumulates encoder gradients across backward calls. Projection rows are
// kept in a sorted map so optimizer updates are deterministic.
template <class T>
struct EncoderGradBuilder {
  std::map<std::uint32_t, std::vector<T>> proj_rows;
  std::vector<DenseGrad<T>> hidden;

  void init(const EncoderModel<T>& model) {
    proj_rows.clear();
    hidden.assign(model.hidden.size(), DenseGrad<T>{});
    for (std::size_t l = 0; l < model.hidden.size(); ++l) {
      hidden[l].weights = Matrix<T>(model.hidden[l].out_dim(), model.hidden[l].in_dim());
      hidden[l].bias.assign(model.hidden[l].out_dim(), T{});
    }
  }
};

template <class T>
void encode_backward(const EncoderModel<T>& model, const EncodeCache<T>& cache,
                     const Matrix<T>& upstream, EncoderGradBuilder<T>& grads) {
  const std::size_t batch = cache.feats.size();
  if (upstream.rows != batch || upstream.cols != model.dim) {
    throw std::invalid_argument("encode_backward: upstream shape mismatch");
  }
  // Through y = x / ||x||: dL/dx = (g − (g·y) y) / ||x||.
  Matrix<T> gx(batch, model.dim);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto g = upstream.row(b);
    const auto y = cache.normalized.row(b);
    double dot = 0.0;
    for (std::size_t d = 0; d < g.size(); ++d) dot += static_cast<double>(g[d]) * y[d];
    auto out = gx.row(b);
    for (std::size_t d = 0; d < g.size(); ++d) {
      out[d] = static_cast<T>((static_cast<double>(g[d]) - dot * y[d]) / cache.norms[b]);
    }
  }
  Matrix<T> up = std::move(gx);
  for (std::size_t l = model.hidden.size(); l-- > 0;) {
    DenseGrad<T> layer_grad;
    up = dense_backward(model.hidden[l], cache.hidden[l], up, &layer_grad);
    auto& acc = grads.hidden[l];
    for (std::size_t k = 0; k < layer_grad.weights.size(); ++k) {
      acc.weights.data[k] += layer_grad.weights.data[k];
    }
    for (std::size_t k = 0; k < layer_grad.bias.size(); ++k) acc.bias[k] += layer_grad.bias[k];
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& fv = cache.feats[b];
    const auto g = up.row(b);
    for (std::size_t k = 0; k < fv.index.size(); ++k) {
      auto& row = grads.proj_rows[fv.index[k]];
      if (row.empty()) row.assign(model.dim, T{});
      const T c = static_cast<T>(fv.count[k]);
      for (std::size_t d = 0; d < row.size(); ++d) row[d] += c * g[d];
    }
  }
}

// Small MLP used for the two task heads.
template <class T>
struct Mlp {
  std::vector<DenseLayer<T>> layers;

  Matrix<T> forward(const Matrix<T>& input, std::vector<DenseCache<T>>* caches = nullptr) const {
    Matrix<T> x = input;
    if (caches) caches->resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      x = dense_forward(layers[l], x, caches ? &(*caches)[l] : nullptr);
    }
    return x;
  }

  Matrix<T> backward(const std::vector<DenseCache<T>>& caches, const Matrix<T>& upstream,
                     std::vector<DenseGrad<T>>* grads) const {
    if (grads) grads->assign(layers.size(), DenseGrad<T>{});
    Matrix<T> up = upstream;
    for (std::size_t l = layers.size(); l-- > 0;) {
      up = dense_backward(layers[l], caches[l], up, grads ? &(*grads)[l] : nullptr);
    }
    return up;
  }
};

// Match head: 2 dense layers of head_width over the NLI-combined vector,
// then one binary logit.
template <class T>
Mlp<T> make_match_head(std::size_t dim, std::size_t head_width, Rng& rng) {
  Mlp<T> head;
  head.layers.push_back(make_dense_layer<T>(head_width, 4 * dim, Activation::Relu, rng));
  head.layers.push_back(make_dense_layer<T>(head_width, head_width, Activation::Relu, rng));
  head.layers.push_back(make_dense_layer<T>(1, head_width, Activation::Identity, rng));
  return head;
}

// Field head: 2 dense layers of head_width, then one logit per field
// (multi-label, independent sigmoids).
template <class T>
Mlp<T> make_field_head(std::size_t dim, std::size_t n_fields, std::size_t head_width, Rng& rng) {
  Mlp<T> head;
  head.layers.push_back(make_dense_layer<T>(head_width, dim, Activation::Relu, rng));
  head.layers.push_back(make_dense_layer<T>(head_width, head_width, Activation::Relu, rng));
  head.layers.push_back(make_dense_layer<T>(n_fields, head_width, Activation::Identity, rng));
  return head;
}

// [u; v; |u − v|; u ⊙ v]
template <class T>
Matrix<T> nli_combine(const Matrix<T>& u, const Matrix<T>& v) {
  if (u.rows != v.rows || u.cols != v.cols) {
    throw std::invalid_argument("nli_combine: dimension mismatch");
  }
  const std::size_t d = u.cols;
  Matrix<T> out(u.rows, 4 * d);
  for (std::size_t b = 0; b < u.rows; ++b) {
    const auto ur = u.row(b);
    const auto vr = v.row(b);
    auto o = out.row(b);
    for (std::size_t k = 0; k < d; ++k) {
      o[k] = ur[k];
      o[d + k] = vr[k];
      o[2 * d + k] = std::abs(ur[k] - vr[k]);
      o[3 * d + k] = ur[k] * vr[k];
    }
  }
  return out;
}

template <class T>
void nli_combine_backward(const Matrix<T>& u, const Matrix<T>& v, const Matrix<T>& upstream,
                          Matrix<T>* grad_u, Matrix<T>* grad_v) {
  const std::size_t d = u.cols;
  if (upstream.rows != u.rows || upstream.cols != 4 * d) {
    throw std::invalid_argument("nli_combine_backward: upstream shape mismatch");
  }
  *grad_u = Matrix<T>(u.rows, d);
  *grad_v = Matrix<T>(u.rows, d);
  for (std::size_t b = 0; b < u.rows; ++b) {
    const auto ur = u.row(b);
    const auto vr = v.row(b);
    const auto g = upstream.row(b);
    auto gu = grad_u->row(b);
    auto gv = grad_v->row(b);
    for (std::size_t k = 0; k < d; ++k) {
      const T diff = ur[k] - vr[k];
      const T sign = diff > T{0} ? T{1} : (diff < T{0} ? T{-1} : T{0});
      gu[k] = g[k] + g[2 * d + k] * sign + g[3 * d + k] * vr[k];
      gv[k] = g[d + k] - g[2 * d + k] * sign + g[3 * d + k] * ur[k];
    }
  }
}

template <class T>
inline T sigmoid(T z) {
  if (z >= T{0}) return T{1} / (T{1} + std::exp(-z));
  const T e = std::exp(z);
  return e / (T{1} + e);
}

// P(positive) for description/title embedding pairs.
template <class T>
std::vector<T> match_forward(const Mlp<T>& head, const Matrix<T>& desc_emb,
                             const Matrix<T>& title_emb) {
  const Matrix<T> combined = nli_combine(desc_emb, title_emb);
  const Matrix<T> logits = head.forward(combined);
  std::vector<T> probs(logits.rows);
  for (std::size_t b = 0; b < logits.rows; ++b) probs[b] = sigmoid(logits(b, 0));
  return probs;
}

// Per-field probabilities, one independent sigmoid per class.
template <class T>
Matrix<T> field_forward(const Mlp<T>& head, const Matrix<T>& title_emb) {
  Matrix<T> probs = head.forward(title_emb);
  for (auto& z : probs.data) z = sigmoid(z);
  return probs;
}

// Trained model plus heads and the field vocabulary the field head indexes.
struct ModelBundle {
  EncoderModel<float> encoder;
  Mlp<float> match_head;
  Mlp<float> field_head;
  std::vector<std::string> field_names;
};

inline constexpr int kCheckpointVersion = 1;

// Binary checkpoint: one JSON header line with shapes and config, then raw
// little-endian float32 tensors in header order.
void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace jobembed
