#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "jobembed/rng.hpp"

namespace jobembed {

// Row-major dense matrix. Instantiated with float for training storage and
// with double for gradient-check builds.
template <class T>
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::size_t size() const { return data.size(); }
  bool operator==(const Matrix&) const = default;
};

enum class Activation { Identity, Relu, Tanh };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

template <class T>
inline T activate(Activation a, T x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Relu: return x > T{0} ? x : T{0};
    case Activation::Tanh: return std::tanh(x);
  }
  return x;
}

// Derivative as a function of the pre-activation value.
template <class T>
inline T activate_grad(Activation a, T pre) {
  switch (a) {
    case Activation::Identity: return T{1};
    case Activation::Relu: return pre > T{0} ? T{1} : T{0};
    case Activation::Tanh: {
      const T t = std::tanh(pre);
      return T{1} - t * t;
    }
  }
  return T{1};
}

template <class T>
struct DenseLayer {
  Matrix<T> weights;    // out_dim × in_dim
  std::vector<T> bias;  // out_dim
  Activation act = Activation::Identity;

  std::size_t in_dim() const { return weights.cols; }
  std::size_t out_dim() const { return weights.rows; }
};

// Uniform Glorot init, ±sqrt(6 / (fan_in + fan_out)).
template <class T>
void glorot_init(Matrix<T>& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
  for (auto& x : w.data) x = static_cast<T>(rng.uniform_real(-limit, limit));
}

template <class T>
DenseLayer<T> make_dense_layer(std::size_t out_dim, std::size_t in_dim, Activation act, Rng& rng) {
  DenseLayer<T> layer;
  layer.weights = Matrix<T>(out_dim, in_dim);
  layer.bias.assign(out_dim, T{});
  layer.act = act;
  glorot_init(layer.weights, rng);
  return layer;
}

template <class T>
struct DenseCache {
  Matrix<T> input;   // B × in_dim
  Matrix<T> preact;  // B × out_dim
};

template <class T>
Matrix<T> dense_forward(const DenseLayer<T>& layer, const Matrix<T>& input,
                        DenseCache<T>* cache = nullptr) {
  if (input.cols != layer.in_dim()) {
    throw std::invalid_argument("dense_forward: input width " + std::to_string(input.cols) +
                                " != layer in_dim " + std::to_string(layer.in_dim()));
  }
  Matrix<T> preact(input.rows, layer.out_dim());
  for (std::size_t b = 0; b < input.rows; ++b) {
    const auto in = input.row(b);
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const auto w = layer.weights.row(o);
      double acc = static_cast<double>(layer.bias[o]);
      for (std::size_t i = 0; i < in.size(); ++i) acc += static_cast<double>(w[i]) * in[i];
      preact(b, o) = static_cast<T>(acc);
    }
  }
  Matrix<T> out(input.rows, layer.out_dim());
  for (std::size_t k = 0; k < out.size(); ++k) out.data[k] = activate(layer.act, preact.data[k]);
  if (cache) {
    cache->input = input;
    cache->preact = std::move(preact);
  }
  return out;
}

template <class T>
struct DenseGrad {
  Matrix<T> weights;
  std::vector<T> bias;
};

// Exact reverse-mode gradients of dense_forward. Gradients sum over the
// batch; returns the gradient with respect to the input.
template <class T>
Matrix<T> dense_backward(const DenseLayer<T>& layer, const DenseCache<T>& cache,
                         const Matrix<T>& upstream, DenseGrad<T>* grad) {
  if (upstream.rows != cache.input.rows || upstream.cols != layer.out_dim()) {
    throw std::invalid_argument("dense_backward: upstream shape mismatch");
  }
  if (grad) {
    grad->weights = Matrix<T>(layer.out_dim(), layer.in_dim());
    grad->bias.assign(layer.out_dim(), T{});
  }
  Matrix<T> grad_input(cache.input.rows, layer.in_dim());
  for (std::size_t b = 0; b < upstream.rows; ++b) {
    const auto in = cache.input.row(b);
    auto gin = grad_input.row(b);
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const T dpre = upstream(b, o) * activate_grad(layer.act, cache.preact(b, o));
      if (dpre == T{0}) continue;
      const auto w = layer.weights.row(o);
      if (grad) {
        auto gw = grad->weights.row(o);
        for (std::size_t i = 0; i < in.size(); ++i) gw[i] += dpre * in[i];
        grad->bias[o] += dpre;
      }
      for (std::size_t i = 0; i < in.size(); ++i) gin[i] += dpre * w[i];
    }
  }
  return grad_input;
}

struct AdamConfig {
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment buffers for one parameter tensor. Buffers are sized on first use.
template <class T>
struct AdamState {
  AdamConfig cfg{};
  long long step = 0;
  std::vector<T> m, v;
};

namespace detail {

template <class T>
void adam_prepare(AdamState<T>& s, std::size_t n_params) {
  if (s.m.empty()) {
    s.m.assign(n_params, T{});
    s.v.assign(n_params, T{});
  } else if (s.m.size() != n_params) {
    throw std::invalid_argument("adam_step: parameter size changed");
  }
}

template <class T>
void adam_check_finite(std::span<const T> grads, long long step) {
  for (const T& g : grads) {
    if (!std::isfinite(static_cast<double>(g))) {
      throw std::runtime_error("adam_step: non-finite gradient at step " +
                               std::to_string(step + 1));
    }
  }
}

template <class T>
inline void adam_update_one(AdamState<T>& s, std::size_t slot, T& param, T grad, double c1,
                            double c2) {
  const double g = static_cast<double>(grad);
  const double m = s.cfg.beta1 * static_cast<double>(s.m[slot]) + (1.0 - s.cfg.beta1) * g;
  const double v = s.cfg.beta2 * static_cast<double>(s.v[slot]) + (1.0 - s.cfg.beta2) * g * g;
  s.m[slot] = static_cast<T>(m);
  s.v[slot] = static_cast<T>(v);
  const double update = s.cfg.lr * (m / c1) / (std::sqrt(v / c2) + s.cfg.eps);
  param = static_cast<T>(static_cast<double>(param) - update);
}

}  // namespace detail

// Standard bias-corrected Adam update over one flat parameter tensor.
template <class T>
void adam_step(AdamState<T>& s, std::span<T> params, std::span<const T> grads) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: params/grads size mismatch");
  }
  detail::adam_prepare(s, params.size());
  detail::adam_check_finite(grads, s.step);
  ++s.step;
  const double c1 = 1.0 - std::pow(s.cfg.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.cfg.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    detail::adam_update_one(s, i, params[i], grads[i], c1, c2);
  }
}

// Lazy Adam over a row-subset of a matrix parameter: only the listed rows'
// moments and values move. rows must be sorted unique; row_grads holds one
// gradient row per listed row.
template <class T>
void adam_step_rows(AdamState<T>& s, Matrix<T>& params, std::span<const std::uint32_t> rows,
                    const Matrix<T>& row_grads) {
  if (rows.size() != row_grads.rows || row_grads.cols != params.cols) {
    throw std::invalid_argument("adam_step_rows: row gradient shape mismatch");
  }
  detail::adam_prepare(s, params.size());
  detail::adam_check_finite(std::span<const T>(row_grads.data), s.step);
  ++s.step;
  const double c1 = 1.0 - std::pow(s.cfg.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.cfg.beta2, static_cast<double>(s.step));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t base = static_cast<std::size_t>(rows[r]) * params.cols;
    const auto g = row_grads.row(r);
    for (std::size_t c = 0; c < params.cols; ++c) {
      detail::adam_update_one(s, base + c, params.data[base + c], g[c], c1, c2);
    }
  }
}

struct ParamRef {
  double* data;
  std::size_t size;
};

// Central differences against analytic gradients, in 64-bit. Returns the
// max over parameters of |g_a − g_fd| / max(|g_a|, |g_fd|, 1e-8).
double finite_difference_check(std::span<const ParamRef> params,
                               std::span<const std::vector<double>> analytic,
                               const std::function<double()>& loss_fn, double epsilon = 1e-4);

}  // namespace jobembed
