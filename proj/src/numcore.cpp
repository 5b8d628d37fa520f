#include "jobembed/numcore.hpp"

#include <algorithm>

namespace jobembed {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "identity";
}

Activation activation_from_string(std::string_view s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + std::string(s));
}

double finite_difference_check(std::span<const ParamRef> params,
                               std::span<const std::vector<double>> analytic,
                               const std::function<double()>& loss_fn, double epsilon) {
  if (params.size() != analytic.size()) {
    throw std::invalid_argument("finite_difference_check: params/analytic count mismatch");
  }
  double max_rel = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size != analytic[t].size()) {
      throw std::invalid_argument("finite_difference_check: tensor size mismatch");
    }
    for (std::size_t i = 0; i < params[t].size; ++i) {
      double& p = params[t].data[i];
      const double saved = p;
      p = saved + epsilon;
      const double up = loss_fn();
      p = saved - epsilon;
      const double down = loss_fn();
      p = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw std::runtime_error("finite_difference_check: non-finite loss at perturbed point");
      }
      const double g_fd = (up - down) / (2.0 * epsilon);
      const double g_a = analytic[t][i];
      const double rel = std::abs(g_a - g_fd) / std::max({std::abs(g_a), std::abs(g_fd), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace jobembed
