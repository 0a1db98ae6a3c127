#pragma once

#include <cmath>
#include <cstdint>

#include "winsum/model.hpp"

namespace winsum {

template <typename Scalar>
struct AdamConfig {
  Scalar learning_rate = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
};

// Moments share the gradient layout (frozen tensors are empty).
template <typename Scalar>
struct AdamState {
  ModelParams<Scalar> first;
  ModelParams<Scalar> second;
  std::int64_t step = 0;

  static AdamState for_params(const ModelParams<Scalar>& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
  }
};

// Bias-corrected Adam. Tensors with an empty gradient are left untouched.
template <typename Scalar>
void adam_step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads, AdamState<Scalar>& state,
               const AdamConfig<Scalar>& config) {
  ++state.step;
  const Scalar correction1 = Scalar(1) - std::pow(config.beta1, static_cast<Scalar>(state.step));
  const Scalar correction2 = Scalar(1) - std::pow(config.beta2, static_cast<Scalar>(state.step));
  zip_tensors(
      [&](std::string_view, auto& param, const auto& grad, auto& m, auto& v) {
        if (grad.size() == 0) return;
        m = config.beta1 * m + (Scalar(1) - config.beta1) * grad;
        v = config.beta2 * v + (Scalar(1) - config.beta2) * grad.cwiseAbs2();
        param.array() -= config.learning_rate * (m.array() / correction1) /
                         ((v.array() / correction2).sqrt() + config.epsilon);
      },
      params, grads, state.first, state.second);
}

template <typename Scalar>
Scalar global_norm(const ModelParams<Scalar>& grads) {
  Scalar total = 0;
  zip_tensors([&](std::string_view, const auto& g) { total += g.squaredNorm(); }, grads);
  return std::sqrt(total);
}

// Rescales so the global norm is at most `max_norm`; returns the norm before clipping.
template <typename Scalar>
Scalar clip_global_norm(ModelParams<Scalar>& grads, Scalar max_norm) {
  const Scalar norm = global_norm(grads);
  if (max_norm > 0 && norm > max_norm) {
    const Scalar factor = max_norm / norm;
    zip_tensors([&](std::string_view, auto& g) { g *= factor; }, grads);
  }
  return norm;
}

template <typename Scalar>
void scale_tensors(ModelParams<Scalar>& grads, Scalar factor) {
  zip_tensors([&](std::string_view, auto& g) { g *= factor; }, grads);
}

template <typename Scalar>
void add_tensors(ModelParams<Scalar>& into, const ModelParams<Scalar>& other) {
  zip_tensors([](std::string_view, auto& a, const auto& b) { if (a.size() != 0) a += b; }, into, other);
}

template <typename Scalar>
bool all_finite(const ModelParams<Scalar>& params) {
  bool ok = true;
  zip_tensors([&](std::string_view, const auto& t) { ok = ok && t.allFinite(); }, params);
  return ok;
}

}  // namespace winsum
