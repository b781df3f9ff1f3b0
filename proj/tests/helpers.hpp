#pragma once

#include <cmath>
#include <vector>

#include "simnet/decoder.hpp"
#include "simnet/random.hpp"

namespace testutil {

using namespace simnet;

/// Small dims used across the tests.
inline HyperParams tiny_hyper() {
  HyperParams hp;
  hp.g = 6;
  hp.e = 4;
  hp.d = 5;
  hp.k = 3;
  hp.m = 2;
  hp.vocab = 7;
  hp.g_raw = 5;
  hp.max_len = 6;
  return hp.resolved();
}

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& x : t.storage()) x = scale * rng.uniform(-1.0, 1.0);
  return t;
}

/// init_params with biases also randomized so no term vanishes.
inline ModelParams random_params(const HyperParams& hp, std::uint64_t seed, double bias_scale = 0.3) {
  ModelParams p = init_params(hp, seed);
  Rng rng(seed ^ 0xb1a5);
  for (Parameter* q : p.all())
    if (is_bias(*q))
      for (auto& x : q->value.storage()) x = bias_scale * rng.uniform(-1.0, 1.0);
  return p;
}

inline FeatureGrid random_grid(const HyperParams& hp, Rng& rng, double scale = 1.0) {
  return {random_tensor(rng, {hp.g_raw, hp.k}, scale)};
}

inline TopicSet random_topics(const HyperParams& hp, Rng& rng) {
  TopicSet t;
  for (std::size_t i = 0; i < hp.m; ++i) t.ids.push_back(4 + rng.below(hp.vocab - 4));
  return t;
}

inline std::vector<std::size_t> random_caption(const HyperParams& hp, Rng& rng, std::size_t len) {
  std::vector<std::size_t> c;
  for (std::size_t i = 0; i < len; ++i) c.push_back(3 + rng.below(hp.vocab - 3));
  return c;
}

/// Weighted sum of every entry, for turning any tensor into a scalar loss.
inline Var weighted_sum(Var x, const Tensor& w) {
  Graph& g = *x.graph;
  Var prod = mul(x, constant(g, w));
  if (prod.value().rank() == 2) {
    const std::size_t r = prod.value().rows(), c = prod.value().cols();
    prod = row(matmul(constant(g, Tensor({1, r}, 1.0)), prod), 0);
    return dot(prod, constant(g, Tensor({c}, 1.0)));
  }
  return dot(prod, constant(g, Tensor({prod.value().size()}, 1.0)));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testutil
