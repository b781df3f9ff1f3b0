#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "simnet/graph.hpp"

namespace simnet {

/// Model dimensions. a_v and a_t are the attention widths; 0 means "use k"
/// and "use m" respectively (see resolved()).
struct HyperParams {
  std::size_t g = 32;       // projected visual feature size
  std::size_t e = 32;       // word / topic embedding size
  std::size_t d = 64;       // LSTM hidden size
  std::size_t k = 9;        // regions per image
  std::size_t m = 5;        // topics per image
  std::size_t a_v = 0;      // visual attention width
  std::size_t a_t = 0;      // topic attention width
  std::size_t vocab = 0;    // |D|
  std::size_t max_len = 20;
  std::size_t g_raw = 64;   // stored feature size before projection
  std::size_t bos = 1;
  std::size_t eos = 2;
  std::size_t unk = 3;

  /// Published configuration: g=512, e=256, d=512, 7x7 grid of 2048 maps, m=5.
  static HyperParams full_scale();

  HyperParams resolved() const;
  /// Throws std::invalid_argument naming the first non-positive field.
  void validate() const;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

/// Every learned tensor of the decoder. The importance scorer's hidden-state
/// matrix and projection vector are not separate members: they are W_Qh and
/// w_betaQ, exposed again through W_Sh() and w_S().
struct ModelParams {
  Parameter W_VI, b_VI;
  Parameter W_ZV, W_Zh, b_Z, w_alphaZ;
  Parameter lstm_Wx, lstm_Wh, lstm_b;
  Parameter Wt_ZV, Wt_Zh, bt_Z, wt_alphaZ;
  Parameter W_sz, b_sz;
  Parameter U;
  Parameter W_QT, W_Qh, b_Q, w_betaQ;
  Parameter W_sq, W_sh, b_s;
  Parameter W_Ss, b_Ss, W_Sr, b_Sr;
  Parameter W_pc, b_pc;
  Parameter Emb;

  Parameter& W_Sh() { return W_Qh; }
  const Parameter& W_Sh() const { return W_Qh; }
  Parameter& w_S() { return w_betaQ; }
  const Parameter& w_S() const { return w_betaQ; }

  /// Canonical order; each tensor appears once.
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  Parameter* find(std::string_view name);

  void zero_grad();
  /// Allocates every tensor with the shapes implied by `hp` (zero-filled).
  static ModelParams shaped(const HyperParams& hp);
};

/// Which parameters are biases (zero init) or projection vectors.
bool is_bias(const Parameter& p);

/// W·x + b.
Var affine(Var W, Var x, Var b);

/// Row `token` of the embedding table.
Var embed(Var table, std::size_t token);

struct LstmState {
  Var h;
  Var c;
};

/// Standard LSTM cell, gates stacked [input, forget, output, candidate].
LstmState lstm_step(Graph& g, ModelParams& params, Var x, Var h_prev, Var c_prev);

/// Glorot-uniform matrices (bound sqrt(6/(fan_in+fan_out))), zero biases,
/// LSTM forget-gate bias 1.
ModelParams init_params(const HyperParams& hp, std::uint64_t seed);

/// Bound used by init_params for a given tensor shape.
double init_bound(const Shape& shape);

}  // namespace simnet
