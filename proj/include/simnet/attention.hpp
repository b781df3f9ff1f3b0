#pragma once

#include <optional>
#include <vector>

#include "simnet/nn.hpp"

namespace simnet {

/// Stored features for one image: g_raw x k, one column per region.
struct FeatureGrid {
  Tensor raw;

  std::size_t regions() const { return raw.cols(); }
  std::size_t channels() const { return raw.rows(); }
};

/// Topic word ids for one image (m entries, all nouns).
struct TopicSet {
  std::vector<std::size_t> ids;
};

/// Attention weights over columns plus the weighted column sum.
struct AttentionResult {
  Var weights;
  Var summary;
};

/// V = W_VI·raw with b_VI added to every column.
Var project_features(Graph& g, ModelParams& p, const Tensor& raw);

/// Topic embeddings as columns: e x m.
Var topic_matrix(Graph& g, ModelParams& p, const TopicSet& topics);

/// Additive attention over the columns of `values`:
/// scores_j = w · tanh(W_v·values + (W_h·h + b))_j, weights = softmax(scores).
AttentionResult additive_attention(Var values, Var h, Var W_v, Var W_h, Var b, Var w);

/// Visual attention conditioned on the previous hidden state; its summary is
/// the LSTM's visual input.
AttentionResult input_attention(Graph& g, ModelParams& p, Var V, Var h_prev);

/// Same form as input_attention with its own parameters, conditioned on the
/// current hidden state.
AttentionResult output_attention(Graph& g, ModelParams& p, Var V, Var h_t);

/// r_t = tanh(W_sz·z + b_sz), brings the attended visual vector to size e.
Var visual_transform(Graph& g, ModelParams& p, Var z_tilde);

AttentionResult topic_attention(Graph& g, ModelParams& p, Var T, Var h_t);

/// Older formulation scoring topics against the previous word embedding:
/// softmax(Tᵀ·U·y_prev).
AttentionResult legacy_topic_attention(Graph& g, ModelParams& p, Var T, Var y_prev);

/// s_t = tanh(W_sq·q + W_sh·h + b_s). Without q the topic term is dropped.
Var context_fuse(Graph& g, ModelParams& p, std::optional<Var> q, Var h_t);

}  // namespace simnet
