#include "simnet/attention.hpp"

namespace simnet {

Var project_features(Graph& g, ModelParams& p, const Tensor& raw) {
  if (raw.rank() != 2) throw ShapeError("project_features: expected g_raw x k matrix, got " + shape_str(raw.shape()));
  return add_col(matmul(param(g, p.W_VI), constant(g, raw)), param(g, p.b_VI));
}

Var topic_matrix(Graph& g, ModelParams& p, const TopicSet& topics) {
  if (topics.ids.empty()) throw std::invalid_argument("topic_matrix: empty topic set");
  return transpose(row_lookup(param(g, p.Emb), topics.ids));
}

AttentionResult additive_attention(Var values, Var h, Var W_v, Var W_h, Var b, Var w) {
  Var hidden = tanh(add_col(matmul(W_v, values), affine(W_h, h, b)));
  Var weights = softmax(matmul(transpose(hidden), w));
  return {weights, matmul(values, weights)};
}

AttentionResult input_attention(Graph& g, ModelParams& p, Var V, Var h_prev) {
  return additive_attention(V, h_prev, param(g, p.W_ZV), param(g, p.W_Zh), param(g, p.b_Z),
                            param(g, p.w_alphaZ));
}

AttentionResult output_attention(Graph& g, ModelParams& p, Var V, Var h_t) {
  return additive_attention(V, h_t, param(g, p.Wt_ZV), param(g, p.Wt_Zh), param(g, p.bt_Z),
                            param(g, p.wt_alphaZ));
}

Var visual_transform(Graph& g, ModelParams& p, Var z_tilde) {
  return tanh(affine(param(g, p.W_sz), z_tilde, param(g, p.b_sz)));
}

AttentionResult topic_attention(Graph& g, ModelParams& p, Var T, Var h_t) {
  return additive_attention(T, h_t, param(g, p.W_QT), param(g, p.W_Qh), param(g, p.b_Q),
                            param(g, p.w_betaQ));
}

AttentionResult legacy_topic_attention(Graph& g, ModelParams& p, Var T, Var y_prev) {
  Var weights = softmax(matmul(transpose(T), matmul(param(g, p.U), y_prev)));
  return {weights, matmul(T, weights)};
}

Var context_fuse(Graph& g, ModelParams& p, std::optional<Var> q, Var h_t) {
  Var pre = affine(param(g, p.W_sh), h_t, param(g, p.b_s));
  if (q) pre = add(matmul(param(g, p.W_sq), *q), pre);
  return tanh(pre);
}

}  // namespace simnet
