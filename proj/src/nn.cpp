#include "simnet/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "simnet/random.hpp"

namespace simnet {

HyperParams HyperParams::full_scale() {
  HyperParams hp;
  hp.g = 512;
  hp.e = 256;
  hp.d = 512;
  hp.k = 49;
  hp.m = 5;
  hp.g_raw = 2048;
  return hp;
}

HyperParams HyperParams::resolved() const {
  HyperParams hp = *this;
  if (hp.a_v == 0) hp.a_v = hp.k;
  if (hp.a_t == 0) hp.a_t = hp.m;
  return hp;
}

void HyperParams::validate() const {
  const HyperParams hp = resolved();
  const std::pair<const char*, std::size_t> fields[] = {
      {"g", hp.g},     {"e", hp.e},         {"d", hp.d},         {"k", hp.k},
      {"m", hp.m},     {"a_v", hp.a_v},     {"a_t", hp.a_t},     {"vocab", hp.vocab},
      {"max_len", hp.max_len}, {"g_raw", hp.g_raw},
  };
  for (const auto& [name, v] : fields) {
    if (v == 0) throw std::invalid_argument(std::string("hyperparameter ") + name + " must be positive");
  }
  for (auto id : {hp.bos, hp.eos, hp.unk}) {
    if (id >= hp.vocab) throw std::invalid_argument("reserved token id outside vocabulary");
  }
}

std::vector<Parameter*> ModelParams::all() {
  return {&W_VI, &b_VI, &W_ZV, &W_Zh, &b_Z, &w_alphaZ, &lstm_Wx, &lstm_Wh, &lstm_b,
          &Wt_ZV, &Wt_Zh, &bt_Z, &wt_alphaZ, &W_sz, &b_sz, &U, &W_QT, &W_Qh, &b_Q,
          &w_betaQ, &W_sq, &W_sh, &b_s, &W_Ss, &b_Ss, &W_Sr, &b_Sr, &W_pc, &b_pc, &Emb};
}

std::vector<const Parameter*> ModelParams::all() const {
  auto ptrs = const_cast<ModelParams*>(this)->all();
  return {ptrs.begin(), ptrs.end()};
}

Parameter* ModelParams::find(std::string_view name) {
  for (auto* p : all())
    if (p->name == name) return p;
  return nullptr;
}

void ModelParams::zero_grad() {
  for (auto* p : all()) p->zero_grad();
}

ModelParams ModelParams::shaped(const HyperParams& hyper) {
  const HyperParams hp = hyper.resolved();
  hp.validate();
  const auto g = hp.g, e = hp.e, d = hp.d, av = hp.a_v, at = hp.a_t, V = hp.vocab;
  auto mat = [](const char* name, std::size_t r, std::size_t c) { return Parameter(name, Tensor({r, c})); };
  auto vec = [](const char* name, std::size_t n) { return Parameter(name, Tensor({n})); };

  ModelParams p;
  p.W_VI = mat("W_VI", g, hp.g_raw);
  p.b_VI = vec("b_VI", g);
  p.W_ZV = mat("W_ZV", av, g);
  p.W_Zh = mat("W_Zh", av, d);
  p.b_Z = vec("b_Z", av);
  p.w_alphaZ = vec("w_alphaZ", av);
  p.lstm_Wx = mat("lstm_Wx", 4 * d, g + e);
  p.lstm_Wh = mat("lstm_Wh", 4 * d, d);
  p.lstm_b = vec("lstm_b", 4 * d);
  p.Wt_ZV = mat("Wt_ZV", av, g);
  p.Wt_Zh = mat("Wt_Zh", av, d);
  p.bt_Z = vec("bt_Z", av);
  p.wt_alphaZ = vec("wt_alphaZ", av);
  p.W_sz = mat("W_sz", e, g);
  p.b_sz = vec("b_sz", e);
  p.U = mat("U", e, e);
  p.W_QT = mat("W_QT", at, e);
  p.W_Qh = mat("W_Qh", at, d);
  p.b_Q = vec("b_Q", at);
  p.w_betaQ = vec("w_betaQ", at);
  p.W_sq = mat("W_sq", e, e);
  p.W_sh = mat("W_sh", e, d);
  p.b_s = vec("b_s", e);
  p.W_Ss = mat("W_Ss", at, e);
  p.b_Ss = vec("b_Ss", at);
  p.W_Sr = mat("W_Sr", at, e);
  p.b_Sr = vec("b_Sr", at);
  p.W_pc = mat("W_pc", V, e);
  p.b_pc = vec("b_pc", V);
  p.Emb = mat("Emb", V, e);
  return p;
}

bool is_bias(const Parameter& p) {
  const auto& n = p.name;
  return n.starts_with("b_") || n == "lstm_b" || n == "bt_Z";
}

double init_bound(const Shape& shape) {
  const double fan_out = static_cast<double>(shape[0]);
  const double fan_in = shape.size() > 1 ? static_cast<double>(shape[1]) : 1.0;
  return std::sqrt(6.0 / (fan_in + fan_out));
}

ModelParams init_params(const HyperParams& hp, std::uint64_t seed) {
  ModelParams p = ModelParams::shaped(hp);
  Rng rng(seed);
  for (auto* param : p.all()) {
    if (is_bias(*param)) continue;
    const double bound = init_bound(param->value.shape());
    for (auto& v : param->value.storage()) v = rng.uniform(-bound, bound);
  }
  const std::size_t d = hp.d;
  for (std::size_t i = d; i < 2 * d; ++i) p.lstm_b.value[i] = 1.0;
  return p;
}

Var affine(Var W, Var x, Var b) { return add(matmul(W, x), b); }

Var embed(Var table, std::size_t token) {
  if (token >= table.value().rows()) {
    throw std::out_of_range("embed: token id " + std::to_string(token) + " outside vocabulary of " +
                            std::to_string(table.value().rows()));
  }
  return row(table, token);
}

LstmState lstm_step(Graph& g, ModelParams& params, Var x, Var h_prev, Var c_prev) {
  const std::size_t d = params.lstm_Wh.value.cols();
  if (h_prev.value().size() != d || c_prev.value().size() != d) {
    throw ShapeError("lstm_step: expected state of length " + std::to_string(d) + ", got h " +
                     shape_str(h_prev.value().shape()) + " c " + shape_str(c_prev.value().shape()));
  }
  Var gates = add(affine(param(g, params.lstm_Wx), x, param(g, params.lstm_b)),
                  matmul(param(g, params.lstm_Wh), h_prev));
  Var i = sigmoid(slice_rows(gates, 0, d));
  Var f = sigmoid(slice_rows(gates, d, 2 * d));
  Var o = sigmoid(slice_rows(gates, 2 * d, 3 * d));
  Var cand = tanh(slice_rows(gates, 3 * d, 4 * d));
  Var c = add(mul(f, c_prev), mul(i, cand));
  Var h = mul(o, tanh(c));
  return {h, c};
}

}  // namespace simnet
