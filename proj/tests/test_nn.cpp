#include <cmath>
#include <cstring>

#include "doctest.h"
#include "helpers.hpp"
#include "simnet/binary_io.hpp"
#include "simnet/checkpoint.hpp"

using namespace simnet;

TEST_CASE("affine: zero map, identity, hand case") {
  Graph g;
  Var x = constant(g, Tensor::vector({1, 1}));
  CHECK(affine(constant(g, Tensor({2, 2})), x, constant(g, Tensor({2}))).value() == Tensor::vector({0, 0}));
  Var x2 = constant(g, Tensor::vector({-3, 0.5}));
  CHECK(affine(constant(g, Tensor::identity(2)), x2, constant(g, Tensor({2}))).value() == x2.value());
  Var y = affine(constant(g, Tensor::matrix({{1, 2}, {3, 4}})), x, constant(g, Tensor::vector({1, 0})));
  CHECK(y.value() == Tensor::vector({4, 7}));
}

TEST_CASE("embed returns the row and routes gradient to it only") {
  Parameter table("Emb", Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {2, 3, 4}, {5, 6, 7}}));
  {
    Graph g;
    CHECK(embed(param(g, table), 0).value() == Tensor::vector({1, 0, 0}));
    CHECK_THROWS_AS(embed(param(g, table), 4), std::out_of_range);
  }
  Graph g;
  Var c = constant(g, Tensor::vector({1, 2, 3}));
  g.backward(dot(embed(param(g, table), 3), c).id);
  for (std::size_t i = 0; i < 9; ++i) CHECK(table.grad[i] == 0.0);
  CHECK(std::vector<double>(table.grad.begin() + 9, table.grad.end()) == std::vector<double>{1, 2, 3});

  // Two lookups of one id: twice the single-lookup gradient.
  table.zero_grad();
  Graph h;
  Var t = param(h, table);
  Var cc = constant(h, Tensor::vector({1, 2, 3}));
  h.backward(add(dot(embed(t, 2), cc), dot(embed(t, 2), cc)).id);
  CHECK(std::vector<double>(table.grad.begin() + 6, table.grad.begin() + 9) == std::vector<double>{2, 4, 6});
}

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("lstm: zeros in, zeros out") {
  HyperParams hp = testutil::tiny_hyper();
  ModelParams p = ModelParams::shaped(hp);
  Graph g;
  auto [h, c] = lstm_step(g, p, constant(g, Tensor({hp.g + hp.e})), constant(g, Tensor({hp.d})),
                          constant(g, Tensor({hp.d})));
  for (double v : h.value().values()) CHECK(v == 0.0);
  for (double v : c.value().values()) CHECK(v == 0.0);
}

TEST_CASE("lstm: saturated forget and closed input gate keep the cell") {
  HyperParams hp = testutil::tiny_hyper();
  ModelParams p = testutil::random_params(hp, 5);
  const std::size_t d = hp.d;
  for (std::size_t i = 0; i < d; ++i) {
    p.lstm_b.value[i] = -1e6;     // input gate
    p.lstm_b.value[d + i] = 1e6;  // forget gate
  }
  Rng rng(1);
  const Tensor c_prev = testutil::random_tensor(rng, {d});
  Graph g;
  auto st = lstm_step(g, p, constant(g, testutil::random_tensor(rng, {hp.g + hp.e})),
                      constant(g, testutil::random_tensor(rng, {d})), constant(g, c_prev));
  CHECK(testutil::max_abs_diff(st.c.value().values(), c_prev.values()) < 1e-12);
}

TEST_CASE("lstm: matches a scalar loop implementation") {
  HyperParams hp;
  hp.g = 1;
  hp.e = 2;
  hp.d = 3;
  hp.k = 1;
  hp.m = 1;
  hp.vocab = 5;
  hp.g_raw = 1;
  ModelParams p = testutil::random_params(hp, 77, 0.5);
  Rng rng(3);
  const Tensor x = testutil::random_tensor(rng, {3}), hp_ = testutil::random_tensor(rng, {3}),
               cp = testutil::random_tensor(rng, {3});
  Graph g;
  auto st = lstm_step(g, p, constant(g, x), constant(g, hp_), constant(g, cp));

  const std::size_t d = 3;
  double pre[12];
  for (std::size_t r = 0; r < 4 * d; ++r) {
    double s = p.lstm_b.value[r];
    for (std::size_t j = 0; j < 3; ++j) s += p.lstm_Wx.value.at(r, j) * x[j];
    for (std::size_t j = 0; j < d; ++j) s += p.lstm_Wh.value.at(r, j) * hp_[j];
    pre[r] = s;
  }
  for (std::size_t i = 0; i < d; ++i) {
    const double ig = sig(pre[i]), fg = sig(pre[d + i]), og = sig(pre[2 * d + i]), cand = std::tanh(pre[3 * d + i]);
    const double c = fg * cp[i] + ig * cand;
    const double h = og * std::tanh(c);
    CHECK(std::abs(st.c.value()[i] - c) < 1e-14);
    CHECK(std::abs(st.h.value()[i] - h) < 1e-14);
    CHECK(std::abs(h) < 1.0);
  }
}

TEST_CASE("init_params: deterministic, seed-sensitive, within bounds") {
  HyperParams hp = testutil::tiny_hyper();
  ModelParams a = init_params(hp, 9), b = init_params(hp, 9), c = init_params(hp, 10);
  bool any_diff = false;
  auto pa = a.all(), pb = b.all(), pc = c.all();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->value == pb[i]->value);
    if (!(pa[i]->value == pc[i]->value)) any_diff = true;
    const auto& shape = pa[i]->value.shape();
    if (pa[i]->name == "lstm_b") {
      for (std::size_t r = 0; r < 4 * hp.d; ++r) CHECK(pa[i]->value[r] == (r >= hp.d && r < 2 * hp.d ? 1.0 : 0.0));
      continue;
    }
    if (is_bias(*pa[i])) {
      for (double v : pa[i]->value.values()) CHECK(v == 0.0);
      continue;
    }
    const double fan_in = shape.size() == 2 ? static_cast<double>(shape[1]) : 1.0;
    const double fan_out = static_cast<double>(shape[0]);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    CHECK(init_bound(shape) == bound);
    for (double v : pa[i]->value.values()) CHECK(std::abs(v) <= bound);
  }
  CHECK(any_diff);
}

TEST_CASE("parameter shapes follow the dimensions") {
  HyperParams hp = testutil::tiny_hyper();
  ModelParams p = ModelParams::shaped(hp);
  CHECK(p.W_VI.value.shape() == Shape{hp.g, hp.g_raw});
  CHECK(p.W_ZV.value.shape() == Shape{hp.a_v, hp.g});
  CHECK(p.W_Zh.value.shape() == Shape{hp.a_v, hp.d});
  CHECK(p.lstm_Wx.value.shape() == Shape{4 * hp.d, hp.g + hp.e});
  CHECK(p.lstm_Wh.value.shape() == Shape{4 * hp.d, hp.d});
  CHECK(p.W_sz.value.shape() == Shape{hp.e, hp.g});
  CHECK(p.U.value.shape() == Shape{hp.e, hp.e});
  CHECK(p.W_QT.value.shape() == Shape{hp.a_t, hp.e});
  CHECK(p.W_Qh.value.shape() == Shape{hp.a_t, hp.d});
  CHECK(p.W_sq.value.shape() == Shape{hp.e, hp.e});
  CHECK(p.W_sh.value.shape() == Shape{hp.e, hp.d});
  CHECK(p.W_Ss.value.shape() == Shape{hp.a_t, hp.e});
  CHECK(p.W_Sr.value.shape() == Shape{hp.a_t, hp.e});
  CHECK(p.W_pc.value.shape() == Shape{hp.vocab, hp.e});
  CHECK(p.Emb.value.shape() == Shape{hp.vocab, hp.e});
  // Tied storage is one object.
  CHECK(&p.W_Sh() == &p.W_Qh);
  CHECK(&p.w_S() == &p.w_betaQ);
  for (auto* q : p.all()) CHECK(q != nullptr);
  CHECK(p.find("W_Sh") == nullptr);
}

TEST_CASE("hyperparameter validation names the bad field") {
  HyperParams hp = testutil::tiny_hyper();
  hp.d = 0;
  try {
    hp.validate();
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find(" d ") != std::string::npos);
  }
  HyperParams defaults;
  defaults.vocab = 10;
  CHECK(defaults.resolved().a_v == defaults.k);
  CHECK(defaults.resolved().a_t == defaults.m);
  const HyperParams full = HyperParams::full_scale();
  CHECK(full.g == 512);
  CHECK(full.e == 256);
  CHECK(full.d == 512);
  CHECK(full.g_raw == 2048);
  CHECK(full.k == 49);
  CHECK(full.m == 5);
}

TEST_CASE("checkpoint round trip is bit-exact and stores tied tensors once") {
  HyperParams hp = testutil::tiny_hyper();
  Checkpoint ck{hp, Variant::topic_mgate, 17, testutil::random_params(hp, 4)};
  const std::string bytes = encode_checkpoint(ck);
  CHECK(bytes.substr(0, 8) == "SIMNET01");
  CHECK(bytes.find("W_Sh") == std::string::npos);
  Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.hyper == hp);
  CHECK(back.variant == Variant::topic_mgate);
  CHECK(back.epoch == 17);
  auto a = ck.params.all(), b = back.params.all();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(std::memcmp(a[i]->value.storage().data(), b[i]->value.storage().data(), a[i]->value.size() * 8) == 0);
  }
  CHECK(encode_checkpoint(back) == bytes);
}

TEST_CASE("checkpoint errors: magic, truncation, shape mismatch") {
  HyperParams hp = testutil::tiny_hyper();
  Checkpoint ck{hp, Variant::full, 0, testutil::random_params(hp, 4)};
  std::string bytes = encode_checkpoint(ck);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  try {
    decode_checkpoint(bytes.substr(0, bytes.size() - 3));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
  // A W_VI with the wrong width.
  Checkpoint wrong = ck;
  wrong.params.W_VI.value = Tensor({hp.g, hp.g_raw + 1});
  try {
    decode_checkpoint(encode_checkpoint(wrong));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("W_VI") != std::string::npos);
  }
}
