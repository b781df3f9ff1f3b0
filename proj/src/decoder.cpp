#include "simnet/decoder.hpp"

#include <algorithm>
#include <any>
#include <stdexcept>

namespace simnet {

namespace {

struct VariantInfo {
  Variant v;
  std::string_view name;
  bool input_att;
  bool output_att;
  bool topics;
};

constexpr VariantInfo kVariants[] = {
    {Variant::baseline, "baseline", false, false, false},
    {Variant::input, "input", true, false, false},
    {Variant::output, "output", false, true, false},
    {Variant::input_output, "input_output", true, true, false},
    {Variant::topic, "topic", false, false, true},
    {Variant::topic_mgate, "topic_mgate", false, false, true},
    {Variant::input_output_topic, "input_output_topic", true, true, true},
    {Variant::full, "full", true, true, true},
};

const VariantInfo& info(Variant v) {
  for (const auto& i : kVariants)
    if (i.v == v) return i;
  throw std::logic_error("unknown variant");
}

std::vector<double> values_of(const std::optional<Var>& v) {
  if (!v) return {};
  const auto s = v->value().values();
  return {s.begin(), s.end()};
}

std::size_t argmax_lowest(std::span<const double> xs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (xs[i] > xs[best]) best = i;
  return best;
}

void check_token(std::size_t token, const HyperParams& hp) {
  if (token >= hp.vocab) {
    throw std::out_of_range("token id " + std::to_string(token) + " outside vocabulary of " + std::to_string(hp.vocab));
  }
}

}  // namespace

std::string_view variant_name(Variant v) { return info(v).name; }

std::optional<Variant> parse_variant(std::string_view name) {
  for (const auto& i : kVariants)
    if (i.name == name) return i.v;
  return std::nullopt;
}

bool uses_input_attention(Variant v) { return info(v).input_att; }
bool uses_output_attention(Variant v) { return info(v).output_att; }
bool uses_topics(Variant v) { return info(v).topics; }

namespace {

bool feeds_visual(const DecoderConfig& config) {
  return config.visual_enabled || config.phase1_input == Phase1Input::frozen_attention;
}

}  // namespace

ImageContext prepare_image(Graph& g, ModelParams& p, const DecoderConfig& config, const FeatureGrid& features,
                           const TopicSet& topics) {
  ImageContext ctx;
  if (feeds_visual(config)) ctx.V = project_features(g, p, features.raw);
  if (uses_topics(config.variant)) ctx.T = topic_matrix(g, p, topics);
  return ctx;
}

DecoderState initial_state(Graph& g, const HyperParams& hp) {
  return {constant(g, Tensor({hp.d})), constant(g, Tensor({hp.d})), hp.bos, 0};
}

Var importance_score(Graph& g, ModelParams& p, Var h_t, Var x, Parameter& W_x, Parameter& b_x) {
  Var pre = add(matmul(param(g, p.W_Sh()), h_t), affine(param(g, W_x), x, param(g, b_x)));
  return dot(tanh(pre), param(g, p.w_S()));
}

GateOutput merge_gate(Graph& g, ModelParams& p, Var s_t, Var r_t, Var h_t) {
  Var score_s = importance_score(g, p, h_t, s_t, p.W_Ss, p.b_Ss);
  Var score_r = importance_score(g, p, h_t, r_t, p.W_Sr, p.b_Sr);
  Var gamma = sigmoid(sub(score_s, score_r));
  Var merged = add(r_t, mul(gamma, sub(s_t, r_t)));
  return {gamma, merged};
}

VocabOutput vocab_project(Graph& g, ModelParams& p, Var c_t) {
  Var logits = affine(param(g, p.W_pc), c_t, param(g, p.b_pc));
  return {softmax(logits), log_softmax(logits)};
}

StepResult decode_step(Graph& g, ModelParams& p, const DecoderConfig& config, const DecoderState& state,
                       const ImageContext& image) {
  const Variant v = config.variant;
  StepInternals in;

  Var y = embed(param(g, p.Emb), state.y_prev);

  Var z;
  if (feeds_visual(config)) {
    if (!image.V) throw std::invalid_argument("decode_step: configuration needs visual features");
    if (uses_input_attention(v)) {
      auto att = input_attention(g, p, *image.V, state.h);
      in.alpha = att.weights;
      z = att.summary;
    } else {
      const std::size_t k = image.V->value().cols();
      Var uniform = constant(g, Tensor({k}, 1.0 / static_cast<double>(k)));
      in.alpha = uniform;
      z = matmul(*image.V, uniform);
    }
  } else {
    z = constant(g, Tensor({p.W_VI.value.rows()}));
  }
  in.z = z;

  const auto [h, c] = lstm_step(g, p, concat_rows(z, y), state.h, state.c);

  std::optional<Var> r;
  if (uses_output_attention(v) && config.visual_enabled) {
    auto att = output_attention(g, p, *image.V, h);
    in.alpha_tilde = att.weights;
    in.z_tilde = att.summary;
    r = visual_transform(g, p, att.summary);
    in.r = r;
  }

  std::optional<Var> q;
  if (uses_topics(v)) {
    if (!image.T) throw std::invalid_argument("decode_step: configuration needs topics");
    auto att = config.legacy_topic_attention ? legacy_topic_attention(g, p, *image.T, y)
                                             : topic_attention(g, p, *image.T, h);
    in.beta = att.weights;
    q = att.summary;
    in.q = q;
  }

  auto fixed_gamma = [&](double value) { in.gamma = constant(g, Tensor::scalar(value)); };
  switch (v) {
    case Variant::baseline:
    case Variant::input:
    case Variant::topic:
      in.s = context_fuse(g, p, q, h);
      in.c = *in.s;
      fixed_gamma(1.0);
      break;
    case Variant::output:
    case Variant::input_output:
      if (r) {
        in.c = *r;
        fixed_gamma(0.0);
      } else {
        in.s = context_fuse(g, p, std::nullopt, h);
        in.c = *in.s;
        fixed_gamma(1.0);
      }
      break;
    case Variant::topic_mgate: {
      // Gate between topic summary and the hidden state brought to size e.
      in.s = context_fuse(g, p, std::nullopt, h);
      auto gate = merge_gate(g, p, *q, *in.s, h);
      in.gamma = gate.gamma;
      in.c = gate.merged;
      break;
    }
    case Variant::input_output_topic:
      in.s = context_fuse(g, p, q, h);
      if (r) {
        in.c = scale(add(*in.s, *r), 0.5);
        fixed_gamma(0.5);
      } else {
        in.c = *in.s;
        fixed_gamma(1.0);
      }
      break;
    case Variant::full:
      in.s = context_fuse(g, p, q, h);
      if (r) {
        auto gate = merge_gate(g, p, *in.s, *r, h);
        in.gamma = gate.gamma;
        in.c = gate.merged;
      } else {
        in.c = *in.s;
        fixed_gamma(1.0);
      }
      break;
  }

  StepResult result;
  result.out = vocab_project(g, p, in.c);
  result.state = {h, c, state.y_prev, state.t + 1};
  result.trace.alpha = values_of(in.alpha);
  result.trace.alpha_tilde = values_of(in.alpha_tilde);
  result.trace.beta = values_of(in.beta);
  result.trace.gamma = in.gamma->scalar();
  result.internals = std::move(in);
  return result;
}

Var sequence_loss(Graph& g, ModelParams& p, const HyperParams& hp, const DecoderConfig& config,
                  const FeatureGrid& features, const TopicSet& topics, const std::vector<std::size_t>& caption,
                  std::vector<double>* step_log_probs) {
  if (caption.empty()) throw std::invalid_argument("sequence_loss: empty caption");
  for (auto t : caption) check_token(t, hp);
  ImageContext image = prepare_image(g, p, config, features, topics);
  DecoderState state = initial_state(g, hp);
  std::vector<Var> picked;
  picked.reserve(caption.size() + 1);
  for (std::size_t t = 0; t <= caption.size(); ++t) {
    const std::size_t gold = t < caption.size() ? caption[t] : hp.eos;
    StepResult step = decode_step(g, p, config, state, image);
    Var lp = row_lookup(step.out.log_probs, {gold});
    if (step_log_probs) step_log_probs->push_back(lp.scalar());
    picked.push_back(lp);
    state = step.state;
    state.y_prev = gold;
  }
  Var all = concat_rows(picked);
  Var ones = constant(g, Tensor({picked.size()}, 1.0));
  return scale(dot(all, ones), -1.0 / static_cast<double>(picked.size()));
}

ForcedAccuracy teacher_forced_accuracy(ModelParams& p, const HyperParams& hp, const DecoderConfig& config,
                                       const FeatureGrid& features, const TopicSet& topics,
                                       const std::vector<std::size_t>& caption) {
  Graph g;
  ImageContext image = prepare_image(g, p, config, features, topics);
  DecoderState state = initial_state(g, hp);
  ForcedAccuracy acc;
  for (std::size_t t = 0; t <= caption.size(); ++t) {
    const std::size_t gold = t < caption.size() ? caption[t] : hp.eos;
    StepResult step = decode_step(g, p, config, state, image);
    if (argmax_lowest(step.out.log_probs.value().values()) == gold) ++acc.correct;
    ++acc.total;
    state = step.state;
    state.y_prev = gold;
  }
  return acc;
}

namespace {

struct Hypothesis {
  std::any state;
  std::vector<std::size_t> tokens;
  std::vector<StepTrace> traces;
  double logprob = 0.0;
  bool done = false;
};

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return a.tokens < b.tokens;
}

Hypothesis extend(const Hypothesis& hyp, const Expansion& ex, std::size_t tok, std::size_t eos) {
  Hypothesis next{ex.state, hyp.tokens, hyp.traces, hyp.logprob + ex.log_probs[tok], tok == eos};
  next.tokens.push_back(tok);
  StepTrace tr = ex.trace;
  tr.token = tok;
  tr.logprob = ex.log_probs[tok];
  next.traces.push_back(std::move(tr));
  return next;
}

}  // namespace

Generation search_sequences(const Expander& expand, std::any initial, std::size_t eos, const GenerateConfig& gen) {
  if (gen.max_len == 0) throw std::invalid_argument("generate: max_len must be at least 1");
  if (gen.mode == DecodeMode::beam && gen.beam_width == 0) {
    throw std::invalid_argument("generate: beam_width must be at least 1");
  }
  const std::size_t width = gen.mode == DecodeMode::greedy ? 1 : gen.beam_width;
  std::vector<Hypothesis> beam(1);
  beam.front().state = std::move(initial);

  for (std::size_t step = 0; step < gen.max_len; ++step) {
    std::vector<Hypothesis> candidates;
    for (auto& hyp : beam) {
      if (hyp.done) {
        candidates.push_back(hyp);
        continue;
      }
      const Expansion ex = expand(hyp.tokens, hyp.state);
      const auto& lp = ex.log_probs;
      if (width == 1) {
        candidates.push_back(extend(hyp, ex, argmax_lowest(lp), eos));
        continue;
      }
      // Only the `width` best continuations of one hypothesis can survive.
      std::vector<std::size_t> order(lp.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      const std::size_t keep = std::min(width, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                        [&](std::size_t a, std::size_t b) { return lp[a] != lp[b] ? lp[a] > lp[b] : a < b; });
      for (std::size_t j = 0; j < keep; ++j) candidates.push_back(extend(hyp, ex, order[j], eos));
    }
    std::stable_sort(candidates.begin(), candidates.end(), better);
    if (candidates.size() > width) candidates.resize(width);
    beam = std::move(candidates);
    if (std::all_of(beam.begin(), beam.end(), [](const Hypothesis& h) { return h.done; })) break;
  }
  Hypothesis& best = beam.front();
  if (best.done) best.tokens.pop_back();
  return {std::move(best.tokens), std::move(best.traces), best.logprob};
}

Generation generate(ModelParams& p, const HyperParams& hp, const DecoderConfig& config, const FeatureGrid& features,
                    const TopicSet& topics, const GenerateConfig& gen) {
  Graph g;
  ImageContext image = prepare_image(g, p, config, features, topics);
  auto expand = [&](const std::vector<std::size_t>& prefix, const std::any& state) {
    DecoderState st = std::any_cast<const DecoderState&>(state);
    st.y_prev = prefix.empty() ? hp.bos : prefix.back();
    StepResult res = decode_step(g, p, config, st, image);
    const auto lp = res.out.log_probs.value().values();
    return Expansion{{lp.begin(), lp.end()}, std::move(res.trace), res.state};
  };
  return search_sequences(expand, initial_state(g, hp), hp.eos, gen);
}

}  // namespace simnet
