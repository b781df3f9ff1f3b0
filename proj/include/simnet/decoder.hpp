#pragma once

#include <any>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "simnet/attention.hpp"

namespace simnet {

/// Decoder configurations of the incremental analysis, from the plain
/// encoder-decoder up to the full merging model.
enum class Variant {
  baseline,            // mean visual feature in, context from h_t out
  input,               // + input attention
  output,              // + output attention (output from r_t alone)
  input_output,        // + input + output attention (output from r_t alone)
  topic,               // + topic attention, output from s_t
  topic_mgate,         // + topic attention, gate merges q_t and projected h_t
  input_output_topic,  // both attentions, s_t and r_t averaged without a gate
  full,                // both attentions merged by the importance gate
};

inline constexpr Variant kAllVariants[] = {
    Variant::baseline, Variant::input,       Variant::output,
    Variant::input_output, Variant::topic,   Variant::topic_mgate,
    Variant::input_output_topic, Variant::full,
};

std::string_view variant_name(Variant v);
/// Accepts the names produced by variant_name.
std::optional<Variant> parse_variant(std::string_view name);

bool uses_input_attention(Variant v);
bool uses_output_attention(Variant v);
bool uses_topics(Variant v);

/// What the LSTM receives as visual input while visual branches are off.
enum class Phase1Input {
  removed,           // zero vector
  frozen_attention,  // input attention with frozen parameters
};

struct DecoderConfig {
  Variant variant = Variant::full;
  /// false during the first training phase: output-side visual branches are
  /// dropped and the gate is pinned to the topic side.
  bool visual_enabled = true;
  Phase1Input phase1_input = Phase1Input::removed;
  /// Score topics against the previous word instead of the hidden state.
  bool legacy_topic_attention = false;
};

struct DecoderState {
  Var h;
  Var c;
  std::size_t y_prev = 0;
  std::size_t t = 0;
};

/// Per-step inspection record. Vectors are empty when the branch is absent.
struct StepTrace {
  std::vector<double> alpha;
  std::vector<double> alpha_tilde;
  std::vector<double> beta;
  double gamma = 0.0;
  std::size_t token = 0;
  double logprob = 0.0;
};

/// Image-side inputs on a graph: projected features and topic embeddings,
/// each present only when the configuration reads it.
struct ImageContext {
  std::optional<Var> V;
  std::optional<Var> T;
};

ImageContext prepare_image(Graph& g, ModelParams& p, const DecoderConfig& config, const FeatureGrid& features,
                           const TopicSet& topics);

DecoderState initial_state(Graph& g, const HyperParams& hp);

/// S(x) = tanh(W_Sh·h + W_x·x + b_x) · w_S, with W_Sh and w_S the topic
/// attention's W_Qh and w_betaQ.
Var importance_score(Graph& g, ModelParams& p, Var h_t, Var x, Parameter& W_x, Parameter& b_x);

struct GateOutput {
  Var gamma;
  Var merged;
};

/// gamma = sigmoid(S_s(s) - S_r(r)); merged = gamma·s + (1-gamma)·r.
GateOutput merge_gate(Graph& g, ModelParams& p, Var s_t, Var r_t, Var h_t);

/// Softmax over the vocabulary; also returns the log-probabilities.
struct VocabOutput {
  Var probs;
  Var log_probs;
};
VocabOutput vocab_project(Graph& g, ModelParams& p, Var c_t);

/// Intermediate vectors of one step, exposed for tests and inspection.
struct StepInternals {
  std::optional<Var> alpha, z, alpha_tilde, z_tilde, r, beta, q, s, gamma;
  Var c;
};

struct StepResult {
  DecoderState state;  // h_t, c_t, t+1; y_prev still the input token
  VocabOutput out;
  StepTrace trace;     // token and logprob left for the caller
  StepInternals internals;
};

StepResult decode_step(Graph& g, ModelParams& p, const DecoderConfig& config, const DecoderState& state,
                       const ImageContext& image);

/// Mean teacher-forced cross-entropy over caption + end token.
/// `step_log_probs`, when given, receives log p_t[gold_t] per step.
Var sequence_loss(Graph& g, ModelParams& p, const HyperParams& hp, const DecoderConfig& config,
                  const FeatureGrid& features, const TopicSet& topics, const std::vector<std::size_t>& caption,
                  std::vector<double>* step_log_probs = nullptr);

/// Fraction of teacher-forced steps (including the end token) where the most
/// probable word is the gold word.
struct ForcedAccuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
};
ForcedAccuracy teacher_forced_accuracy(ModelParams& p, const HyperParams& hp, const DecoderConfig& config,
                                       const FeatureGrid& features, const TopicSet& topics,
                                       const std::vector<std::size_t>& caption);

enum class DecodeMode { greedy, beam };

struct GenerateConfig {
  DecodeMode mode = DecodeMode::greedy;
  std::size_t beam_width = 3;
  std::size_t max_len = 20;
};

struct Generation {
  std::vector<std::size_t> tokens;  // without the end token
  std::vector<StepTrace> traces;    // one per step, including the end step
  double logprob = 0.0;
};

/// One expansion of a partial sequence: log-probabilities of the next token,
/// the step's trace and the state to continue from.
struct Expansion {
  std::vector<double> log_probs;
  StepTrace trace;
  std::any state;
};
using Expander = std::function<Expansion(const std::vector<std::size_t>& prefix, const std::any& state)>;

/// Greedy or beam search over any next-token model. Candidates rank by total
/// log-probability, ties by token sequence; finished hypotheses carry over
/// unchanged. Width 1 is the greedy path. The end token is not returned.
Generation search_sequences(const Expander& expand, std::any initial, std::size_t eos, const GenerateConfig& gen);

Generation generate(ModelParams& p, const HyperParams& hp, const DecoderConfig& config, const FeatureGrid& features,
                    const TopicSet& topics, const GenerateConfig& gen);

}  // namespace simnet
