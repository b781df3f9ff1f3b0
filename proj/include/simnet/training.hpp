#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simnet/checkpoint.hpp"
#include "simnet/data.hpp"
#include "simnet/decoder.hpp"
#include "simnet/metrics.hpp"

namespace simnet {

struct TrainConfig {
  std::size_t phase1_epochs = 20;
  double phase1_lr = 4e-4;
  double phase2_lr = 1e-5;
  std::size_t batch = 80;
  double half_life = 50.0;  // epochs for the phase-2 rate to halve
  // Published "momentum 0.8, weight decay 0.999" read as Adam's betas.
  double beta1 = 0.8;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t max_epochs = 50;  // both phases together
  std::size_t patience = 5;
  std::size_t min_phase2_epochs = 1;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  Phase1Input phase1_input = Phase1Input::removed;
  /// Rate at which training topics are swapped for wrong nouns, redrawn every
  /// epoch. Validation topics are left alone.
  double topic_noise = 0.0;
  /// Off makes the log a pure function of the inputs.
  bool log_wall_time = true;

  /// Published settings.
  static TrainConfig full_scale();
  /// Small-corpus settings: faster rates, batch 8.
  static TrainConfig desk();

  void validate() const;
};

/// Adam moments in ModelParams::all() order.
struct OptimState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t step = 0;
};

struct AdamSettings {
  double beta1 = 0.8;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam step over every non-frozen parameter. Each
/// Parameter object is updated once per call, so tied storage moves once
/// with its summed gradient. Throws on a NaN gradient naming the tensor.
void adam_update(std::span<Parameter* const> params, OptimState& state, double lr, const AdamSettings& adam);

/// phase2_lr · 0.5^(epoch / half_life).
double lr_schedule(double epoch, const TrainConfig& config);

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_gradients(std::span<Parameter* const> params, double max_norm);

/// Parameters frozen while visual branches are off. The visual-side gate
/// scorer only belongs here when the variant has output attention.
std::vector<Parameter*> visual_parameters(ModelParams& p, Variant variant);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based, continues across resumed runs
  int phase = 1;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_cider = 0.0;
  double val_bleu4 = 0.0;
  double wall_seconds = 0.0;
};

std::string format_log_header();
std::string format_log_record(const EpochRecord& r);

struct TrainData {
  const std::vector<Sample>* train = nullptr;
  const std::vector<Sample>* val = nullptr;
  const Vocab* vocab = nullptr;
  HyperParams hyper;
  Variant variant = Variant::full;
  bool legacy_topic_attention = false;
};

struct TrainResult {
  Checkpoint best;  // epoch field = epoch of the best validation CIDEr
  Checkpoint last;
  std::vector<EpochRecord> log;
};

using EpochCallback = std::function<void(const EpochRecord&, const Checkpoint& current)>;

/// Two-phase training. Variants with topic attention first train with visual
/// branches off (visual parameters frozen, gate pinned to the topic side),
/// then everything at the decaying phase-2 rate with early stopping on
/// validation CIDEr (greedy decoding). Deterministic for a given seed.
TrainResult train(const TrainData& data, const TrainConfig& config, const std::optional<Checkpoint>& resume = {},
                  const EpochCallback& on_epoch = {});

/// Greedy or beam captions for every sample, paired with its references.
EvalCorpus caption_split(ModelParams& p, const HyperParams& hp, const DecoderConfig& config,
                         const std::vector<Sample>& samples, const Vocab& vocab, const GenerateConfig& gen,
                         std::vector<Generation>* generations = nullptr);

/// Teacher-forced token accuracy over all references of all samples.
double forced_accuracy(ModelParams& p, const HyperParams& hp, const DecoderConfig& config,
                       const std::vector<Sample>& samples, const Vocab& vocab);

/// Mean per-token cross-entropy over all references (no gradient).
double mean_loss(ModelParams& p, const HyperParams& hp, const DecoderConfig& config,
                 const std::vector<Sample>& samples, const Vocab& vocab);

}  // namespace simnet
