#include "simnet/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace simnet {

TrainConfig TrainConfig::full_scale() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.phase1_epochs = 10;
  c.phase1_lr = 4e-3;
  c.phase2_lr = 2e-3;
  c.batch = 8;
  c.max_epochs = 80;
  c.patience = 6;
  c.topic_noise = 0.2;
  return c;
}

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string("train config: ") + name + " must be positive");
  };
  positive(phase1_lr, "phase1_lr");
  positive(phase2_lr, "phase2_lr");
  positive(half_life, "half_life");
  positive(epsilon, "epsilon");
  positive(clip_norm, "clip_norm");
  if (batch == 0) throw std::invalid_argument("train config: batch must be positive");
  if (max_epochs == 0) throw std::invalid_argument("train config: max_epochs must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("train config: beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("train config: beta2 must be in [0, 1)");
  if (!(topic_noise >= 0.0 && topic_noise <= 1.0)) throw std::invalid_argument("train config: topic_noise must be in [0, 1]");
}

void adam_update(std::span<Parameter* const> params, OptimState& state, double lr, const AdamSettings& adam) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_update: optimizer state has wrong arity");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.frozen) continue;
    for (double gv : p.grad) {
      if (std::isnan(gv)) throw std::runtime_error("adam_update: NaN gradient in " + p.name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(adam.beta1, t);
  const double c2 = 1.0 - std::pow(adam.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (p.frozen) continue;
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& grad = p.grad;
    auto& val = p.value.storage();
    if (m.size() != val.size()) {
      m.assign(val.size(), 0.0);
      v.assign(val.size(), 0.0);
    }
    for (std::size_t j = 0; j < val.size(); ++j) {
      m[j] = adam.beta1 * m[j] + (1.0 - adam.beta1) * grad[j];
      v[j] = adam.beta2 * v[j] + (1.0 - adam.beta2) * grad[j] * grad[j];
      val[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + adam.epsilon);
    }
    ++p.writes;
  }
}

double lr_schedule(double epoch, const TrainConfig& config) {
  return config.phase2_lr * std::pow(0.5, epoch / config.half_life);
}

double clip_gradients(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    if (p->frozen) continue;
    for (double gv : p->grad) sq += gv * gv;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter* p : params) {
      if (p->frozen) continue;
      for (double& gv : p->grad) gv *= s;
    }
  }
  return norm;
}

std::vector<Parameter*> visual_parameters(ModelParams& p, Variant variant) {
  std::vector<Parameter*> out = {&p.W_VI,  &p.b_VI,  &p.W_ZV, &p.W_Zh,      &p.b_Z,  &p.w_alphaZ,
                                 &p.Wt_ZV, &p.Wt_Zh, &p.bt_Z, &p.wt_alphaZ, &p.W_sz, &p.b_sz};
  if (uses_output_attention(variant)) {
    out.push_back(&p.W_Sr);
    out.push_back(&p.b_Sr);
  }
  return out;
}

std::string format_log_header() { return "epoch\tphase\tlr\ttrain_loss\tval_cider\tval_bleu4\twall_seconds\n"; }

std::string format_log_record(const EpochRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu\t%d\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n", r.epoch, r.phase, r.lr, r.train_loss,
                r.val_cider, r.val_bleu4, r.wall_seconds);
  return buf;
}

EvalCorpus caption_split(ModelParams& p, const HyperParams& hp, const DecoderConfig& config,
                         const std::vector<Sample>& samples, const Vocab& vocab, const GenerateConfig& gen,
                         std::vector<Generation>* generations) {
  EvalCorpus corpus;
  corpus.reserve(samples.size());
  if (generations) generations->clear();
  for (const auto& s : samples) {
    Generation out = generate(p, hp, config, s.features, s.topics, gen);
    corpus.push_back({s.image_id, vocab.decode(out.tokens), s.references});
    if (generations) generations->push_back(std::move(out));
  }
  return corpus;
}

double forced_accuracy(ModelParams& p, const HyperParams& hp, const DecoderConfig& config,
                       const std::vector<Sample>& samples, const Vocab& vocab) {
  std::size_t correct = 0, total = 0;
  for (const auto& s : samples) {
    for (const auto& ref : s.encoded_references(vocab)) {
      const auto acc = teacher_forced_accuracy(p, hp, config, s.features, s.topics, ref);
      correct += acc.correct;
      total += acc.total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

double mean_loss(ModelParams& p, const HyperParams& hp, const DecoderConfig& config,
                 const std::vector<Sample>& samples, const Vocab& vocab) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    for (const auto& ref : s.encoded_references(vocab)) {
      Graph g;
      sum += sequence_loss(g, p, hp, config, s.features, s.topics, ref).scalar();
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

namespace {

struct Item {
  const Sample* sample;
  std::vector<std::size_t> caption;
};

void set_frozen(ModelParams& p, Variant variant, bool visual_frozen) {
  for (Parameter* q : p.all()) q->frozen = false;
  if (visual_frozen)
    for (Parameter* q : visual_parameters(p, variant)) q->frozen = true;
}

}  // namespace

TrainResult train(const TrainData& data, const TrainConfig& config, const std::optional<Checkpoint>& resume,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (!data.train || !data.val || !data.vocab) throw std::invalid_argument("train: missing data");
  if (data.train->empty()) throw std::invalid_argument("train: empty training split");
  if (data.val->size() < 2) throw std::invalid_argument("train: validation split needs at least 2 images");
  const HyperParams hp = data.hyper.resolved();
  hp.validate();
  if (hp.vocab != data.vocab->size()) {
    throw std::invalid_argument("train: hyper vocab " + std::to_string(hp.vocab) + " != vocabulary size " +
                                std::to_string(data.vocab->size()));
  }

  ModelParams params = resume ? resume->params : init_params(hp, config.seed);
  if (resume && !(resume->hyper.resolved() == hp)) throw std::invalid_argument("train: resume checkpoint dimensions differ");
  std::size_t epoch = resume ? static_cast<std::size_t>(resume->epoch) : 0;

  std::vector<Item> items;
  for (const auto& s : *data.train)
    for (auto& ref : s.encoded_references(*data.vocab)) items.push_back({&s, std::move(ref)});

  const bool two_phase = uses_topics(data.variant);
  const std::size_t phase1_len = two_phase ? std::min(config.phase1_epochs, config.max_epochs) : 0;
  const AdamSettings adam{config.beta1, config.beta2, config.epsilon};
  const GenerateConfig gen{DecodeMode::greedy, 1, hp.max_len};

  OptimState optim;
  TrainResult result;
  double best_cider = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  int last_phase = 0;
  const auto all = params.all();

  auto snapshot = [&](std::size_t ep) {
    Checkpoint c{hp, data.variant, ep, params};
    for (Parameter* q : c.params.all()) {
      q->frozen = false;
      q->zero_grad();
    }
    return c;
  };

  if (resume) result.best = snapshot(epoch);

  for (; epoch < config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const int phase = epoch < phase1_len ? 1 : 2;
    if (phase != last_phase) {
      since_best = 0;
      last_phase = phase;
    }
    DecoderConfig dc;
    dc.variant = data.variant;
    dc.visual_enabled = phase == 2;
    dc.phase1_input = config.phase1_input;
    dc.legacy_topic_attention = data.legacy_topic_attention;
    set_frozen(params, data.variant, phase == 1);
    const double lr = phase == 1 ? config.phase1_lr : lr_schedule(static_cast<double>(epoch - phase1_len), config);

    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(config.seed, epoch));
    rng.shuffle(order.begin(), order.end());

    Rng noise_rng(mix_seed(mix_seed(config.seed, epoch), 0x7091c));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch) {
      const std::size_t e = std::min(order.size(), b + config.batch);
      params.zero_grad();
      for (std::size_t i = b; i < e; ++i) {
        const Item& it = items[order[i]];
        TopicSet topics = it.sample->topics;
        if (config.topic_noise > 0.0)
          corrupt_topics(topics.ids, it.sample->references, *data.vocab, config.topic_noise, noise_rng);
        Graph g;
        Var loss = sequence_loss(g, params, hp, dc, it.sample->features, topics, it.caption);
        loss_sum += loss.scalar();
        g.backward(loss.id);
      }
      const double inv = 1.0 / static_cast<double>(e - b);
      for (Parameter* q : all)
        for (double& gv : q->grad) gv *= inv;
      clip_gradients(all, config.clip_norm);
      adam_update(all, optim, lr, adam);
    }

    const EvalCorpus val = caption_split(params, hp, dc, *data.val, *data.vocab, gen);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.phase = phase;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(items.size());
    rec.val_cider = cider(val);
    rec.val_bleu4 = bleu(val, 4)[3];
    if (config.log_wall_time) {
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    result.log.push_back(rec);

    if (rec.val_cider > best_cider) {
      best_cider = rec.val_cider;
      result.best = snapshot(rec.epoch);
      since_best = 0;
    } else {
      ++since_best;
    }
    if (on_epoch) on_epoch(rec, snapshot(rec.epoch));

    if (phase == 2) {
      const std::size_t done = epoch + 1 - phase1_len;
      if (done >= config.min_phase2_epochs && since_best > config.patience) {
        ++epoch;
        break;
      }
    }
  }
  result.last = snapshot(epoch);
  if (result.log.empty() && !resume) result.best = result.last;
  return result;
}

}  // namespace simnet
