// Acceptance suite: one PASS/FAIL line per criterion. Run with criterion
// numbers as arguments to select a subset.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "helpers.hpp"
#include "oracles.hpp"
#include "simnet/training.hpp"

using namespace simnet;

namespace {

// Tolerances.
constexpr double kGradTol = 1e-4;
constexpr double kGradFloor = 1e-6;  // relative-error denominator floor
constexpr double kSimplexTol = 1e-9;
constexpr double kCompositionTol = 1e-12;
constexpr double kMetricTol = 1e-9;
constexpr double kOverfitAccuracy = 0.95;
constexpr double kOverfitBleu4 = 0.90;
constexpr std::size_t kOverfitEpochs = 300;
constexpr double kOverfitMinutes = 10.0;
constexpr double kCorruptionRate = 0.2;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

HyperParams criterion_dims() {
  HyperParams hp;
  hp.g = 6;
  hp.e = 4;
  hp.d = 5;
  hp.k = 3;
  hp.m = 2;
  hp.vocab = 7;
  hp.g_raw = 5;
  return hp.resolved();
}

// ---- 1 ----
Outcome gradient_fidelity() {
  const auto start = std::chrono::steady_clock::now();
  const HyperParams hp = criterion_dims();
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    ModelParams p = testutil::random_params(hp, 500 + i);
    const FeatureGrid f = testutil::random_grid(hp, rng);
    const TopicSet t = testutil::random_topics(hp, rng);
    // One word plus the end token: two decoder steps.
    const auto cap = testutil::random_caption(hp, rng, 1);
    DecoderConfig config;
    const auto params = p.all();
    worst = std::max(worst, grad_check([&](Graph& g) { return sequence_loss(g, p, hp, config, f, t, cap); }, params,
                                       1e-5, kGradFloor));
  }
  const double secs = seconds_since(start);
  return {worst < kGradTol && secs < 60.0, fmt("max relative error %.3g over 20 instances (floor %.0e), %.1f s", worst, kGradFloor, secs)};
}

// ---- 2 ----
Outcome simplex_invariants() {
  const auto start = std::chrono::steady_clock::now();
  const HyperParams hp = criterion_dims();
  Rng rng(202);
  double worst_sum = 0.0, min_entry = 1.0, gamma_lo = 1.0, gamma_hi = 0.0;
  std::size_t between_violations = 0, steps = 0;
  for (int i = 0; i < 1000; ++i) {
    ModelParams p = testutil::random_params(hp, 9000 + i, 1.0);
    DecoderConfig config;
    Graph g;
    ImageContext image = prepare_image(g, p, config, testutil::random_grid(hp, rng, 2.0), testutil::random_topics(hp, rng));
    DecoderState st{constant(g, testutil::random_tensor(rng, {hp.d})), constant(g, testutil::random_tensor(rng, {hp.d}, 2.0)),
                    rng.below(hp.vocab), 0};
    const StepResult r = decode_step(g, p, config, st, image);
    for (const auto* w : {&r.trace.alpha, &r.trace.alpha_tilde, &r.trace.beta}) {
      double s = 0.0;
      for (double x : *w) {
        s += x;
        min_entry = std::min(min_entry, x);
      }
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
    gamma_lo = std::min(gamma_lo, r.trace.gamma);
    gamma_hi = std::max(gamma_hi, r.trace.gamma);
    const Tensor& s = r.internals.s->value();
    const Tensor& rv = r.internals.r->value();
    const Tensor& c = r.internals.c.value();
    for (std::size_t j = 0; j < hp.e; ++j) {
      if (c[j] < std::min(s[j], rv[j]) || c[j] > std::max(s[j], rv[j])) ++between_violations;
    }
    ++steps;
  }
  const double secs = seconds_since(start);
  const bool pass = worst_sum <= kSimplexTol && min_entry >= 0.0 && gamma_lo > 0.0 && gamma_hi < 1.0 &&
                    between_violations == 0 && secs < 30.0;
  return {pass, fmt("%zu steps, max |sum-1| %.3g, min weight %.3g, gamma in [%.6f, %.6f], c outside [s,r] %zu, %.1f s",
                    steps, worst_sum, min_entry, gamma_lo, gamma_hi, between_violations, secs)};
}

// ---- 3 ----
Outcome gate_analytics() {
  const HyperParams hp = criterion_dims();
  ModelParams p = testutil::random_params(hp, 303);
  Rng rng(3);
  const Tensor h = testutil::random_tensor(rng, {hp.d});
  const Tensor s = testutil::random_tensor(rng, {hp.e}), r = testutil::random_tensor(rng, {hp.e});
  // Equal scores: both sides use the same scorer on the same vector.
  ModelParams eq = p;
  eq.W_Sr.value = eq.W_Ss.value;
  eq.b_Sr.value = eq.b_Ss.value;
  Graph g;
  const double g_equal = merge_gate(g, eq, constant(g, s), constant(g, s), constant(g, h)).gamma.scalar();
  // Zero projection: both scores are 0 whatever the inputs.
  ModelParams zero = p;
  zero.w_S().value = Tensor({hp.a_t});
  Graph g2;
  const double g_zero = merge_gate(g2, zero, constant(g2, s), constant(g2, r), constant(g2, h)).gamma.scalar();

  // Sweep S(s) with S(r) fixed: one active unit, s moved along its input.
  ModelParams sweep = ModelParams::shaped(hp);
  sweep.w_S().value[0] = 1.0;
  sweep.W_Ss.value.at(0, 0) = 1.0;
  sweep.W_Sr.value.at(0, 0) = 1.0;
  Tensor r_fixed({hp.e});
  r_fixed[0] = 0.2;
  double prev_gamma = -1.0, prev_score = -2.0;
  bool increasing = true;
  for (int i = 0; i < 100; ++i) {
    Tensor sv({hp.e});
    sv[0] = -3.0 + 6.0 * i / 99.0;
    Graph gs;
    const double score =
        importance_score(gs, sweep, constant(gs, Tensor({hp.d})), constant(gs, sv), sweep.W_Ss, sweep.b_Ss).scalar();
    const double gamma = merge_gate(gs, sweep, constant(gs, sv), constant(gs, r_fixed), constant(gs, Tensor({hp.d})))
                             .gamma.scalar();
    increasing = increasing && score > prev_score && gamma > prev_gamma;
    prev_score = score;
    prev_gamma = gamma;
  }
  const bool pass = g_equal == 0.5 && g_zero == 0.5 && increasing;
  return {pass, fmt("gamma at equal scores %.17g and %.17g; sweep of 100 strictly increasing: %s", g_equal, g_zero,
                    increasing ? "yes" : "no")};
}

// ---- 4 ----
Outcome weight_tying() {
  const HyperParams hp = criterion_dims();
  ModelParams p = testutil::random_params(hp, 404);
  Rng rng(4);
  const FeatureGrid f = testutil::random_grid(hp, rng);
  const TopicSet t = testutil::random_topics(hp, rng);
  const auto cap = testutil::random_caption(hp, rng, 2);
  DecoderConfig config;
  p.zero_grad();
  Graph g;
  g.backward(sequence_loss(g, p, hp, config, f, t, cap).id);

  // The gradient must carry both uses: compare with central differences.
  const Tensor before = p.W_Qh.value;
  const std::vector<double> grad = p.W_Qh.grad;
  double fd_err = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const double h = 1e-5;
    auto loss_at = [&](double x) {
      p.W_Qh.value.storage()[i] = x;
      Graph gg;
      return sequence_loss(gg, p, hp, config, f, t, cap).scalar();
    };
    const double fd = (loss_at(before[i] + h) - loss_at(before[i] - h)) / (2 * h);
    p.W_Qh.value.storage()[i] = before[i];
    fd_err = std::max(fd_err, std::abs(fd - grad[i]) / std::max(kGradFloor, std::abs(fd) + std::abs(grad[i])));
  }

  // Also check that both paths contribute: the gate-only variant gives a different gradient.
  ModelParams q = p;
  q.zero_grad();
  DecoderConfig topic_only;
  topic_only.variant = Variant::topic;
  Graph g3;
  g3.backward(sequence_loss(g3, q, hp, topic_only, f, t, cap).id);
  const bool gate_path_adds = q.W_Qh.grad != grad;

  const double lr = 0.01;
  const AdamSettings adam;
  OptimState st;
  const auto writes_before = p.W_Qh.writes;
  adam_update(p.all(), st, lr, adam);

  // Hand-composed first Adam step from the summed gradient.
  std::vector<double> expect(before.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    const double m = (1.0 - adam.beta1) * grad[i];
    const double v = (1.0 - adam.beta2) * grad[i] * grad[i];
    const double mh = m / (1.0 - adam.beta1), vh = v / (1.0 - adam.beta2);
    expect[i] = before[i] - lr * mh / (std::sqrt(vh) + adam.epsilon);
  }
  const bool exact = std::memcmp(expect.data(), p.W_Qh.value.storage().data(), expect.size() * sizeof(double)) == 0;
  const auto writes = p.W_Qh.writes - writes_before;
  const bool pass = exact && writes == 1 && fd_err < kGradTol && gate_path_adds;
  return {pass, fmt("writes %llu, bit-exact %s, gradient vs finite differences %.3g, gate path adds gradient %s",
                    static_cast<unsigned long long>(writes), exact ? "yes" : "no", fd_err, gate_path_adds ? "yes" : "no")};
}

// ---- 5 ----
Outcome composition() {
  const HyperParams hp = criterion_dims();
  Rng rng(505);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    ModelParams p = testutil::random_params(hp, 700 + i);
    const FeatureGrid f = testutil::random_grid(hp, rng);
    const TopicSet t = testutil::random_topics(hp, rng);
    const Tensor h0 = testutil::random_tensor(rng, {hp.d}), c0 = testutil::random_tensor(rng, {hp.d});
    const std::size_t y = rng.below(hp.vocab);
    DecoderConfig config;
    Graph g;
    const StepResult res = decode_step(g, p, config, {constant(g, h0), constant(g, c0), y, 0},
                                       prepare_image(g, p, config, f, t));

    Graph m;
    Var V = project_features(m, p, f.raw);
    Var T = topic_matrix(m, p, t);
    auto in = input_attention(m, p, V, constant(m, h0));
    auto [h, c] = lstm_step(m, p, concat_rows(in.summary, embed(param(m, p.Emb), y)), constant(m, h0), constant(m, c0));
    auto out = output_attention(m, p, V, h);
    Var r = visual_transform(m, p, out.summary);
    auto top = topic_attention(m, p, T, h);
    Var s = context_fuse(m, p, top.summary, h);
    auto gate = merge_gate(m, p, s, r, h);
    auto probs = vocab_project(m, p, gate.merged);

    worst = std::max(worst, testutil::max_abs_diff(res.out.probs.value().values(), probs.probs.value().values()));
    worst = std::max(worst, testutil::max_abs_diff(res.state.h.value().values(), h.value().values()));
    worst = std::max(worst, std::abs(res.trace.gamma - gate.gamma.scalar()));
  }
  return {worst < kCompositionTol, fmt("100 instances, max absolute difference %.3g", worst)};
}

// ---- 6 ----
Tokens words(const std::string& s) {
  Tokens out;
  std::string w;
  for (char ch : s + " ") {
    if (ch == ' ') {
      if (!w.empty()) out.push_back(w);
      w.clear();
    } else {
      w += ch;
    }
  }
  return out;
}

Outcome metric_oracles() {
  const EvalCorpus micro = {
      {"i1", words("a cat sits on the mat"), {words("a cat sits on a mat"), words("the cat is on the mat")}},
      {"i2", words("two dogs run"), {words("two dogs run in the park")}},
      {"i3", words("a red ball"), {words("the red ball on the grass"), words("a red ball")}},
  };
  const auto b = bleu(micro), ob = oracle::bleu(micro);
  double worst = 0.0;
  for (std::size_t n = 0; n < 4; ++n) worst = std::max(worst, std::abs(b[n] - ob[n]));
  worst = std::max(worst, std::abs(rouge_l(micro) - oracle::rouge_l(micro)));
  worst = std::max(worst, std::abs(cider(micro) - oracle::cider(micro)));

  EvalCorpus identity = micro;
  for (auto& item : identity) item.hypothesis = item.references[0];
  const double id_bleu4 = bleu(identity)[3], id_rouge = rouge_l(identity);
  const bool pass = worst < kMetricTol && id_bleu4 == 1.0 && id_rouge == 1.0;
  return {pass, fmt("max difference from brute force %.3g (BLEU-4 %.6f, ROUGE-L %.6f, CIDEr %.6f); identity BLEU-4 %.17g "
                    "ROUGE-L %.17g",
                    worst, b[3], rouge_l(micro), cider(micro), id_bleu4, id_rouge)};
}

// ---- 7, 9, 11: small-corpus overfitting ----
struct OverfitRun {
  SynthDataset data;
  HyperParams hp;
  TrainResult result;
  double seconds = 0.0;
};

OverfitRun overfit(std::uint64_t seed) {
  OverfitRun run;
  run.data = synthesize(seed, 50, {});
  run.hp.vocab = run.data.vocab.size();
  TrainConfig c = TrainConfig::desk();
  c.seed = seed;
  c.max_epochs = kOverfitEpochs;
  c.patience = kOverfitEpochs;  // no early stop: fitting the training set is the point
  c.log_wall_time = false;
  const TrainData d{&run.data.train, &run.data.train, &run.data.vocab, run.hp, Variant::full, false};
  const auto start = std::chrono::steady_clock::now();
  run.result = train(d, c);
  run.seconds = seconds_since(start);
  return run;
}

std::map<std::uint64_t, OverfitRun>& overfit_cache() {
  static std::map<std::uint64_t, OverfitRun> cache;
  return cache;
}

const OverfitRun& overfit_cached(std::uint64_t seed) {
  auto& cache = overfit_cache();
  auto it = cache.find(seed);
  if (it == cache.end()) it = cache.emplace(seed, overfit(seed)).first;
  return it->second;
}

Outcome synthetic_overfit() {
  const OverfitRun& run = overfit_cached(42);
  ModelParams p = run.result.best.params;
  DecoderConfig dc;
  const double acc = forced_accuracy(p, run.result.best.hyper, dc, run.data.train, run.data.vocab);
  const EvalCorpus corpus = caption_split(p, run.result.best.hyper, dc, run.data.train, run.data.vocab,
                                          {DecodeMode::greedy, 1, run.result.best.hyper.max_len});
  const double b4 = bleu(corpus)[3];
  const bool pass = acc >= kOverfitAccuracy && b4 >= kOverfitBleu4 && run.seconds < kOverfitMinutes * 60.0;
  return {pass, fmt("best epoch %llu of %zu, teacher-forced accuracy %.4f, training BLEU-4 %.4f, %.1f s",
                    static_cast<unsigned long long>(run.result.best.epoch), run.result.log.size(), acc, b4, run.seconds)};
}

Outcome gate_by_word_class() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : {42, 43, 44}) {
    const OverfitRun& run = overfit_cached(seed);
    ModelParams p = run.result.best.params;
    std::vector<Generation> gens;
    caption_split(p, run.result.best.hyper, {}, run.data.train, run.data.vocab,
                  {DecodeMode::greedy, 1, run.result.best.hyper.max_len}, &gens);
    const Lexicon& lex = Lexicon::standard();
    double noun = 0, func = 0;
    std::size_t n_noun = 0, n_func = 0;
    for (const auto& gen : gens) {
      for (const auto& tr : gen.traces) {
        const auto pos = lex.pos_of(run.data.vocab.token(tr.token));
        if (pos == Pos::noun) noun += tr.gamma, ++n_noun;
        if (pos == Pos::function) func += tr.gamma, ++n_func;
      }
    }
    const double mn = n_noun ? noun / n_noun : 0.0, mf = n_func ? func / n_func : 0.0;
    const bool win = n_noun > 0 && n_func > 0 && mn > mf;
    wins += win;
    detail += fmt("%sseed %llu noun %.4f (%zu) function %.4f (%zu)", detail.empty() ? "" : "; ",
                  static_cast<unsigned long long>(seed), mn, n_noun, mf, n_func);
  }
  return {wins >= 2, fmt("%d of 3 seeds: ", wins) + detail};
}

Outcome determinism() {
  const OverfitRun& first = overfit_cached(42);
  const OverfitRun second = overfit(42);
  auto log_text = [](const TrainResult& r) {
    std::string s = format_log_header();
    for (const auto& rec : r.log) s += format_log_record(rec);
    return s;
  };
  const bool same_ckpt = encode_checkpoint(first.result.best) == encode_checkpoint(second.result.best);
  const bool same_log = log_text(first.result) == log_text(second.result);
  return {same_ckpt && same_log, fmt("best checkpoint identical: %s, log identical: %s (%zu epochs)",
                                     same_ckpt ? "yes" : "no", same_log ? "yes" : "no", second.result.log.size())};
}

// ---- 8, 10: held-out ablation ----
struct HeldOut {
  double clean = 0.0;
  double corrupt = 0.0;
  std::size_t best_epoch = 0;
};

using AblationTable = std::map<std::uint64_t, std::map<Variant, HeldOut>>;

const AblationTable& ablation() {
  static const AblationTable table = [] {
    AblationTable t;
    for (std::uint64_t seed : {1, 2, 3}) {
      SynthOptions o;
      o.split = {50, 100};
      const SynthDataset ds = synthesize(seed, 500, o);
      HyperParams hp;
      hp.vocab = ds.vocab.size();
      std::vector<Sample> corrupted = ds.test;
      Rng rng(mix_seed(seed, 777));
      for (auto& s : corrupted) corrupt_topics(s.topics.ids, s.references, ds.vocab, kCorruptionRate, rng);
      for (Variant v : {Variant::full, Variant::input_output_topic, Variant::input_output, Variant::topic}) {
        TrainConfig c = TrainConfig::desk();
        c.seed = seed;
        c.log_wall_time = false;
        const auto start = std::chrono::steady_clock::now();
        TrainResult r = train({&ds.train, &ds.val, &ds.vocab, hp, v, false}, c);
        DecoderConfig dc;
        dc.variant = v;
        const GenerateConfig gen{DecodeMode::greedy, 1, r.best.hyper.max_len};
        HeldOut h;
        h.clean = cider(caption_split(r.best.params, r.best.hyper, dc, ds.test, ds.vocab, gen));
        h.corrupt = cider(caption_split(r.best.params, r.best.hyper, dc, corrupted, ds.vocab, gen));
        h.best_epoch = r.best.epoch;
        t[seed][v] = h;
        std::printf("  seed %llu %-20s test CIDEr %.4f corrupted %.4f best epoch %zu/%zu (%.0f s)\n",
                    static_cast<unsigned long long>(seed), std::string(variant_name(v)).c_str(), h.clean, h.corrupt,
                    h.best_epoch, r.log.size(), seconds_since(start));
        std::fflush(stdout);
      }
    }
    return t;
  }();
  return table;
}

Outcome table_ordering() {
  int wins = 0;
  std::string detail;
  for (const auto& [seed, row] : ablation()) {
    const double full = row.at(Variant::full).clean, iot = row.at(Variant::input_output_topic).clean,
                 vis = row.at(Variant::input_output).clean, top = row.at(Variant::topic).clean;
    const bool win = full >= iot && iot >= vis && full >= top;
    wins += win;
    detail += fmt("%sseed %llu full %.4f iot %.4f visual %.4f topic %.4f%s", detail.empty() ? "" : "; ",
                  static_cast<unsigned long long>(seed), full, iot, vis, top, win ? "" : " (order broken)");
  }
  return {wins >= 2, fmt("%d of 3 seeds: ", wins) + detail};
}

Outcome corruption_robustness() {
  int wins = 0;
  std::string detail;
  for (const auto& [seed, row] : ablation()) {
    const auto& f = row.at(Variant::full);
    const auto& t = row.at(Variant::topic);
    const double df = f.clean - f.corrupt, dt = t.clean - t.corrupt;
    wins += df < dt;
    detail += fmt("%sseed %llu drop full %.4f topic %.4f", detail.empty() ? "" : "; ",
                  static_cast<unsigned long long>(seed), df, dt);
  }
  return {wins >= 2, fmt("%d of 3 seeds: ", wins) + detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, gradient_fidelity}, {2, simplex_invariants}, {3, gate_analytics}, {4, weight_tying},
      {5, composition},       {6, metric_oracles},     {7, synthetic_overfit}, {8, table_ordering},
      {9, gate_by_word_class}, {10, corruption_robustness}, {11, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d: %s  %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
