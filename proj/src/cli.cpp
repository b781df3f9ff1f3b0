#include "simnet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "simnet/binary_io.hpp"
#include "simnet/checkpoint.hpp"
#include "simnet/trace.hpp"
#include "simnet/training.hpp"

namespace fs = std::filesystem;

namespace simnet {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) out += (i ? " " : "") + words[i];
  return out;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw UserError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | mode);
  if (!out) throw UserError("cannot open " + path.string() + " for writing");
  return out;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UserError("cannot create directory " + dir.string());
  const fs::path probe = dir / ".simnet_probe";
  {
    std::ofstream p(probe);
    if (!p) throw UserError("directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

Variant variant_arg(const std::string& name) {
  auto v = parse_variant(name);
  if (!v) throw UserError("unknown variant '" + name + "'");
  return *v;
}

std::vector<Sample> load_split(const fs::path& manifest) {
  if (!fs::exists(manifest)) throw UserError("manifest not found: " + manifest.string());
  auto samples = load_dataset(manifest);
  if (samples.empty()) throw UserError("manifest " + manifest.string() + " has no records");
  return samples;
}

Vocab load_vocab(const fs::path& path) {
  if (!fs::exists(path)) throw UserError("vocabulary not found: " + path.string());
  try {
    return Vocab::load(path);
  } catch (const std::runtime_error& e) {
    throw UserError(e.what());
  }
}

Checkpoint load_ckpt(const fs::path& path) {
  if (!fs::exists(path)) throw UserError("checkpoint not found: " + path.string());
  return load_checkpoint(path);
}

/// Names the tensor a dataset would disagree with.
void check_compatible(const HyperParams& hp, const std::vector<Sample>& samples, const Vocab& vocab) {
  if (vocab.size() != hp.vocab) {
    throw ShapeError("tensor Emb expects a vocabulary of " + std::to_string(hp.vocab) + " tokens, vocabulary has " +
                     std::to_string(vocab.size()));
  }
  for (const auto& s : samples) {
    if (s.features.raw.rows() != hp.g_raw) {
      throw ShapeError("tensor W_VI expects " + std::to_string(hp.g_raw) + "-dim region features, image " +
                       s.image_id + " has " + std::to_string(s.features.raw.rows()));
    }
    for (auto id : s.topics.ids) {
      if (id >= hp.vocab) throw UserError("image " + s.image_id + ": topic id " + std::to_string(id) + " outside vocabulary");
    }
  }
}

// Flags shared by train and ablate. Unset optionals keep the preset value.
struct TrainFlags {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  std::optional<std::size_t> max_epochs, phase1_epochs, batch, patience, min_phase2_epochs;
  std::optional<double> phase1_lr, phase2_lr, half_life, clip, beta1, beta2, topic_noise;
  std::optional<std::size_t> g, e, d, max_len;
  std::string phase1_input = "removed";
  bool no_wall_time = false;
  bool legacy_topic_attention = false;
  bool quiet = false;
  std::size_t save_every = 0;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--preset", f.preset, "desk (default) or full settings")->check(CLI::IsMember({"desk", "full"}));
  app->add_option("--seed", f.seed, "initialization and shuffling seed");
  app->add_option("--max-epochs", f.max_epochs, "epoch cap over both phases (full 50, desk 80)");
  app->add_option("--phase1-epochs", f.phase1_epochs, "topic-only epochs (full 20, desk 10)");
  app->add_option("--phase1-lr", f.phase1_lr, "phase-1 rate (full 4e-4, desk 4e-3)");
  app->add_option("--phase2-lr", f.phase2_lr, "phase-2 starting rate (full 1e-5, desk 2e-3)");
  app->add_option("--batch", f.batch, "minibatch size (full 80, desk 8)");
  app->add_option("--half-life", f.half_life, "phase-2 epochs per halving of the rate (50)");
  app->add_option("--patience", f.patience, "phase-2 epochs without CIDEr gain before stopping (6)");
  app->add_option("--min-phase2-epochs", f.min_phase2_epochs, "phase-2 epochs run before early stopping (1)");
  app->add_option("--clip", f.clip, "global gradient-norm clip (5)");
  app->add_option("--beta1", f.beta1, "Adam beta1 (0.8)");
  app->add_option("--beta2", f.beta2, "Adam beta2 (0.999)");
  app->add_option("--topic-noise", f.topic_noise, "rate of wrong training topics, redrawn each epoch (0.2)");
  app->add_option("--phase1-input", f.phase1_input, "LSTM visual input during phase 1")
      ->check(CLI::IsMember({"removed", "frozen_attention"}));
  app->add_option("--g", f.g, "projected feature size (full 512, desk 32)");
  app->add_option("--e", f.e, "embedding size (full 256, desk 32)");
  app->add_option("--d", f.d, "hidden size (full 512, desk 64)");
  app->add_option("--max-len", f.max_len, "generation length cap (20)");
  app->add_flag("--no-wall-time", f.no_wall_time, "log 0 instead of epoch wall time");
  app->add_flag("--legacy-topic-attention", f.legacy_topic_attention, "score topics against the previous word");
  app->add_option("--save-every", f.save_every, "also keep a checkpoint every N epochs");
  app->add_flag("--quiet", f.quiet, "no per-epoch output");
}

TrainConfig make_config(const TrainFlags& f) {
  TrainConfig c = f.preset == "full" ? TrainConfig::full_scale() : TrainConfig::desk();
  c.seed = f.seed;
  if (f.max_epochs) c.max_epochs = *f.max_epochs;
  if (f.phase1_epochs) c.phase1_epochs = *f.phase1_epochs;
  if (f.phase1_lr) c.phase1_lr = *f.phase1_lr;
  if (f.phase2_lr) c.phase2_lr = *f.phase2_lr;
  if (f.batch) c.batch = *f.batch;
  if (f.half_life) c.half_life = *f.half_life;
  if (f.patience) c.patience = *f.patience;
  if (f.min_phase2_epochs) c.min_phase2_epochs = *f.min_phase2_epochs;
  if (f.clip) c.clip_norm = *f.clip;
  if (f.beta1) c.beta1 = *f.beta1;
  if (f.beta2) c.beta2 = *f.beta2;
  if (f.topic_noise) c.topic_noise = *f.topic_noise;
  c.phase1_input = f.phase1_input == "frozen_attention" ? Phase1Input::frozen_attention : Phase1Input::removed;
  c.log_wall_time = !f.no_wall_time;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UserError(e.what());
  }
  return c;
}

HyperParams make_hyper(const TrainFlags& f, const std::vector<Sample>& train, const Vocab& vocab) {
  HyperParams hp = f.preset == "full" ? HyperParams::full_scale() : HyperParams{};
  if (f.g) hp.g = *f.g;
  if (f.e) hp.e = *f.e;
  if (f.d) hp.d = *f.d;
  if (f.max_len) hp.max_len = *f.max_len;
  hp.g_raw = train.front().features.raw.rows();
  hp.k = train.front().features.raw.cols();
  hp.m = train.front().topics.ids.size();
  hp.a_v = hp.k;
  hp.a_t = hp.m;
  hp.vocab = vocab.size();
  try {
    hp = hp.resolved();
    hp.validate();
  } catch (const std::invalid_argument& e) {
    throw UserError(e.what());
  }
  return hp;
}

struct DatasetDir {
  std::vector<Sample> train, val, test;
  Vocab vocab;
};

DatasetDir load_dataset_dir(const fs::path& dir, bool need_test) {
  if (!fs::is_directory(dir)) throw UserError("dataset directory not found: " + dir.string());
  DatasetDir d;
  d.vocab = load_vocab(dir / "vocab.txt");
  d.train = load_split(dir / "train.tsv");
  d.val = load_split(dir / "val.tsv");
  if (d.val.size() < 2) throw UserError("validation split needs at least 2 images for CIDEr");
  if (need_test) d.test = load_split(dir / "test.tsv");
  return d;
}

struct TrainOutcome {
  TrainResult result;
  DecoderConfig decoder;
};

TrainOutcome run_training(const DatasetDir& data, const TrainFlags& flags, Variant variant, const fs::path& out_dir,
                          const std::optional<fs::path>& resume_path, std::ostream& out) {
  make_dir(out_dir);
  const TrainConfig config = make_config(flags);
  HyperParams hp = make_hyper(flags, data.train, data.vocab);
  std::optional<Checkpoint> resume;
  if (resume_path) {
    resume = load_ckpt(*resume_path);
    if (resume->variant != variant) {
      throw UserError("--variant " + std::string(variant_name(variant)) + " conflicts with checkpoint variant " +
                      std::string(variant_name(resume->variant)));
    }
    const HyperParams& r = resume->hyper;
    if ((flags.g && *flags.g != r.g) || (flags.e && *flags.e != r.e) || (flags.d && *flags.d != r.d)) {
      throw UserError("dimension flags conflict with the resumed checkpoint");
    }
    hp.g = r.g;
    hp.e = r.e;
    hp.d = r.d;
    if (!flags.max_len) hp.max_len = r.max_len;
    if (!(hp == r)) throw UserError("dataset dimensions do not match the resumed checkpoint");
    if (resume->epoch >= config.max_epochs) {
      throw UserError("checkpoint is already at epoch " + std::to_string(resume->epoch) + ", --max-epochs is " +
                      std::to_string(config.max_epochs));
    }
  }
  check_compatible(hp, data.train, data.vocab);
  check_compatible(hp, data.val, data.vocab);

  const fs::path log_path = out_dir / "train_log.tsv";
  const bool append = resume && fs::exists(log_path);
  std::ofstream log = open_out(log_path, append ? std::ios::app : std::ios::trunc);
  if (!append) log << format_log_header();
  log.flush();

  TrainData td{&data.train, &data.val, &data.vocab, hp, variant, flags.legacy_topic_attention};
  TrainOutcome outcome;
  outcome.result = train(td, config, resume, [&](const EpochRecord& rec, const Checkpoint& current) {
    log << format_log_record(rec);
    log.flush();
    if (!flags.quiet) out << format_log_record(rec) << std::flush;
    if (flags.save_every > 0 && rec.epoch % flags.save_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04zu.ckpt", rec.epoch);
      save_checkpoint(out_dir / name, current);
    }
  });
  save_checkpoint(out_dir / "best.ckpt", outcome.result.best);
  save_checkpoint(out_dir / "last.ckpt", outcome.result.last);
  outcome.decoder.variant = variant;
  outcome.decoder.legacy_topic_attention = flags.legacy_topic_attention;
  return outcome;
}

void write_hypotheses(std::ostream& out, const EvalCorpus& corpus) {
  for (const auto& item : corpus) out << item.image_id << '\t' << join_words(item.hypothesis) << '\n';
}

EvalCorpus match_references(const std::vector<Hypothesis>& hyps, const std::vector<Sample>& samples) {
  std::map<std::string, const Sample*> by_id;
  for (const auto& s : samples) by_id[s.image_id] = &s;
  EvalCorpus corpus;
  std::map<std::string, bool> seen;
  for (const auto& h : hyps) {
    auto it = by_id.find(h.image_id);
    if (it == by_id.end()) throw UserError("hypothesis for unknown image id '" + h.image_id + "'");
    if (seen[h.image_id]) throw UserError("duplicate hypothesis for image id '" + h.image_id + "'");
    seen[h.image_id] = true;
    corpus.push_back({h.image_id, h.tokens, it->second->references});
  }
  return corpus;
}

std::string safe_filename(const std::string& id) {
  std::string out;
  for (char ch : id) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.') ? ch : '_';
  return out.empty() ? "_" : out;
}

// ---- commands ----

int cmd_synth(std::uint64_t seed, std::size_t scenes, const std::optional<std::size_t>& val,
              const std::optional<std::size_t>& test, const SynthOptions& base, const fs::path& out_dir, std::ostream& out) {
  if (scenes == 0) throw UserError("--scenes must be at least 1");
  SynthOptions opt = base;
  opt.split.val = val.value_or(scenes / 10);
  opt.split.test = test.value_or(scenes / 5);
  if (opt.split.val + opt.split.test >= scenes) throw UserError("--val + --test leave no training scenes");
  if (opt.world.captions_per_scene < 1 || opt.world.captions_per_scene > 5) throw UserError("--captions must be 1..5");
  if (opt.topics == 0) throw UserError("--topics must be at least 1");
  make_dir(out_dir);
  const SynthDataset data = synthesize(seed, scenes, opt);
  write_dataset(out_dir, data);
  std::vector<Sample> all = data.train;
  all.insert(all.end(), data.val.begin(), data.val.end());
  all.insert(all.end(), data.test.begin(), data.test.end());
  write_manifest(out_dir / "all.tsv", all);
  out << "scenes\t" << scenes << "\ntrain\t" << data.train.size() << "\nval\t" << data.val.size() << "\ntest\t"
      << data.test.size() << "\nvocab\t" << data.vocab.size() << "\nnouns\t" << Lexicon::standard().nouns().size()
      << "\nnouns_in_vocab\t" << noun_ids(data.vocab).size() << '\n';
  return 0;
}

int cmd_train(const fs::path& data_dir, const fs::path& out_dir, const std::string& variant, const TrainFlags& flags,
              const std::optional<std::string>& resume, std::ostream& out) {
  const Variant v = variant_arg(variant);
  make_config(flags);
  const DatasetDir data = load_dataset_dir(data_dir, false);
  std::optional<fs::path> rp;
  if (resume) rp = *resume;
  const auto outcome = run_training(data, flags, v, out_dir, rp, out);
  const auto& best = outcome.result.best;
  double best_cider = 0.0;
  for (const auto& r : outcome.result.log)
    if (r.epoch == best.epoch) best_cider = r.val_cider;
  out << "best_epoch\t" << best.epoch << "\nbest_val_cider\t" << fmt17(best_cider) << "\nepochs_run\t"
      << outcome.result.log.size() << '\n';
  return 0;
}

struct CaptionFlags {
  std::string checkpoint, manifest, out;
  std::optional<std::string> vocab, trace;
  std::string mode = "greedy";
  std::size_t beam_width = 3;
  std::optional<std::size_t> max_len;
  double corrupt = 0.0;
  std::uint64_t corrupt_seed = 0;
  bool legacy_topic_attention = false;
};

int cmd_caption(const CaptionFlags& f) {
  Checkpoint ckpt = load_ckpt(f.checkpoint);
  const fs::path manifest(f.manifest);
  const Vocab vocab = load_vocab(f.vocab ? fs::path(*f.vocab) : manifest.parent_path() / "vocab.txt");
  std::vector<Sample> samples = load_split(manifest);
  check_compatible(ckpt.hyper, samples, vocab);
  if (f.corrupt < 0.0 || f.corrupt > 1.0) throw UserError("--corrupt-topics must be in [0, 1]");
  if (f.corrupt > 0.0) {
    Rng rng(f.corrupt_seed);
    for (auto& s : samples) corrupt_topics(s.topics.ids, s.references, vocab, f.corrupt, rng);
  }
  GenerateConfig gen;
  gen.mode = f.mode == "beam" ? DecodeMode::beam : DecodeMode::greedy;
  gen.beam_width = f.beam_width;
  if (gen.beam_width == 0) throw UserError("--beam-width must be at least 1");
  gen.max_len = f.max_len.value_or(ckpt.hyper.max_len);
  DecoderConfig dc;
  dc.variant = ckpt.variant;
  dc.legacy_topic_attention = f.legacy_topic_attention;
  std::vector<Generation> gens;
  const EvalCorpus corpus = caption_split(ckpt.params, ckpt.hyper, dc, samples, vocab, gen, &gens);
  auto hyp = open_out(f.out);
  write_hypotheses(hyp, corpus);
  if (f.trace) {
    auto tr = open_out(*f.trace);
    for (std::size_t i = 0; i < samples.size(); ++i)
      for (const auto& rec : trace_records(samples[i].image_id, gens[i], vocab)) tr << format_trace_record(rec);
  }
  return 0;
}

int cmd_eval(const std::string& hyp_path, const std::string& manifest, std::ostream& out) {
  const auto hyps = read_hypotheses(hyp_path);
  const auto samples = load_split(manifest);
  const EvalCorpus corpus = match_references(hyps, samples);
  if (corpus.empty()) throw UserError("hypothesis file is empty");
  if (corpus.size() < 2) throw UserError("evaluation needs at least 2 images for CIDEr document frequencies");
  out << format_report(evaluate(corpus));
  return 0;
}

int cmd_ablate(const fs::path& data_dir, const fs::path& out_dir, const std::vector<std::uint64_t>& seeds,
               const std::vector<std::string>& variant_names, TrainFlags flags, std::ostream& out) {
  if (seeds.empty()) throw UserError("--seeds needs at least one seed");
  std::vector<Variant> variants;
  if (variant_names.empty()) {
    variants.assign(std::begin(kAllVariants), std::end(kAllVariants));
  } else {
    for (const auto& n : variant_names) variants.push_back(variant_arg(n));
  }
  make_config(flags);
  const DatasetDir data = load_dataset_dir(data_dir, true);
  if (data.test.size() < 2) throw UserError("test split needs at least 2 images");
  make_dir(out_dir);
  auto cells = open_out(out_dir / "cells.tsv");
  const std::string header = "BLEU-1\tBLEU-2\tBLEU-3\tBLEU-4\tROUGE-L\tCIDEr";
  cells << "variant\tseed\t" << header << '\n';
  std::ostringstream matrix;
  matrix << "variant\t" << header << '\n';
  for (Variant v : variants) {
    std::vector<double> sum(6, 0.0);
    for (std::uint64_t seed : seeds) {
      flags.seed = seed;
      const fs::path cell_dir = out_dir / std::string(variant_name(v)) / ("seed" + std::to_string(seed));
      std::ostringstream quiet;
      auto outcome = run_training(data, flags, v, cell_dir, std::nullopt, quiet);
      Checkpoint& best = outcome.result.best;
      GenerateConfig gen{DecodeMode::greedy, 1, best.hyper.max_len};
      const EvalCorpus corpus = caption_split(best.params, best.hyper, outcome.decoder, data.test, data.vocab, gen);
      auto hyp = open_out(cell_dir / "test_hyp.tsv");
      write_hypotheses(hyp, corpus);
      const MetricReport r = evaluate(corpus);
      const double vals[6] = {r.bleu[0], r.bleu[1], r.bleu[2], r.bleu[3], r.rouge_l, r.cider};
      cells << variant_name(v) << '\t' << seed;
      for (int i = 0; i < 6; ++i) {
        cells << '\t' << fmt17(vals[i]);
        sum[i] += vals[i];
      }
      cells << '\n';
      cells.flush();
      if (!flags.quiet) out << "# " << variant_name(v) << " seed " << seed << " CIDEr " << fmt17(r.cider) << '\n';
    }
    matrix << variant_name(v);
    for (double s : sum) matrix << '\t' << fmt17(s / static_cast<double>(seeds.size()));
    matrix << '\n';
  }
  auto mfile = open_out(out_dir / "matrix.tsv");
  mfile << matrix.str();
  out << matrix.str();
  return 0;
}

int cmd_inspect(const std::string& trace_path, const std::string& pos_path, const std::optional<std::string>& heatmaps,
                std::size_t bins, std::ostream& out) {
  if (bins == 0) throw UserError("--bins must be at least 1");
  std::ifstream in(trace_path, std::ios::binary);
  if (!in) throw UserError("cannot open trace " + trace_path);
  const auto records = read_trace(in);
  if (!fs::exists(pos_path)) throw UserError("POS table not found: " + pos_path);
  const auto pos = read_pos_table(pos_path);

  const std::vector<std::string> classes = {"noun", "adjective", "verb", "function", "other"};
  std::map<std::string, std::pair<double, std::size_t>> acc;
  std::vector<std::size_t> hist(bins, 0);
  for (const auto& r : records) {
    auto it = pos.find(r.token);
    const std::string cls = it == pos.end() ? "other" : std::string(pos_name(it->second));
    acc[cls].first += r.gamma;
    ++acc[cls].second;
    const double clamped = std::clamp(r.gamma, 0.0, 1.0);
    const auto b = std::min(bins - 1, static_cast<std::size_t>(clamped * static_cast<double>(bins)));
    ++hist[b];
  }
  out << "class\tmean_gamma\tsteps\n";
  for (const auto& c : classes) {
    const auto [sum, n] = acc[c];
    out << c << '\t' << (n ? fmt17(sum / static_cast<double>(n)) : std::string("-")) << '\t' << n << '\n';
  }
  out << "bin_low\tbin_high\tcount\n";
  for (std::size_t b = 0; b < bins; ++b) {
    char edges[64];
    std::snprintf(edges, sizeof edges, "%.6g\t%.6g", static_cast<double>(b) / static_cast<double>(bins),
                  static_cast<double>(b + 1) / static_cast<double>(bins));
    out << edges << '\t' << hist[b] << '\n';
  }

  if (heatmaps) {
    make_dir(*heatmaps);
    std::map<std::string, std::vector<const TraceRecord*>> by_sample;
    std::vector<std::string> order;
    for (const auto& r : records) {
      if (!by_sample.contains(r.sample)) order.push_back(r.sample);
      by_sample[r.sample].push_back(&r);
    }
    for (const auto& id : order) {
      auto f = open_out(fs::path(*heatmaps) / (safe_filename(id) + ".txt"));
      auto section = [&](const char* name, auto member) {
        f << "# " << name << '\n';
        for (const TraceRecord* r : by_sample[id]) {
          const auto& xs = r->*member;
          for (std::size_t i = 0; i < xs.size(); ++i) f << (i ? " " : "") << fmt17(xs[i]);
          f << '\n';
        }
      };
      f << "# tokens\n";
      for (const TraceRecord* r : by_sample[id]) f << r->token << '\n';
      f << "# gamma\n";
      for (const TraceRecord* r : by_sample[id]) f << fmt17(r->gamma) << '\n';
      section("alpha", &TraceRecord::alpha);
      section("alpha_tilde", &TraceRecord::alpha_tilde);
      section("beta", &TraceRecord::beta);
    }
    out << "heatmaps\t" << order.size() << '\n';
  }
  return 0;
}

}  // namespace

std::vector<Hypothesis> read_hypotheses(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open hypothesis file " + path);
  std::vector<Hypothesis> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw UserError(path + ":" + std::to_string(n) + ": expected id TAB tokens");
    Hypothesis h;
    h.image_id = line.substr(0, tab);
    for (const auto& w : split_on(line.substr(tab + 1), ' '))
      if (!w.empty()) h.tokens.push_back(w);
    out.push_back(std::move(h));
  }
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"simnet: stepwise image-topic merging decoder lab"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::uint64_t synth_seed = 0;
  std::size_t scenes = 0;
  std::optional<std::size_t> val_n, test_n;
  std::string synth_out;
  SynthOptions synth_opt;
  synth->add_option("--seed", synth_seed);
  synth->add_option("--scenes", scenes)->required();
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--val", val_n, "validation scenes (default scenes/10)");
  synth->add_option("--test", test_n, "test scenes (default scenes/5)");
  synth->add_option("--min-count", synth_opt.min_count, "vocabulary count threshold (5)");
  synth->add_option("--topics", synth_opt.topics, "topics per image (5)");
  synth->add_option("--captions", synth_opt.world.captions_per_scene, "captions per scene, 1..5 (1)");
  synth->add_option("--noise", synth_opt.world.noise, "feature noise sigma (0.05)");
  synth->add_option("--grid", synth_opt.world.grid_side, "grid side; k = grid^2 (3)");
  synth->add_option("--feature-size", synth_opt.world.g_raw, "raw feature size (64)");

  auto* trn = app.add_subcommand("train", "train one decoder variant");
  std::string train_data, train_out, train_variant = "full";
  std::optional<std::string> resume;
  TrainFlags train_flags;
  trn->add_option("--data", train_data, "dataset directory (train.tsv, val.tsv, vocab.txt)")->required();
  trn->add_option("--out", train_out, "output directory")->required();
  trn->add_option("--variant", train_variant, "decoder variant");
  trn->add_option("--resume", resume, "continue from a checkpoint");
  add_train_flags(trn, train_flags);

  auto* cap = app.add_subcommand("caption", "caption a manifest with a checkpoint");
  CaptionFlags cf;
  cap->add_option("--checkpoint", cf.checkpoint)->required();
  cap->add_option("--manifest", cf.manifest)->required();
  cap->add_option("--out", cf.out, "hypothesis file")->required();
  cap->add_option("--vocab", cf.vocab, "vocabulary (default: vocab.txt next to the manifest)");
  cap->add_option("--mode", cf.mode)->check(CLI::IsMember({"greedy", "beam"}));
  cap->add_option("--beam-width", cf.beam_width, "beam width (3)");
  cap->add_option("--max-len", cf.max_len);
  cap->add_option("--trace", cf.trace, "write per-step trace records");
  cap->add_option("--corrupt-topics", cf.corrupt, "replace topics with wrong nouns at this rate");
  cap->add_option("--corrupt-seed", cf.corrupt_seed);
  cap->add_flag("--legacy-topic-attention", cf.legacy_topic_attention, "model was trained with the older topic scoring");

  auto* ev = app.add_subcommand("eval", "score a hypothesis file");
  std::string eval_hyp, eval_manifest;
  ev->add_option("--hyp", eval_hyp)->required();
  ev->add_option("--manifest", eval_manifest)->required();

  auto* abl = app.add_subcommand("ablate", "train and test every variant over several seeds");
  std::string abl_data, abl_out;
  std::vector<std::uint64_t> abl_seeds;
  std::vector<std::string> abl_variants;
  TrainFlags abl_flags;
  abl->add_option("--data", abl_data)->required();
  abl->add_option("--out", abl_out)->required();
  abl->add_option("--seeds", abl_seeds, "comma-separated seeds")->delimiter(',')->required();
  abl->add_option("--variants", abl_variants, "comma-separated variants (default all)")->delimiter(',');
  add_train_flags(abl, abl_flags);
  abl->remove_option(abl->get_option("--seed"));

  auto* ins = app.add_subcommand("inspect", "gate and attention statistics from a trace");
  std::string ins_trace, ins_pos;
  std::optional<std::string> ins_heat;
  std::size_t ins_bins = 10;
  ins->add_option("--trace", ins_trace)->required();
  ins->add_option("--pos", ins_pos, "token to part-of-speech table")->required();
  ins->add_option("--heatmaps", ins_heat, "directory for per-sample attention matrices");
  ins->add_option("--bins", ins_bins, "histogram bins over [0, 1] (10)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*synth) return cmd_synth(synth_seed, scenes, val_n, test_n, synth_opt, synth_out, out);
    if (*trn) return cmd_train(train_data, train_out, train_variant, train_flags, resume, out);
    if (*cap) return cmd_caption(cf);
    if (*ev) return cmd_eval(eval_hyp, eval_manifest, out);
    if (*abl) return cmd_ablate(abl_data, abl_out, abl_seeds, abl_variants, abl_flags, out);
    if (*ins) return cmd_inspect(ins_trace, ins_pos, ins_heat, ins_bins, out);
  } catch (const UserError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ManifestError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const TraceError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace simnet
