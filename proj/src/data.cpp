#include "simnet/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "simnet/binary_io.hpp"

namespace simnet {

std::string_view pos_name(Pos p) {
  switch (p) {
    case Pos::noun: return "noun";
    case Pos::adjective: return "adjective";
    case Pos::verb: return "verb";
    case Pos::function: return "function";
  }
  return "?";
}

std::optional<Pos> parse_pos(std::string_view s) {
  for (Pos p : {Pos::noun, Pos::adjective, Pos::verb, Pos::function})
    if (pos_name(p) == s) return p;
  return std::nullopt;
}

namespace {

const std::vector<std::string> kFunctionWords = {"and", "on", "the", "there"};
const std::vector<std::string> kVerbs = {"lie", "is", "has"};

}  // namespace

const Lexicon& Lexicon::standard() {
  static const Lexicon lex{
      {"apple", "ball", "bird", "book", "cat", "chair", "clock", "cup", "dog", "horse", "lamp", "phone"},
      {"black", "blue", "green", "red", "white", "yellow"},
      {"one", "two", "three"},
      {"floor", "grass", "sand", "table"},
  };
  return lex;
}

std::optional<Pos> Lexicon::pos_of(std::string_view word) const {
  for (const auto& [w, p] : tagged_words())
    if (w == word) return p;
  return std::nullopt;
}

std::vector<std::string> Lexicon::nouns() const {
  std::vector<std::string> out = objects;
  out.insert(out.end(), surfaces.begin(), surfaces.end());
  return out;
}

std::vector<std::pair<std::string, Pos>> Lexicon::tagged_words() const {
  std::vector<std::pair<std::string, Pos>> out;
  for (const auto& w : objects) out.emplace_back(w, Pos::noun);
  for (const auto& w : surfaces) out.emplace_back(w, Pos::noun);
  for (const auto& w : colors) out.emplace_back(w, Pos::adjective);
  for (const auto& w : counts) out.emplace_back(w, Pos::adjective);
  for (const auto& w : kVerbs) out.emplace_back(w, Pos::verb);
  for (const auto& w : kFunctionWords) out.emplace_back(w, Pos::function);
  return out;
}

namespace {

std::vector<double> gaussian_vector(Rng& rng, std::size_t n, double sigma) {
  std::vector<double> v(n);
  for (auto& x : v) x = sigma * rng.normal();
  return v;
}

// Relative magnitudes of the feature components.
constexpr double kObjectScale = 1.0;
constexpr double kColorScale = 0.5;
constexpr double kCountScale = 0.35;
constexpr double kSurfaceScale = 0.5;

}  // namespace

std::vector<double> compose_cell(const Signatures& sig, const SceneObject& obj, std::size_t surface) {
  std::vector<double> v = sig.object.at(obj.object);
  const auto& c = sig.color.at(obj.color);
  const auto& n = sig.count.at(obj.count - 1);
  const auto& s = sig.surface.at(surface);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += c[i] + n[i] + s[i];
  return v;
}

std::vector<std::pair<std::string, Pos>> render_caption(const Scene& scene, std::size_t index) {
  const Lexicon& lex = Lexicon::standard();
  std::vector<std::pair<std::string, Pos>> phrases;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    if (i) phrases.emplace_back("and", Pos::function);
    phrases.emplace_back(lex.counts[o.count - 1], Pos::adjective);
    phrases.emplace_back(lex.colors[o.color], Pos::adjective);
    phrases.emplace_back(lex.objects[o.object], Pos::noun);
  }
  const std::vector<std::pair<std::string, Pos>> where = {
      {"on", Pos::function}, {"the", Pos::function}, {lex.surfaces[scene.surface], Pos::noun}};
  const std::vector<std::pair<std::string, Pos>> there_is = {{"there", Pos::function}, {"is", Pos::verb}};

  std::vector<std::pair<std::string, Pos>> out;
  auto append = [&](const auto& part) { out.insert(out.end(), part.begin(), part.end()); };
  switch (index % 5) {
    case 0:
      append(phrases);
      out.emplace_back("lie", Pos::verb);
      append(where);
      break;
    case 1:
      append(there_is);
      append(phrases);
      append(where);
      break;
    case 2:
      append(where);
      append(there_is);
      append(phrases);
      break;
    case 3:
      append(phrases);
      append(where);
      break;
    default:
      out.emplace_back("the", Pos::function);
      out.emplace_back(lex.surfaces[scene.surface], Pos::noun);
      out.emplace_back("has", Pos::verb);
      append(phrases);
      break;
  }
  return out;
}

World generate_world(std::uint64_t seed, std::size_t n_scenes, const WorldConfig& config) {
  if (n_scenes == 0) throw std::invalid_argument("generate_world: need at least one scene");
  if (config.captions_per_scene < 1 || config.captions_per_scene > 5) {
    throw std::invalid_argument("generate_world: captions_per_scene must be in 1..5");
  }
  const std::size_t k = config.grid_side * config.grid_side;
  if (config.max_objects < 1 || config.max_objects > 4 || config.max_objects > k) {
    throw std::invalid_argument("generate_world: max_objects must be in 1..4 and fit the grid");
  }
  const Lexicon& lex = Lexicon::standard();
  Rng rng(seed);
  World world;
  world.config = config;
  auto& sig = world.signatures;
  for (std::size_t i = 0; i < lex.objects.size(); ++i) sig.object.push_back(gaussian_vector(rng, config.g_raw, kObjectScale));
  for (std::size_t i = 0; i < lex.colors.size(); ++i) sig.color.push_back(gaussian_vector(rng, config.g_raw, kColorScale));
  for (std::size_t i = 0; i < lex.counts.size(); ++i) sig.count.push_back(gaussian_vector(rng, config.g_raw, kCountScale));
  for (std::size_t i = 0; i < lex.surfaces.size(); ++i) {
    sig.surface.push_back(gaussian_vector(rng, config.g_raw, kSurfaceScale));
  }

  for (std::size_t s = 0; s < n_scenes; ++s) {
    Scene scene;
    char id[32];
    std::snprintf(id, sizeof id, "scene_%05zu", s);
    scene.id = id;
    scene.surface = rng.below(lex.surfaces.size());
    const std::size_t n_obj = 1 + rng.below(config.max_objects);

    std::vector<std::size_t> objects(lex.objects.size()), cells(k);
    for (std::size_t i = 0; i < objects.size(); ++i) objects[i] = i;
    for (std::size_t i = 0; i < k; ++i) cells[i] = i;
    rng.shuffle(objects.begin(), objects.end());
    rng.shuffle(cells.begin(), cells.end());
    for (std::size_t i = 0; i < n_obj; ++i) {
      SceneObject o;
      o.object = objects[i];
      o.cell = cells[i];
      o.color = rng.below(lex.colors.size());
      o.count = 1 + rng.below(lex.counts.size());
      scene.objects.push_back(o);
    }
    std::sort(scene.objects.begin(), scene.objects.end(),
              [](const SceneObject& a, const SceneObject& b) { return a.object < b.object; });

    Tensor raw({config.g_raw, k});
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t r = 0; r < config.g_raw; ++r) raw.at(r, c) = sig.surface[scene.surface][r];
    for (const auto& o : scene.objects) {
      const auto col = compose_cell(sig, o, scene.surface);
      for (std::size_t r = 0; r < config.g_raw; ++r) raw.at(r, o.cell) = col[r];
    }
    if (config.noise > 0) {
      for (auto& v : raw.storage()) v += config.noise * rng.normal();
    }
    scene.features.raw = std::move(raw);

    for (std::size_t c = 0; c < config.captions_per_scene; ++c) {
      std::vector<std::string> words;
      std::vector<Pos> tags;
      for (auto& [w, p] : render_caption(scene, c)) {
        words.push_back(w);
        tags.push_back(p);
      }
      scene.captions.push_back(std::move(words));
      scene.caption_pos.push_back(std::move(tags));
    }
    world.scenes.push_back(std::move(scene));
  }
  return world;
}

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(t, 0);
}

void Vocab::add(std::string token, std::size_t count) {
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
  counts_.push_back(count);
}

std::size_t Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.contains(std::string(token)); }

std::vector<std::size_t> Vocab::encode(const std::vector<std::string>& words) const {
  std::vector<std::size_t> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocab::decode(const std::vector<std::size_t>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(token(i));
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Vocab v;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (line_no < reserved) {
      if (line != v.tokens_[line_no]) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no + 1) + ": expected reserved token " +
                                 v.tokens_[line_no]);
      }
    } else {
      if (line.empty() || v.index_.contains(line)) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no + 1) + ": empty or duplicate token");
      }
      v.add(line, 0);
    }
    ++line_no;
  }
  if (line_no < reserved) throw std::runtime_error(path.string() + ": missing reserved tokens");
  return v;
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus)
    for (const auto& w : sentence) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [w, c] : counts)
    if (c >= min_count) kept.emplace_back(w, c);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (auto& [w, c] : kept) v.add(w, c);
  return v;
}

std::vector<std::size_t> noun_ids(const Vocab& vocab, const Lexicon& lex) {
  std::vector<std::size_t> out;
  for (std::size_t i = Vocab::reserved; i < vocab.size(); ++i) {
    if (lex.pos_of(vocab.token(i)) == Pos::noun) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> oracle_topics(const std::vector<std::vector<std::string>>& references, std::size_t m,
                                       const Vocab& vocab, const Lexicon& lex) {
  if (m == 0) throw std::invalid_argument("oracle_topics: m must be at least 1");
  std::map<std::string, std::size_t> freq;
  for (const auto& ref : references)
    for (const auto& w : ref)
      if (lex.pos_of(w) == Pos::noun && vocab.contains(w)) ++freq[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::size_t> topics;
  for (const auto& [w, c] : ranked) {
    if (topics.size() == m) break;
    topics.push_back(vocab.id(w));
  }
  for (auto id : noun_ids(vocab, lex)) {
    if (topics.size() == m) break;
    if (std::find(topics.begin(), topics.end(), id) == topics.end()) topics.push_back(id);
  }
  if (topics.size() < m) {
    throw std::invalid_argument("oracle_topics: vocabulary has fewer than " + std::to_string(m) + " nouns");
  }
  return topics;
}

std::size_t corrupt_topics(std::vector<std::size_t>& topics, const std::vector<std::vector<std::string>>& references,
                           const Vocab& vocab, double rate, Rng& rng, const Lexicon& lex) {
  std::set<std::size_t> present;
  for (const auto& ref : references)
    for (const auto& w : ref)
      if (vocab.contains(w)) present.insert(vocab.id(w));
  std::size_t replaced = 0;
  for (auto& slot : topics) {
    if (!rng.bernoulli(rate)) continue;
    std::vector<std::size_t> pool;
    for (auto id : noun_ids(vocab, lex)) {
      if (!present.contains(id) && std::find(topics.begin(), topics.end(), id) == topics.end()) pool.push_back(id);
    }
    if (pool.empty()) continue;
    slot = pool[rng.below(pool.size())];
    ++replaced;
  }
  return replaced;
}

namespace {

constexpr std::string_view kFeatureMagic = "SIMFEAT1";

}  // namespace

std::string encode_features(const Tensor& raw) {
  if (raw.rank() != 2) throw ShapeError("write_features: expected g_raw x k matrix, got " + shape_str(raw.shape()));
  ByteWriter w;
  w.bytes(kFeatureMagic);
  w.u32(static_cast<std::uint32_t>(raw.rows()));
  w.u32(static_cast<std::uint32_t>(raw.cols()));
  for (std::size_t c = 0; c < raw.cols(); ++c)
    for (std::size_t r = 0; r < raw.rows(); ++r) w.f64(raw.at(r, c));
  return w.data();
}

Tensor decode_features(std::string bytes) {
  ByteReader r(std::move(bytes));
  if (r.bytes(kFeatureMagic.size(), "magic") != kFeatureMagic) throw FormatError("bad feature-file magic", 0);
  const auto dims_offset = r.offset();
  const std::uint32_t rows = r.u32("feature header");
  const std::uint32_t cols = r.u32("feature header");
  if (rows == 0 || cols == 0) throw FormatError("zero feature dimension", dims_offset);
  Tensor raw({rows, cols});
  for (std::size_t c = 0; c < cols; ++c)
    for (std::size_t i = 0; i < rows; ++i) raw.at(i, c) = r.f64("feature payload");
  if (!r.at_end()) throw FormatError("trailing bytes after feature payload", r.offset());
  return raw;
}

void write_features(const std::filesystem::path& path, const Tensor& raw) {
  ByteWriter w;
  w.bytes(encode_features(raw));
  w.write_file(path);
}

Tensor read_features(const std::filesystem::path& path) { return decode_features(read_file(path)); }

std::vector<std::vector<std::size_t>> Sample::encoded_references(const Vocab& vocab) const {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& r : references) out.push_back(vocab.encode(r));
  return out;
}

namespace {

constexpr char kUnitSep = '\x1f';

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::string join(const std::vector<std::string>& words, char sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(sep);
    out += words[i];
  }
  return out;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& s : samples) {
    out << s.image_id << '\t' << s.feature_path.generic_string() << '\t';
    for (std::size_t i = 0; i < s.topics.ids.size(); ++i) out << (i ? "," : "") << s.topics.ids[i];
    out << '\t';
    std::vector<std::string> refs;
    for (const auto& r : s.references) refs.push_back(join(r, ' '));
    out << join(refs, kUnitSep) << '\n';
  }
}

std::vector<Sample> load_dataset(const std::filesystem::path& manifest) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest.string());
  const auto base = manifest.parent_path();
  std::vector<Sample> samples;
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 4) throw ManifestError("expected 4 tab-separated fields, got " + std::to_string(fields.size()), record);
    Sample s;
    s.image_id = fields[0];
    if (s.image_id.empty()) throw ManifestError("empty image id", record);
    s.feature_path = fields[1];
    const auto full = base / s.feature_path;
    if (!std::filesystem::exists(full)) throw ManifestError("missing feature file " + full.string(), record);
    try {
      s.features.raw = read_features(full);
    } catch (const FormatError& e) {
      throw ManifestError(full.string() + ": " + e.what(), record);
    }
    for (const auto& t : split(fields[2], ',')) {
      if (t.empty()) throw ManifestError("empty topic id", record);
      try {
        std::size_t used = 0;
        s.topics.ids.push_back(std::stoul(t, &used));
        if (used != t.size()) throw std::invalid_argument(t);
      } catch (const std::logic_error&) {
        throw ManifestError("bad topic id '" + t + "'", record);
      }
    }
    for (const auto& ref : split(fields[3], kUnitSep)) {
      auto words = split_words(ref);
      if (words.empty()) throw ManifestError("empty reference caption", record);
      s.references.push_back(std::move(words));
    }
    samples.push_back(std::move(s));
    ++record;
  }
  return samples;
}

void write_pos_table(const std::filesystem::path& path, const Lexicon& lex) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& [w, p] : lex.tagged_words()) out << w << '\t' << pos_name(p) << '\n';
}

std::unordered_map<std::string, Pos> read_pos_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::unordered_map<std::string, Pos> table;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    const auto pos = f.size() == 2 ? parse_pos(f[1]) : std::nullopt;
    if (!pos) throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": malformed POS entry");
    table[f[0]] = *pos;
  }
  return table;
}

SynthDataset synthesize(std::uint64_t seed, std::size_t n_scenes, const SynthOptions& options) {
  if (options.split.val + options.split.test >= n_scenes) {
    throw std::invalid_argument("synthesize: validation + test scenes leave no training scenes");
  }
  SynthDataset data;
  data.world = generate_world(seed, n_scenes, options.world);
  const std::size_t n_train = n_scenes - options.split.val - options.split.test;

  std::vector<std::vector<std::string>> corpus;
  for (std::size_t i = 0; i < n_train; ++i)
    for (const auto& c : data.world.scenes[i].captions) corpus.push_back(c);
  data.vocab = build_vocab(corpus, options.min_count);

  for (std::size_t i = 0; i < n_scenes; ++i) {
    const Scene& scene = data.world.scenes[i];
    Sample s;
    s.image_id = scene.id;
    s.feature_path = std::filesystem::path("features") / (scene.id + ".feat");
    s.features = scene.features;
    s.references = scene.captions;
    s.topics.ids = oracle_topics(s.references, options.topics, data.vocab);
    auto& split = i < n_train ? data.train : (i < n_train + options.split.val ? data.val : data.test);
    split.push_back(std::move(s));
  }
  return data;
}

void write_dataset(const std::filesystem::path& dir, const SynthDataset& data) {
  std::filesystem::create_directories(dir / "features");
  for (const auto* split : {&data.train, &data.val, &data.test})
    for (const auto& s : *split) write_features(dir / s.feature_path, s.features.raw);
  write_manifest(dir / "train.tsv", data.train);
  write_manifest(dir / "val.tsv", data.val);
  write_manifest(dir / "test.tsv", data.test);
  data.vocab.save(dir / "vocab.txt");
  write_pos_table(dir / "pos.tsv");
}

}  // namespace simnet
