#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "simnet/attention.hpp"
#include "simnet/random.hpp"

namespace simnet {

enum class Pos { noun, adjective, verb, function };

std::string_view pos_name(Pos p);
std::optional<Pos> parse_pos(std::string_view s);

/// Word lists of the synthetic world. Object and surface words are nouns,
/// colors and count words adjectives.
struct Lexicon {
  std::vector<std::string> objects;
  std::vector<std::string> colors;
  std::vector<std::string> counts;  // counts[n-1] spells n
  std::vector<std::string> surfaces;

  static const Lexicon& standard();

  /// Part of speech of any word the generator can emit.
  std::optional<Pos> pos_of(std::string_view word) const;
  std::vector<std::string> nouns() const;
  /// Every word with its tag, in lexicon order.
  std::vector<std::pair<std::string, Pos>> tagged_words() const;
};

struct WorldConfig {
  std::size_t grid_side = 3;  // k = grid_side^2 regions
  std::size_t g_raw = 64;
  double noise = 0.05;
  std::size_t captions_per_scene = 1;  // 1..5, one template each
  std::size_t max_objects = 4;
};

struct SceneObject {
  std::size_t cell = 0;
  std::size_t object = 0;  // index into Lexicon::objects
  std::size_t color = 0;
  std::size_t count = 1;   // 1..3
};

struct Scene {
  std::string id;
  std::size_t surface = 0;
  std::vector<SceneObject> objects;  // sorted by object index
  std::vector<std::vector<std::string>> captions;
  std::vector<std::vector<Pos>> caption_pos;
  FeatureGrid features;
};

/// Fixed random vectors the feature grid is composed from.
struct Signatures {
  std::vector<std::vector<double>> object, color, count, surface;
};

struct World {
  WorldConfig config;
  Signatures signatures;
  std::vector<Scene> scenes;
};

World generate_world(std::uint64_t seed, std::size_t n_scenes, const WorldConfig& config = {});

/// Noise-free feature column for an occupied cell.
std::vector<double> compose_cell(const Signatures& sig, const SceneObject& obj, std::size_t surface);

/// Caption words for a scene using template `index` (0..4).
std::vector<std::pair<std::string, Pos>> render_caption(const Scene& scene, std::size_t index);

/// Token table with reserved ids 0..3; remaining words ordered by count
/// (descending) then lexicographically.
class Vocab {
 public:
  static constexpr std::size_t pad = 0, bos = 1, eos = 2, unk = 3;
  static constexpr std::size_t reserved = 4;

  Vocab();

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  /// Unknown words map to `unk`.
  std::size_t id(std::string_view token) const;
  bool contains(std::string_view token) const;
  std::size_t count(std::size_t id) const { return counts_.at(id); }

  std::vector<std::size_t> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<std::size_t>& ids) const;

  /// One token per line; the line index is the id (reserved tokens first).
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  friend Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count);

 private:
  void add(std::string token, std::size_t count);
  std::vector<std::string> tokens_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count = 5);

/// Ids of noun tokens in the vocabulary, in vocabulary order (most frequent
/// first).
std::vector<std::size_t> noun_ids(const Vocab& vocab, const Lexicon& lex = Lexicon::standard());

struct TopicCorruption {
  double rate = 0.0;
  std::uint64_t seed = 0;
};

/// The m most frequent in-vocabulary nouns across `references` (ties
/// lexicographic), padded with the corpus' most frequent other nouns.
std::vector<std::size_t> oracle_topics(const std::vector<std::vector<std::string>>& references, std::size_t m,
                                       const Vocab& vocab, const Lexicon& lex = Lexicon::standard());

/// Replaces each slot with probability `rate` by a noun absent from the
/// references and from the list. Returns the number of replaced slots.
std::size_t corrupt_topics(std::vector<std::size_t>& topics, const std::vector<std::vector<std::string>>& references,
                           const Vocab& vocab, double rate, Rng& rng, const Lexicon& lex = Lexicon::standard());

/// "SIMFEAT1", u32 g_raw, u32 k, then g_raw*k f64, region by region; all
/// little-endian.
void write_features(const std::filesystem::path& path, const Tensor& raw);
Tensor read_features(const std::filesystem::path& path);
std::string encode_features(const Tensor& raw);
Tensor decode_features(std::string bytes);

/// One image with everything the decoder and the metrics need.
struct Sample {
  std::string image_id;
  std::filesystem::path feature_path;  // as written in the manifest
  FeatureGrid features;
  std::vector<std::vector<std::string>> references;
  TopicSet topics;

  std::vector<std::vector<std::size_t>> encoded_references(const Vocab& vocab) const;
};

/// Thrown for manifest problems; `record` is the 0-based record index.
class ManifestError : public std::runtime_error {
 public:
  ManifestError(const std::string& what, std::size_t record)
      : std::runtime_error("manifest record " + std::to_string(record) + ": " + what), record_(record) {}
  std::size_t record() const { return record_; }

 private:
  std::size_t record_;
};

/// Record: image id TAB feature path TAB comma-separated topic ids TAB
/// references joined by U+001F (unit separator), each space-tokenized.
/// Feature paths are relative to the manifest's directory.
void write_manifest(const std::filesystem::path& path, const std::vector<Sample>& samples);
std::vector<Sample> load_dataset(const std::filesystem::path& manifest);

/// Token → part-of-speech table written next to a generated dataset.
void write_pos_table(const std::filesystem::path& path, const Lexicon& lex = Lexicon::standard());
std::unordered_map<std::string, Pos> read_pos_table(const std::filesystem::path& path);

struct SplitSizes {
  std::size_t val = 0;
  std::size_t test = 0;
};

/// Generated world split into train/val/test with vocabulary (train split
/// only) and oracle topics.
struct SynthDataset {
  World world;
  Vocab vocab;
  std::vector<Sample> train, val, test;
};

struct SynthOptions {
  WorldConfig world;
  SplitSizes split;
  std::size_t min_count = 5;
  std::size_t topics = 5;
};

SynthDataset synthesize(std::uint64_t seed, std::size_t n_scenes, const SynthOptions& options);

/// Writes features/, train.tsv, val.tsv, test.tsv, vocab.txt and pos.tsv.
void write_dataset(const std::filesystem::path& dir, const SynthDataset& data);

}  // namespace simnet
