#include "simnet/checkpoint.hpp"

#include <algorithm>

#include "simnet/binary_io.hpp"

namespace simnet {

namespace {

constexpr std::string_view kMagic = "SIMNET01";
constexpr std::uint32_t kFieldCount = 15;

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const HyperParams hp = ckpt.hyper.resolved();
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kFieldCount);
  for (std::uint64_t v : {hp.g, hp.e, hp.d, hp.k, hp.m, hp.a_v, hp.a_t, hp.vocab, hp.max_len, hp.g_raw, hp.bos,
                          hp.eos, hp.unk}) {
    w.u64(v);
  }
  w.u64(static_cast<std::uint64_t>(ckpt.variant));
  w.u64(ckpt.epoch);
  const auto params = ckpt.params.all();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.u32(static_cast<std::uint32_t>(p->name.size()));
    w.bytes(p->name);
    w.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (auto dim : p->value.shape()) w.u64(dim);
    for (double v : p->value.storage()) w.f64(v);
  }
  return w.data();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ByteWriter w;
  w.bytes(encode_checkpoint(ckpt));
  w.write_file(path);
}

Checkpoint decode_checkpoint(std::string bytes) {
  ByteReader r(std::move(bytes));
  if (r.bytes(kMagic.size(), "magic") != kMagic) throw FormatError("bad checkpoint magic", 0);
  const auto field_offset = r.offset();
  const std::uint32_t fields = r.u32("hyperparameter record");
  if (fields < kFieldCount) throw FormatError("hyperparameter record too short", field_offset);
  std::vector<std::uint64_t> f;
  for (std::uint32_t i = 0; i < fields; ++i) f.push_back(r.u64("hyperparameter record"));

  Checkpoint ckpt;
  HyperParams& hp = ckpt.hyper;
  hp.g = f[0], hp.e = f[1], hp.d = f[2], hp.k = f[3], hp.m = f[4], hp.a_v = f[5], hp.a_t = f[6];
  hp.vocab = f[7], hp.max_len = f[8], hp.g_raw = f[9], hp.bos = f[10], hp.eos = f[11], hp.unk = f[12];
  if (f[13] >= std::size(kAllVariants)) throw FormatError("unknown decoder variant", field_offset);
  ckpt.variant = static_cast<Variant>(f[13]);
  ckpt.epoch = f[14];
  try {
    hp.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what(), field_offset);
  }

  ckpt.params = ModelParams::shaped(hp);
  std::vector<bool> seen(ckpt.params.all().size(), false);
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_offset = r.offset();
    const std::uint32_t len = r.u32("tensor name length");
    const std::string name = r.bytes(len, "tensor name");
    Parameter* p = ckpt.params.find(name);
    if (!p) throw FormatError("unknown tensor '" + name + "'", name_offset);
    const std::uint32_t rank = r.u32("tensor rank");
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.u64("tensor dims"));
    if (shape != p->value.shape()) {
      throw ShapeError("checkpoint tensor " + name + ": expected " + shape_str(p->value.shape()) + ", got " +
                       shape_str(shape));
    }
    for (auto& v : p->value.storage()) v = r.f64("tensor payload");
    const auto all = ckpt.params.all();
    seen[static_cast<std::size_t>(std::find(all.begin(), all.end(), p) - all.begin())] = true;
  }
  const auto all = ckpt.params.all();
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!seen[i]) throw FormatError("missing tensor '" + all[i]->name + "'", r.offset());
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace simnet
