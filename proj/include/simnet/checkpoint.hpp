#pragma once

#include <filesystem>

#include "simnet/decoder.hpp"
#include "simnet/nn.hpp"

namespace simnet {

/// Layout:
///   "SIMNET01"
///   u32 field count, then that many u64 fields:
///     g e d k m a_v a_t vocab max_len g_raw bos eos unk variant epoch
///   u32 tensor count, then per tensor:
///     u32 name length, name bytes, u32 rank, u64 dims[rank], f64 payload
/// All integers and floats little-endian. Tied tensors appear once under
/// their canonical name (W_Qh, w_betaQ).
struct Checkpoint {
  HyperParams hyper;
  Variant variant = Variant::full;
  std::uint64_t epoch = 0;
  ModelParams params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws FormatError for bad magic or truncation and ShapeError when a
/// stored tensor disagrees with the shapes implied by the stored
/// hyperparameters (the message names the tensor).
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string bytes);

}  // namespace simnet
