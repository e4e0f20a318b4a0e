#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "genfusion/denoiser.hpp"
#include "genfusion/diffusion.hpp"

namespace genfusion {

/// Everything needed to sample from a trained model.
struct Checkpoint {
    DenoiserParams params;
    DiffusionSchedule schedule;
    PromptVocabulary vocab;
    int codec_factor = 2;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Little-endian binary layout:
///   "GENFCKPT" | u32 version
///   u32 latent_channels, features, time_dim, cond_dim, codec_factor
///   u32 T | f64 beta[T]
///   u32 dim | u32 n_tokens | n_tokens x (u32 len, bytes, u8 reserved) | f64 table[n_tokens * dim]
///   u32 n_tensors | n_tensors x (u32 len, name, u32 ndim, u64 dims[ndim], f64 data[])
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& source = "<bytes>");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace genfusion
