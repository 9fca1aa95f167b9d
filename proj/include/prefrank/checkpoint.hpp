#pragma once

// Versioned little-endian checkpoint:
//
//   "PRFK" | u32 version | u32 head_mode | u32 input_dim
//   | u32 n_hidden | n_hidden x u32 width
//   | u32 n_trunks | per trunk: u32 n_layers, n_layers x (u32 out, u32 in)
//   | u32 loss_kind | u32 strategy | f64 sigma_floor
//   | f64 regression_scale | f64 regression_shift
//   | u8 has_standardization [| dim x f64 mean | dim x f64 inv_std]
//   | u64 n_params | n_params x f64 | u64 config_digest

#include <cstdint>
#include <filesystem>
#include <string>

#include "prefrank/trainer.hpp"

namespace prefrank {

inline constexpr char kCheckpointMagic[4] = {'P', 'R', 'F', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const TrainedModel& model);
// The training report is not stored; the returned model has an empty one.
TrainedModel decode_checkpoint(const std::string& bytes);

void save_checkpoint(const TrainedModel& model,
                     const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the encoded checkpoint bytes.
std::uint64_t checkpoint_digest(const TrainedModel& model);

}  // namespace prefrank
