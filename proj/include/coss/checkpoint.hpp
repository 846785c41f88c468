#pragma once

// Binary model checkpoints.
//
// Layout (little-endian):
//   "COSSCKPT" | u32 version | u64 header length | header JSON
//   then per entry: u8 kind (0 parameter, 1 buffer) | u32 name length | name
//                   | u32 rank | u64 dims... | f64 values...
// The header holds the model config, the active masks and the BN mode. Only
// active parameters are written, and gate alphas are reduced to their active
// entries, so the parameter element count equals param_count(model).

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "coss/model.hpp"

namespace coss {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_model(const CossModel& model);
CossModel deserialize_model(std::span<const std::uint8_t> bytes);

void save_checkpoint(const CossModel& model, const std::filesystem::path& path);
CossModel load_checkpoint(const std::filesystem::path& path);

/// Sum of element counts over parameter entries (buffers excluded).
std::size_t checkpoint_parameter_elements(std::span<const std::uint8_t> bytes);

} // namespace coss
