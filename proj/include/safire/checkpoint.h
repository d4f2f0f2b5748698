#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "safire/params.h"

namespace safire {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (little-endian): "SFRK", u32 version, u64 config length, config
/// text, u32 record count, then per record u32 name length, name, u32 rank,
/// u64 extents, f64 values.
std::string encode_checkpoint(const std::string& config_text, const ParamStore& store);

struct Checkpoint {
  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> params;
};

Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::string& config_text, const ParamStore& store);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies values into `store`; names, order and shapes must match exactly.
void load_params(const Checkpoint& checkpoint, ParamStore& store);

}  // namespace safire
