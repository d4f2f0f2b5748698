#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "safire/harness.h"
#include "safire/kv.h"
#include "safire/model.h"
#include "safire/shaperef.h"

namespace safire {

/// Everything a command needs, as one flat key-value document. Image size is
/// shared between the generator and the model.
struct RunConfig {
  ModelConfig model;
  GenConfig gen;
  TrainConfig train;

  std::uint64_t data_seed = 0;
  std::size_t train_size = 2000;
  std::size_t val_size = 200;
  std::size_t test_size = 400;

  std::vector<std::string> ablation_variants;
  std::vector<std::uint64_t> ablation_seeds{1, 2, 3};
  std::size_t ablation_train_size = 0;  // 0: same as train_size
  std::size_t ablation_test_size = 0;   // 0: same as test_size
  std::size_t ablation_epochs = 0;      // 0: same as epochs

  std::vector<std::size_t> bench_windows{2, 4, 8};
  std::vector<std::size_t> bench_sides{16, 32, 48, 64};
  std::size_t bench_text_length = 15;
  std::size_t bench_channels = 8;

  RunConfig();

  void validate() const;
  KeyValues to_kv() const;
  std::string serialize() const;
  /// Unknown keys and malformed values raise ConfigError naming the key.
  static RunConfig parse(std::string_view text, std::string_view source = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  /// Hex digest of the serialized form.
  std::string hash() const;
  std::size_t split_size(const std::string& split) const;
};

}  // namespace safire
