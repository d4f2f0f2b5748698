#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "safire/shaperef.h"
#include "safire/tensor.h"

namespace safire {

struct Sample {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  Mode mode = Mode::simple;
  Scene scene;
  Expression expression;
  Raster raster;
};

/// seed = hash(base seed, split name, index); distinct names give disjoint streams.
std::uint64_t sample_seed(std::uint64_t base_seed, std::string_view split, std::size_t index);

/// Exact per-mode counts by the largest-remainder rule (ties to the lower mode).
std::array<std::size_t, 3> stratified_counts(std::size_t size, const std::array<double, 3>& mix);

/// Stratified counts laid out in a seed-determined order.
std::vector<Mode> mode_schedule(std::size_t size, const std::array<double, 3>& mix, std::uint64_t seed);

/// Retries scenes from derived attempt seeds until an expression of the
/// requested mode exists; every returned sample has passed the audit.
Sample gen_sample(std::uint64_t seed, std::size_t index, Mode mode, const GenConfig& config);

std::vector<Sample> build_split(const std::string& name, std::size_t size, std::uint64_t base_seed,
                                const GenConfig& config);

/// Left-right mirror image of a sample: object columns reflected, "left" and
/// "right" swapped in the expression, raster redrawn. Every shape is
/// mirror-symmetric, so the mirrored scene is a valid scene of the same kind.
Sample mirror_sample(const Sample& sample);

/// Top-bottom flip: object rows reflected, "above" and "below" swapped. Shapes
/// are redrawn upright, so only positions move.
Sample flip_sample(const Sample& sample);

/// Consistent renaming of colours and shapes in scene, expression and raster.
/// Relations depend only on positions and sizes, so validity is preserved.
Sample relabel_sample(const Sample& sample, const std::array<Color, kColorCount>& colors,
                      const std::array<ShapeKind, kShapeCount>& shapes);

/// One directory: meta.jsonl, vocab.txt, images/NNNNNN.ppm, masks/NNNNNN.pgm.
void write_split(const std::filesystem::path& dir, const std::vector<Sample>& samples);
std::vector<Sample> read_split(const std::filesystem::path& dir);
std::vector<std::string> read_vocabulary(const std::filesystem::path& dir);

/// [H, W, 3] with values scaled to [-0.5, 0.5].
Tensor image_tensor(const Raster& raster);
/// [H, W] of 0/1.
Tensor mask_tensor(const Raster& raster);

struct Pnm {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 for P5, 3 for P6
  std::vector<std::uint8_t> data;
};

void write_pnm(const std::filesystem::path& path, const Pnm& image);
Pnm read_pnm(const std::filesystem::path& path);

struct CorpusStats {
  std::size_t samples = 0;
  std::array<std::size_t, 3> mode_counts{};
  double mean_distractors = 0.0;
  double mean_tokens = 0.0;
  double ambiguous_subject_fraction = 0.0;  // object-distracting samples whose subject alone is ambiguous
};

CorpusStats corpus_stats(const std::vector<Sample>& samples);

}  // namespace safire
