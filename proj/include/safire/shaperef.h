#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "safire/random.h"

namespace safire {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ExpressionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ShapeKind : std::uint8_t { square, circle, triangle };
enum class Color : std::uint8_t { red, green, blue, yellow, purple, orange, white, black };
enum class SizeClass : std::uint8_t { small, large };
enum class Pronoun : std::uint8_t { it, he, she };
enum class Mode : std::uint8_t { simple, object_distracting, category_implicit };

inline constexpr std::size_t kShapeCount = 3;
inline constexpr std::size_t kColorCount = 8;

std::string_view shape_name(ShapeKind s);
std::string_view color_name(Color c);
std::string_view size_name(SizeClass s);
std::string_view pronoun_name(Pronoun p);
std::string_view mode_name(Mode m);
Mode parse_mode(std::string_view name);
std::array<std::uint8_t, 3> color_rgb(Color c);
inline constexpr std::array<std::uint8_t, 3> kBackground{128, 128, 128};

// ---------------------------------------------------------------------------
// Vocabulary: fixed list, line number = id.

const std::vector<std::string>& vocabulary();
std::size_t token_id(std::string_view word);
std::string_view token_word(std::size_t id);
std::uint64_t vocabulary_hash();
std::string tokens_to_text(std::span<const std::size_t> tokens);

// ---------------------------------------------------------------------------
// Scenes

struct SceneObject {
  std::size_t id = 0;
  ShapeKind shape = ShapeKind::square;
  Color color = Color::red;
  SizeClass size = SizeClass::small;
  std::size_t extent = 0;  // bounding-box side in pixels
  std::size_t x = 0;       // left column
  std::size_t y = 0;       // top row

  double cx() const { return static_cast<double>(x) + static_cast<double>(extent) / 2.0; }
  double cy() const { return static_cast<double>(y) + static_cast<double>(extent) / 2.0; }
  /// Pixel (row, col) in image coordinates.
  bool covers(std::size_t row, std::size_t col) const;
};

struct Scene {
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<SceneObject> objects;
  std::size_t target = 0;

  const SceneObject& object(std::size_t id) const { return objects.at(id); }
  /// Objects other than the target that share its shape.
  std::size_t same_category_distractors() const;
};

struct GenConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  double distractor_mean = 3.1;  // same-shape objects besides the target
  std::size_t extra_min = 1;     // objects of other shapes
  std::size_t extra_max = 2;
  std::size_t small_extent = 6;
  std::size_t large_extent = 9;
  std::size_t gap = 1;           // free pixels between bounding boxes
  double margin = 2.0;           // relations must hold by at least this many pixels
  std::size_t placement_attempts = 1000;
  std::size_t sample_attempts = 500;
  std::array<double, 3> mode_mix{0.4, 0.3, 0.3};

  void validate() const;
};

/// floor(mean) plus a Bernoulli draw on the fractional part.
std::size_t draw_distractor_count(double mean, Rng& rng);

/// Places the target, `distractors` objects of its shape, then the extras;
/// ids are shuffled afterwards. Throws GenerationError when placement exceeds
/// its attempt bound.
Scene gen_scene(std::uint64_t seed, const GenConfig& config, std::size_t distractors);
Scene gen_scene(std::uint64_t seed, const GenConfig& config);

// ---------------------------------------------------------------------------
// Expressions

enum class Relation : std::uint8_t { none, left, right, above, below, nearest, between };

struct NounPhrase {
  std::optional<SizeClass> size;
  std::optional<Color> color;
  std::optional<ShapeKind> shape;

  bool matches(const SceneObject& o) const;
  bool operator==(const NounPhrase&) const = default;
};

/// Grammar:
///   bare:     COLOR SHAPE
///   explicit: the NP-body REL
///   pronoun:  PRON is the [SIZE] [COLOR] one REL
///   REL:      to the (left|right) of NP | further (left|right) than NP
///             | (above|below) NP | nearest to NP | between NP and NP
///   NP:       the [SIZE] [COLOR] SHAPE
struct LogicalForm {
  NounPhrase subject;
  std::optional<Pronoun> pronoun;
  Relation relation = Relation::none;
  std::vector<NounPhrase> anchors;
  bool bare = false;
  bool comparative = false;

  bool operator==(const LogicalForm&) const = default;
};

std::vector<std::size_t> realize(const LogicalForm& form);
LogicalForm parse_expression(std::span<const std::size_t> tokens);

struct Resolution {
  std::vector<std::size_t> satisfiers;  // sorted ids
  bool unique() const { return satisfiers.size() == 1; }
};

/// Exhaustive evaluation; anchors are read existentially, so an ambiguous
/// anchor widens the satisfier set rather than failing.
Resolution resolve(const Scene& scene, const LogicalForm& form);
Resolution resolve(const Scene& scene, std::span<const std::size_t> tokens);

/// Smallest distance, over every object the subject phrase admits, between
/// its relation value and the decision boundary. Infinite without a relation
/// or with fewer than two candidates for "nearest". Anchors must be unique.
double relation_margin(const Scene& scene, const LogicalForm& form);

struct Expression {
  std::vector<std::size_t> tokens;
  Mode mode = Mode::simple;
  LogicalForm form;
  std::vector<std::size_t> referenced;  // target first, then anchors
};

Expression gen_expression(const Scene& scene, Mode mode, std::uint64_t seed, double margin = 2.0);

/// Vocabulary-level checks of the mode invariants plus resolver uniqueness.
/// Returns an empty string when the sample is valid, else the first problem.
std::string audit_expression(const Scene& scene, const Expression& expr, double margin = 2.0);

// ---------------------------------------------------------------------------
// Rasterization

struct Raster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;   // height * width * 3
  std::vector<std::uint8_t> mask;  // height * width, 0 or 1
};

Raster rasterize(const Scene& scene);
std::vector<std::uint8_t> object_mask(const Scene& scene, std::size_t id);

}  // namespace safire
