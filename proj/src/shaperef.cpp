#include "safire/shaperef.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace safire {

namespace {

constexpr std::array<std::string_view, kShapeCount> kShapeNames{"square", "circle", "triangle"};
constexpr std::array<std::string_view, kColorCount> kColorNames{"red",    "green",  "blue",  "yellow",
                                                                 "purple", "orange", "white", "black"};
constexpr std::array<std::string_view, 2> kSizeNames{"small", "large"};
constexpr std::array<std::string_view, 3> kPronounNames{"it", "he", "she"};
constexpr std::array<std::string_view, 3> kModeNames{"simple", "object-distracting", "category-implicit"};

template <typename T, std::size_t N>
std::optional<T> lookup(const std::array<std::string_view, N>& names, std::string_view word) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == word) return static_cast<T>(i);
  return std::nullopt;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

std::string_view shape_name(ShapeKind s) { return kShapeNames[static_cast<std::size_t>(s)]; }
std::string_view color_name(Color c) { return kColorNames[static_cast<std::size_t>(c)]; }
std::string_view size_name(SizeClass s) { return kSizeNames[static_cast<std::size_t>(s)]; }
std::string_view pronoun_name(Pronoun p) { return kPronounNames[static_cast<std::size_t>(p)]; }
std::string_view mode_name(Mode m) { return kModeNames[static_cast<std::size_t>(m)]; }

Mode parse_mode(std::string_view name) {
  if (auto m = lookup<Mode>(kModeNames, name)) return *m;
  throw ExpressionError("unknown mode '" + std::string(name) + "'");
}

std::array<std::uint8_t, 3> color_rgb(Color c) {
  static constexpr std::array<std::array<std::uint8_t, 3>, kColorCount> rgb{{
      {220, 40, 40},
      {40, 170, 60},
      {40, 80, 220},
      {235, 215, 40},
      {150, 60, 190},
      {245, 140, 30},
      {250, 250, 250},
      {15, 15, 15},
  }};
  return rgb[static_cast<std::size_t>(c)];
}

// ---------------------------------------------------------------------------
// Vocabulary

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w{"the",   "is",     "one",     "of",      "to",   "and", "than",
                               "further", "left", "right",   "above",   "below", "between", "nearest"};
    for (auto p : kPronounNames) w.emplace_back(p);
    for (auto s : kSizeNames) w.emplace_back(s);
    for (auto c : kColorNames) w.emplace_back(c);
    for (auto s : kShapeNames) w.emplace_back(s);
    return w;
  }();
  return words;
}

std::size_t token_id(std::string_view word) {
  static const std::unordered_map<std::string_view, std::size_t> ids = [] {
    std::unordered_map<std::string_view, std::size_t> m;
    const auto& v = vocabulary();
    for (std::size_t i = 0; i < v.size(); ++i) m.emplace(v[i], i);
    return m;
  }();
  const auto it = ids.find(word);
  if (it == ids.end()) throw ExpressionError("word '" + std::string(word) + "' is not in the vocabulary");
  return it->second;
}

std::string_view token_word(std::size_t id) {
  const auto& v = vocabulary();
  if (id >= v.size()) throw ExpressionError("token id " + std::to_string(id) + " out of vocabulary");
  return v[id];
}

std::uint64_t vocabulary_hash() {
  std::string joined;
  for (const auto& w : vocabulary()) joined += w + "\n";
  return fnv1a64(joined);
}

std::string tokens_to_text(std::span<const std::size_t> tokens) {
  std::string out;
  for (std::size_t t : tokens) {
    if (!out.empty()) out += ' ';
    out += token_word(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenes

bool SceneObject::covers(std::size_t row, std::size_t col) const {
  if (row < y || col < x || row >= y + extent || col >= x + extent) return false;
  const auto s = static_cast<long>(extent);
  const auto r = static_cast<long>(row - y);
  const auto c = static_cast<long>(col - x);
  switch (shape) {
    case ShapeKind::square: return true;
    case ShapeKind::circle: {
      const long dx = 2 * c + 1 - s;
      const long dy = 2 * r + 1 - s;
      return dx * dx + dy * dy <= s * s;
    }
    case ShapeKind::triangle: return std::abs(2 * c + 1 - s) <= r + 1;
  }
  return false;
}

std::size_t Scene::same_category_distractors() const {
  const ShapeKind s = object(target).shape;
  std::size_t n = 0;
  for (const auto& o : objects) n += o.id != target && o.shape == s;
  return n;
}

void GenConfig::validate() const {
  if (height == 0 || width == 0) throw GenerationError("canvas must be non-empty");
  if (small_extent == 0 || large_extent < small_extent) throw GenerationError("invalid object extents");
  if (large_extent > height || large_extent > width) throw GenerationError("objects larger than the canvas");
  if (!(distractor_mean >= 0.0)) throw GenerationError("distractor_mean must be >= 0");
  if (extra_max < extra_min) throw GenerationError("extra_max < extra_min");
  double total = 0.0;
  for (double m : mode_mix) {
    if (!(m >= 0.0)) throw GenerationError("mode_mix entries must be >= 0");
    total += m;
  }
  if (!(total > 0.0)) throw GenerationError("mode_mix must not be all zero");
}

std::size_t draw_distractor_count(double mean, Rng& rng) {
  const double base = std::floor(mean);
  return static_cast<std::size_t>(base) + (rng.bernoulli(mean - base) ? 1 : 0);
}

Scene gen_scene(std::uint64_t seed, const GenConfig& config, std::size_t distractors) {
  config.validate();
  Rng rng(seed);
  Scene scene;
  scene.height = config.height;
  scene.width = config.width;
  std::size_t tries = 0;

  auto place = [&](ShapeKind shape) {
    SceneObject o;
    o.shape = shape;
    o.size = rng.bernoulli(0.5) ? SizeClass::large : SizeClass::small;
    o.extent = o.size == SizeClass::large ? config.large_extent : config.small_extent;
    o.color = static_cast<Color>(rng.below(kColorCount));
    while (true) {
      if (++tries > config.placement_attempts) {
        throw GenerationError("object placement exceeded " + std::to_string(config.placement_attempts) + " attempts");
      }
      o.x = rng.below(config.width - o.extent + 1);
      o.y = rng.below(config.height - o.extent + 1);
      const bool clear = std::all_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& p) {
        return o.x >= p.x + p.extent + config.gap || p.x >= o.x + o.extent + config.gap ||
               o.y >= p.y + p.extent + config.gap || p.y >= o.y + o.extent + config.gap;
      });
      if (clear) break;
    }
    scene.objects.push_back(o);
  };

  const auto target_shape = static_cast<ShapeKind>(rng.below(kShapeCount));
  place(target_shape);
  for (std::size_t i = 0; i < distractors; ++i) place(target_shape);
  const std::size_t extras = config.extra_min + rng.below(config.extra_max - config.extra_min + 1);
  for (std::size_t i = 0; i < extras; ++i) {
    const std::size_t k = (static_cast<std::size_t>(target_shape) + 1 + rng.below(kShapeCount - 1)) % kShapeCount;
    place(static_cast<ShapeKind>(k));
  }

  // Random ids so the target is not always the first object.
  std::vector<std::size_t> ids(scene.objects.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  shuffle(ids, rng);
  std::vector<SceneObject> ordered(scene.objects.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ordered[ids[i]] = scene.objects[i];
    ordered[ids[i]].id = ids[i];
  }
  scene.objects = std::move(ordered);
  scene.target = ids[0];
  return scene;
}

Scene gen_scene(std::uint64_t seed, const GenConfig& config) {
  Rng rng(hash_combine(seed, fnv1a64("distractors")));
  return gen_scene(seed, config, draw_distractor_count(config.distractor_mean, rng));
}

// ---------------------------------------------------------------------------
// Logical forms

bool NounPhrase::matches(const SceneObject& o) const {
  return (!size || *size == o.size) && (!color || *color == o.color) && (!shape || *shape == o.shape);
}

namespace {

void emit_np_body(std::vector<std::size_t>& out, const NounPhrase& np) {
  if (np.size) out.push_back(token_id(size_name(*np.size)));
  if (np.color) out.push_back(token_id(color_name(*np.color)));
}

void emit_np(std::vector<std::size_t>& out, const NounPhrase& np) {
  if (!np.shape) throw ExpressionError("anchor noun phrases need a shape");
  out.push_back(token_id("the"));
  emit_np_body(out, np);
  out.push_back(token_id(shape_name(*np.shape)));
}

std::size_t anchor_count(Relation r) {
  switch (r) {
    case Relation::none: return 0;
    case Relation::between: return 2;
    default: return 1;
  }
}

class Parser {
 public:
  explicit Parser(std::span<const std::size_t> tokens) {
    for (std::size_t t : tokens) words_.push_back(token_word(t));
  }

  LogicalForm parse() {
    LogicalForm f;
    if (words_.empty()) fail("empty expression");
    if (auto p = lookup<Pronoun>(kPronounNames, peek())) {
      ++pos_;
      f.pronoun = *p;
      expect("is");
      expect("the");
      f.subject = np_body(false);
      expect("one");
      relation(f);
    } else if (peek() == "the") {
      ++pos_;
      f.subject = np_body(true);
      if (!done()) relation(f);
    } else {
      f.bare = true;
      f.subject = np_body(true);
    }
    if (!done()) fail("unexpected '" + std::string(peek()) + "'");
    return f;
  }

 private:
  std::string_view peek() const { return done() ? std::string_view{} : words_[pos_]; }
  bool done() const { return pos_ >= words_.size(); }
  [[noreturn]] void fail(const std::string& why) const {
    throw ExpressionError("malformed expression at token " + std::to_string(pos_) + ": " + why);
  }
  void expect(std::string_view w) {
    if (peek() != w) fail("expected '" + std::string(w) + "'");
    ++pos_;
  }

  NounPhrase np_body(bool with_shape) {
    NounPhrase np;
    if (auto s = lookup<SizeClass>(kSizeNames, peek())) {
      np.size = *s;
      ++pos_;
    }
    if (auto c = lookup<Color>(kColorNames, peek())) {
      np.color = *c;
      ++pos_;
    }
    if (with_shape) {
      auto s = lookup<ShapeKind>(kShapeNames, peek());
      if (!s) fail("expected a shape");
      np.shape = *s;
      ++pos_;
    }
    return np;
  }

  NounPhrase np() {
    expect("the");
    return np_body(true);
  }

  void relation(LogicalForm& f) {
    const std::string_view w = peek();
    ++pos_;
    if (w == "to") {
      expect("the");
      f.relation = side();
      expect("of");
    } else if (w == "further") {
      f.comparative = true;
      f.relation = side();
      expect("than");
    } else if (w == "above") {
      f.relation = Relation::above;
    } else if (w == "below") {
      f.relation = Relation::below;
    } else if (w == "nearest") {
      expect("to");
      f.relation = Relation::nearest;
    } else if (w == "between") {
      f.relation = Relation::between;
      f.anchors.push_back(np());
      expect("and");
    } else {
      --pos_;
      fail("expected a relation");
    }
    f.anchors.push_back(np());
  }

  Relation side() {
    const std::string_view w = peek();
    ++pos_;
    if (w == "left") return Relation::left;
    if (w == "right") return Relation::right;
    --pos_;
    fail("expected left or right");
  }

  std::vector<std::string_view> words_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::size_t> realize(const LogicalForm& f) {
  if (f.anchors.size() != anchor_count(f.relation)) throw ExpressionError("anchor count does not match relation");
  std::vector<std::size_t> out;
  if (f.bare) {
    if (f.pronoun || f.relation != Relation::none || !f.subject.shape || f.comparative) {
      throw ExpressionError("bare expressions are '[size] [color] shape' only");
    }
    emit_np_body(out, f.subject);
    out.push_back(token_id(shape_name(*f.subject.shape)));
    return out;
  }
  if (f.pronoun) {
    if (f.subject.shape) throw ExpressionError("pronoun subjects carry no shape");
    if (f.relation == Relation::none) throw ExpressionError("pronoun subjects need a relation");
    out.push_back(token_id(pronoun_name(*f.pronoun)));
    out.push_back(token_id("is"));
    out.push_back(token_id("the"));
    emit_np_body(out, f.subject);
    out.push_back(token_id("one"));
  } else {
    emit_np(out, f.subject);
  }
  if (f.comparative && f.relation != Relation::left && f.relation != Relation::right) {
    throw ExpressionError("comparative form exists only for left/right");
  }
  switch (f.relation) {
    case Relation::none: break;
    case Relation::left:
    case Relation::right: {
      const auto side = token_id(f.relation == Relation::left ? "left" : "right");
      if (f.comparative) {
        out.insert(out.end(), {token_id("further"), side, token_id("than")});
      } else {
        out.insert(out.end(), {token_id("to"), token_id("the"), side, token_id("of")});
      }
      emit_np(out, f.anchors[0]);
      break;
    }
    case Relation::above:
    case Relation::below:
      out.push_back(token_id(f.relation == Relation::above ? "above" : "below"));
      emit_np(out, f.anchors[0]);
      break;
    case Relation::nearest:
      out.insert(out.end(), {token_id("nearest"), token_id("to")});
      emit_np(out, f.anchors[0]);
      break;
    case Relation::between:
      out.push_back(token_id("between"));
      emit_np(out, f.anchors[0]);
      out.push_back(token_id("and"));
      emit_np(out, f.anchors[1]);
      break;
  }
  return out;
}

LogicalForm parse_expression(std::span<const std::size_t> tokens) { return Parser(tokens).parse(); }

// ---------------------------------------------------------------------------
// Resolution

namespace {

std::vector<const SceneObject*> matching(const Scene& scene, const NounPhrase& np) {
  std::vector<const SceneObject*> out;
  for (const auto& o : scene.objects)
    if (np.matches(o)) out.push_back(&o);
  return out;
}

double distance(const SceneObject& a, const SceneObject& b) { return std::hypot(a.cx() - b.cx(), a.cy() - b.cy()); }

bool holds(Relation r, const SceneObject& a, const SceneObject& b) {
  switch (r) {
    case Relation::left: return a.cx() < b.cx();
    case Relation::right: return a.cx() > b.cx();
    case Relation::above: return a.cy() < b.cy();
    case Relation::below: return a.cy() > b.cy();
    default: return false;
  }
}

bool strictly_between(double v, double a, double b) { return std::min(a, b) < v && v < std::max(a, b); }

}  // namespace

Resolution resolve(const Scene& scene, const LogicalForm& f) {
  if (f.anchors.size() != anchor_count(f.relation)) throw ExpressionError("anchor count does not match relation");
  const auto cands = matching(scene, f.subject);
  std::vector<std::size_t> out;
  switch (f.relation) {
    case Relation::none:
      for (auto* a : cands) out.push_back(a->id);
      break;
    case Relation::left:
    case Relation::right:
    case Relation::above:
    case Relation::below: {
      const auto anchors = matching(scene, f.anchors[0]);
      for (auto* a : cands)
        for (auto* b : anchors)
          if (a != b && holds(f.relation, *a, *b)) {
            out.push_back(a->id);
            break;
          }
      break;
    }
    case Relation::nearest: {
      for (auto* b : matching(scene, f.anchors[0])) {
        double best = std::numeric_limits<double>::infinity();
        for (auto* a : cands)
          if (a != b) best = std::min(best, distance(*a, *b));
        for (auto* a : cands)
          if (a != b && distance(*a, *b) == best) out.push_back(a->id);
      }
      break;
    }
    case Relation::between: {
      const auto first = matching(scene, f.anchors[0]);
      const auto second = matching(scene, f.anchors[1]);
      for (auto* a : cands) {
        bool ok = false;
        for (auto* b1 : first)
          for (auto* b2 : second)
            ok = ok || (b1 != b2 && a != b1 && a != b2 && strictly_between(a->cx(), b1->cx(), b2->cx()));
        if (ok) out.push_back(a->id);
      }
      break;
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return {out};
}

Resolution resolve(const Scene& scene, std::span<const std::size_t> tokens) {
  return resolve(scene, parse_expression(tokens));
}

double relation_margin(const Scene& scene, const LogicalForm& f) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (f.relation == Relation::none) return inf;
  std::vector<const SceneObject*> anchors;
  for (const auto& np : f.anchors) {
    const auto m = matching(scene, np);
    if (m.size() != 1) throw ExpressionError("relation_margin needs uniquely resolving anchors");
    anchors.push_back(m[0]);
  }
  std::vector<const SceneObject*> cands;
  for (auto* a : matching(scene, f.subject))
    if (std::find(anchors.begin(), anchors.end(), a) == anchors.end()) cands.push_back(a);

  double margin = inf;
  switch (f.relation) {
    case Relation::left:
    case Relation::right:
      for (auto* a : cands) margin = std::min(margin, std::abs(a->cx() - anchors[0]->cx()));
      break;
    case Relation::above:
    case Relation::below:
      for (auto* a : cands) margin = std::min(margin, std::abs(a->cy() - anchors[0]->cy()));
      break;
    case Relation::nearest: {
      std::vector<double> d;
      for (auto* a : cands) d.push_back(distance(*a, *anchors[0]));
      std::sort(d.begin(), d.end());
      if (d.size() >= 2) margin = d[1] - d[0];
      break;
    }
    case Relation::between:
      for (auto* a : cands) {
        margin = std::min({margin, std::abs(a->cx() - anchors[0]->cx()), std::abs(a->cx() - anchors[1]->cx())});
      }
      break;
    case Relation::none: break;
  }
  return margin;
}

// ---------------------------------------------------------------------------
// Expression generation

namespace {

/// Shortest phrase (always with the shape) that picks out `o` alone.
std::optional<NounPhrase> unique_phrase(const Scene& scene, const SceneObject& o, Rng& rng) {
  const NounPhrase shape_only{std::nullopt, std::nullopt, o.shape};
  std::vector<NounPhrase> two{{std::nullopt, o.color, o.shape}, {o.size, std::nullopt, o.shape}};
  shuffle(two, rng);
  const NounPhrase full{o.size, o.color, o.shape};
  for (const NounPhrase& np : {shape_only, two[0], two[1], full}) {
    if (matching(scene, np).size() == 1) return np;
  }
  return std::nullopt;
}

struct Anchor {
  const SceneObject* object;
  NounPhrase phrase;
};

}  // namespace

Expression gen_expression(const Scene& scene, Mode mode, std::uint64_t seed, double margin) {
  Rng rng(seed);
  const SceneObject& t = scene.object(scene.target);
  Expression e;
  e.mode = mode;

  auto accept = [&](const LogicalForm& f, std::vector<std::size_t> anchors) {
    const Resolution r = resolve(scene, f);
    if (!r.unique() || r.satisfiers[0] != t.id) return false;
    if (relation_margin(scene, f) < margin) return false;
    e.form = f;
    e.tokens = realize(f);
    e.referenced = {t.id};
    e.referenced.insert(e.referenced.end(), anchors.begin(), anchors.end());
    return true;
  };

  if (mode == Mode::simple) {
    LogicalForm f;
    f.bare = true;
    f.subject = {std::nullopt, t.color, t.shape};
    if (accept(f, {})) return e;
    throw GenerationError("target colour and shape are not unique in the scene");
  }

  const bool implicit = mode == Mode::category_implicit;
  std::vector<NounPhrase> subjects;
  if (implicit) {
    subjects = {{}, {std::nullopt, t.color, std::nullopt}, {t.size, std::nullopt, std::nullopt}, {t.size, t.color, std::nullopt}};
    shuffle(subjects, rng);
  } else {
    // Phrases that are ambiguous on their own come first.
    std::vector<NounPhrase> ambiguous, unique;
    for (const NounPhrase& np : {NounPhrase{std::nullopt, std::nullopt, t.shape}, NounPhrase{std::nullopt, t.color, t.shape},
                                 NounPhrase{t.size, std::nullopt, t.shape}, NounPhrase{t.size, t.color, t.shape}}) {
      (matching(scene, np).size() > 1 ? ambiguous : unique).push_back(np);
    }
    shuffle(ambiguous, rng);
    shuffle(unique, rng);
    subjects = ambiguous;
    subjects.insert(subjects.end(), unique.begin(), unique.end());
  }

  std::vector<Anchor> pool;
  for (const auto& o : scene.objects) {
    if (o.id == t.id || (implicit && o.shape == t.shape)) continue;
    if (auto np = unique_phrase(scene, o, rng)) pool.push_back({&o, *np});
  }
  shuffle(pool, rng);

  std::vector<Relation> relations{Relation::left,  Relation::right,   Relation::above,
                                  Relation::below, Relation::nearest, Relation::between};
  shuffle(relations, rng);
  const Pronoun pronoun = static_cast<Pronoun>(rng.below(3));

  for (Relation rel : relations) {
    for (const NounPhrase& subject : subjects) {
      LogicalForm f;
      f.subject = subject;
      if (implicit) f.pronoun = pronoun;
      f.relation = rel;
      f.comparative = (rel == Relation::left || rel == Relation::right) && rng.bernoulli(0.3);
      if (rel == Relation::between) {
        for (std::size_t i = 0; i < pool.size(); ++i)
          for (std::size_t j = 0; j < pool.size(); ++j) {
            if (i == j) continue;
            f.anchors = {pool[i].phrase, pool[j].phrase};
            if (accept(f, {pool[i].object->id, pool[j].object->id})) return e;
          }
      } else {
        for (const Anchor& a : pool) {
          f.anchors = {a.phrase};
          if (accept(f, {a.object->id})) return e;
        }
      }
    }
  }
  throw GenerationError(std::string("no unique ") + std::string(mode_name(mode)) + " expression for this scene");
}

std::string audit_expression(const Scene& scene, const Expression& expr, double margin) {
  LogicalForm f;
  try {
    f = parse_expression(expr.tokens);
  } catch (const ExpressionError& err) {
    return err.what();
  }
  if (!(f == expr.form)) return "tokens do not parse back to the recorded logical form";
  const Resolution r = resolve(scene, f);
  if (!r.unique()) return "expression has " + std::to_string(r.satisfiers.size()) + " satisfiers";
  if (r.satisfiers[0] != scene.target) return "expression resolves to a non-target object";
  if (relation_margin(scene, f) < margin) return "relation holds with less than the required margin";
  if (expr.referenced.empty() || expr.referenced[0] != scene.target) return "referenced ids do not start with the target";

  const SceneObject& t = scene.object(scene.target);
  const std::size_t target_shape = token_id(shape_name(t.shape));
  std::size_t shape_tokens = 0;
  bool has_pronoun = false;
  for (std::size_t tok : expr.tokens) {
    const auto w = token_word(tok);
    shape_tokens += lookup<ShapeKind>(kShapeNames, w).has_value();
    has_pronoun = has_pronoun || lookup<Pronoun>(kPronounNames, w).has_value();
  }
  switch (expr.mode) {
    case Mode::simple:
      if (expr.tokens.size() != 2 || expr.tokens[0] != token_id(color_name(t.color)) || expr.tokens[1] != target_shape) {
        return "simple expression is not '<color> <shape>' of the target";
      }
      break;
    case Mode::object_distracting: {
      if (has_pronoun) return "object-distracting expression contains a pronoun";
      if (shape_tokens < 2) return "object-distracting expression has fewer than two noun phrases";
      for (std::size_t i = 0; i < f.anchors.size(); ++i) {
        const auto m = matching(scene, f.anchors[i]);
        if (m.size() != 1 || m[0]->id == scene.target) return "anchor phrase does not denote one real distractor";
        if (expr.referenced.size() != f.anchors.size() + 1 || expr.referenced[i + 1] != m[0]->id) {
          return "referenced ids do not match the anchors";
        }
      }
      break;
    }
    case Mode::category_implicit:
      if (!f.pronoun || !has_pronoun) return "category-implicit expression lacks a pronoun subject";
      for (std::size_t tok : expr.tokens)
        if (tok == target_shape) return "category-implicit expression names the target's shape";
      break;
  }
  return {};
}

// ---------------------------------------------------------------------------
// Rasterization

std::vector<std::uint8_t> object_mask(const Scene& scene, std::size_t id) {
  const SceneObject& o = scene.object(id);
  std::vector<std::uint8_t> m(scene.height * scene.width, 0);
  for (std::size_t r = o.y; r < std::min(scene.height, o.y + o.extent); ++r)
    for (std::size_t c = o.x; c < std::min(scene.width, o.x + o.extent); ++c) m[r * scene.width + c] = o.covers(r, c);
  return m;
}

Raster rasterize(const Scene& scene) {
  Raster out;
  out.height = scene.height;
  out.width = scene.width;
  out.rgb.resize(scene.height * scene.width * 3);
  for (std::size_t i = 0; i < scene.height * scene.width; ++i) std::copy(kBackground.begin(), kBackground.end(), &out.rgb[i * 3]);
  out.mask.assign(scene.height * scene.width, 0);
  for (const auto& o : scene.objects) {
    const auto rgb = color_rgb(o.color);
    const auto m = object_mask(scene, o.id);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!m[i]) continue;
      std::copy(rgb.begin(), rgb.end(), &out.rgb[i * 3]);
      if (o.id == scene.target) out.mask[i] = 1;
    }
  }
  return out;
}

}  // namespace safire
