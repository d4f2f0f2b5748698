#include "safire/dataset.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace safire {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t sample_seed(std::uint64_t base_seed, std::string_view split, std::size_t index) {
  return hash_combine(hash_combine(base_seed, fnv1a64(split)), index);
}

std::array<std::size_t, 3> stratified_counts(std::size_t size, const std::array<double, 3>& mix) {
  double total = 0.0;
  for (double m : mix) total += m;
  if (!(total > 0.0)) throw GenerationError("mode mix must have a positive sum");
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(size) * mix[i] / total;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < size) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i)
      if (remainder[i] > remainder[best]) best = i;
    ++counts[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  return counts;
}

std::vector<Mode> mode_schedule(std::size_t size, const std::array<double, 3>& mix, std::uint64_t seed) {
  const auto counts = stratified_counts(size, mix);
  std::vector<Mode> modes;
  for (std::size_t m = 0; m < 3; ++m) modes.insert(modes.end(), counts[m], static_cast<Mode>(m));
  Rng rng(hash_combine(seed, fnv1a64("modes")));
  for (std::size_t i = modes.size(); i > 1; --i) std::swap(modes[i - 1], modes[rng.below(i)]);
  return modes;
}

Sample gen_sample(std::uint64_t seed, std::size_t index, Mode mode, const GenConfig& config) {
  // The distractor count comes from the sample seed, not the attempt seed,
  // so retries cannot bias its distribution.
  Rng count_rng(hash_combine(seed, fnv1a64("distractors")));
  std::size_t distractors = draw_distractor_count(config.distractor_mean, count_rng);
  if (mode != Mode::simple) distractors = std::max<std::size_t>(distractors, 1);

  for (std::size_t attempt = 1; attempt <= config.sample_attempts; ++attempt) {
    const std::uint64_t s = hash_combine(seed, attempt);
    try {
      Sample out;
      out.index = index;
      out.seed = seed;
      out.mode = mode;
      out.scene = gen_scene(s, config, distractors);
      out.expression = gen_expression(out.scene, mode, hash_combine(s, fnv1a64("expression")), config.margin);
      const std::string problem = audit_expression(out.scene, out.expression, config.margin);
      if (!problem.empty()) throw OracleError("generated sample fails its own audit: " + problem);
      out.raster = rasterize(out.scene);
      return out;
    } catch (const GenerationError&) {
    }
  }
  throw GenerationError("sample " + std::to_string(index) + ": no valid " + std::string(mode_name(mode)) +
                        " sample within " + std::to_string(config.sample_attempts) + " attempts");
}

Sample mirror_sample(const Sample& sample) {
  Sample out = sample;
  for (auto& o : out.scene.objects) o.x = out.scene.width - o.x - o.extent;
  const std::size_t left = token_id("left"), right = token_id("right");
  for (auto& t : out.expression.tokens) {
    if (t == left)
      t = right;
    else if (t == right)
      t = left;
  }
  Relation& rel = out.expression.form.relation;
  if (rel == Relation::left)
    rel = Relation::right;
  else if (rel == Relation::right)
    rel = Relation::left;
  out.raster = rasterize(out.scene);
  return out;
}

Sample flip_sample(const Sample& sample) {
  Sample out = sample;
  for (auto& o : out.scene.objects) o.y = out.scene.height - o.y - o.extent;
  const std::size_t above = token_id("above"), below = token_id("below");
  for (auto& t : out.expression.tokens) {
    if (t == above)
      t = below;
    else if (t == below)
      t = above;
  }
  Relation& rel = out.expression.form.relation;
  if (rel == Relation::above)
    rel = Relation::below;
  else if (rel == Relation::below)
    rel = Relation::above;
  out.raster = rasterize(out.scene);
  return out;
}

Sample relabel_sample(const Sample& sample, const std::array<Color, kColorCount>& colors,
                      const std::array<ShapeKind, kShapeCount>& shapes) {
  Sample out = sample;
  auto color = [&](Color c) { return colors[static_cast<std::size_t>(c)]; };
  auto shape = [&](ShapeKind k) { return shapes[static_cast<std::size_t>(k)]; };
  auto relabel = [&](NounPhrase& np) {
    if (np.color) np.color = color(*np.color);
    if (np.shape) np.shape = shape(*np.shape);
  };
  for (auto& o : out.scene.objects) {
    o.color = color(o.color);
    o.shape = shape(o.shape);
  }
  relabel(out.expression.form.subject);
  for (auto& a : out.expression.form.anchors) relabel(a);
  out.expression.tokens = realize(out.expression.form);
  out.raster = rasterize(out.scene);
  return out;
}

std::vector<Sample> build_split(const std::string& name, std::size_t size, std::uint64_t base_seed,
                                const GenConfig& config) {
  config.validate();
  const auto modes = mode_schedule(size, config.mode_mix, hash_combine(base_seed, fnv1a64(name)));
  std::vector<Sample> samples;
  samples.reserve(size);
  for (std::size_t i = 0; i < size; ++i) samples.push_back(gen_sample(sample_seed(base_seed, name, i), i, modes[i], config));
  return samples;
}

// ---------------------------------------------------------------------------
// PNM

void write_pnm(const fs::path& path, const Pnm& image) {
  if (image.channels != 1 && image.channels != 3) throw std::runtime_error("PNM needs 1 or 3 channels");
  if (image.data.size() != image.width * image.height * image.channels) {
    throw std::runtime_error("PNM data size does not match extents for " + path.string());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << (image.channels == 3 ? "P6" : "P5") << "\n" << image.width << " " << image.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(image.data.data()), static_cast<std::streamsize>(image.data.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

Pnm read_pnm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  Pnm out;
  std::size_t maxval = 0;
  f >> magic >> out.width >> out.height >> maxval;
  if (!f || (magic != "P5" && magic != "P6") || maxval != 255) {
    throw std::runtime_error(path.string() + ": unsupported PNM header");
  }
  f.get();
  out.channels = magic == "P6" ? 3 : 1;
  out.data.resize(out.width * out.height * out.channels);
  f.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(out.data.size()));
  if (f.gcount() != static_cast<std::streamsize>(out.data.size())) throw std::runtime_error(path.string() + ": truncated");
  return out;
}

// ---------------------------------------------------------------------------
// Split files

namespace {

std::string file_stem(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

json object_json(const SceneObject& o) {
  return {{"id", o.id},
          {"shape", shape_name(o.shape)},
          {"color", color_name(o.color)},
          {"size", size_name(o.size)},
          {"extent", o.extent},
          {"x", o.x},
          {"y", o.y}};
}

template <typename T, typename F>
T enum_from(const std::string& word, std::size_t count, F name) {
  for (std::size_t i = 0; i < count; ++i)
    if (name(static_cast<T>(i)) == word) return static_cast<T>(i);
  throw std::runtime_error("unknown value '" + word + "' in meta.jsonl");
}

}  // namespace

void write_split(const fs::path& dir, const std::vector<Sample>& samples) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  std::ofstream meta(dir / "meta.jsonl", std::ios::binary);
  if (!meta) throw std::runtime_error("cannot write " + (dir / "meta.jsonl").string());
  for (const Sample& s : samples) {
    const std::string stem = file_stem(s.index);
    json objects = json::array();
    for (const auto& o : s.scene.objects) objects.push_back(object_json(o));
    const json rec = {{"index", s.index},
                      {"seed", s.seed},
                      {"mode", mode_name(s.mode)},
                      {"tokens", s.expression.tokens},
                      {"text", tokens_to_text(s.expression.tokens)},
                      {"referenced", s.expression.referenced},
                      {"height", s.scene.height},
                      {"width", s.scene.width},
                      {"target", s.scene.target},
                      {"objects", objects},
                      {"distractors", s.scene.same_category_distractors()},
                      {"image", "images/" + stem + ".ppm"},
                      {"mask", "masks/" + stem + ".pgm"}};
    meta << rec.dump() << "\n";

    write_pnm(dir / "images" / (stem + ".ppm"), {s.raster.width, s.raster.height, 3, s.raster.rgb});
    std::vector<std::uint8_t> gray(s.raster.mask.size());
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = s.raster.mask[i] ? 255 : 0;
    write_pnm(dir / "masks" / (stem + ".pgm"), {s.raster.width, s.raster.height, 1, std::move(gray)});
  }
  std::ofstream vocab(dir / "vocab.txt", std::ios::binary);
  for (const auto& w : vocabulary()) vocab << w << "\n";
  if (!meta || !vocab) throw std::runtime_error("write failed under " + dir.string());
}

std::vector<std::string> read_vocabulary(const fs::path& dir) {
  std::ifstream f(dir / "vocab.txt");
  if (!f) throw std::runtime_error("missing " + (dir / "vocab.txt").string());
  std::vector<std::string> words;
  for (std::string line; std::getline(f, line);) words.push_back(line);
  return words;
}

std::vector<Sample> read_split(const fs::path& dir) {
  if (read_vocabulary(dir) != vocabulary()) throw std::runtime_error(dir.string() + ": vocabulary mismatch");
  std::ifstream meta(dir / "meta.jsonl");
  if (!meta) throw std::runtime_error("missing " + (dir / "meta.jsonl").string());
  std::vector<Sample> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(meta, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      Sample s;
      s.index = rec.at("index").get<std::size_t>();
      s.seed = rec.at("seed").get<std::uint64_t>();
      s.mode = parse_mode(rec.at("mode").get<std::string>());
      s.scene.height = rec.at("height").get<std::size_t>();
      s.scene.width = rec.at("width").get<std::size_t>();
      s.scene.target = rec.at("target").get<std::size_t>();
      for (const json& o : rec.at("objects")) {
        SceneObject obj;
        obj.id = o.at("id").get<std::size_t>();
        obj.shape = enum_from<ShapeKind>(o.at("shape").get<std::string>(), kShapeCount, shape_name);
        obj.color = enum_from<Color>(o.at("color").get<std::string>(), kColorCount, color_name);
        obj.size = enum_from<SizeClass>(o.at("size").get<std::string>(), 2, size_name);
        obj.extent = o.at("extent").get<std::size_t>();
        obj.x = o.at("x").get<std::size_t>();
        obj.y = o.at("y").get<std::size_t>();
        s.scene.objects.push_back(obj);
      }
      s.expression.mode = s.mode;
      s.expression.tokens = rec.at("tokens").get<std::vector<std::size_t>>();
      s.expression.referenced = rec.at("referenced").get<std::vector<std::size_t>>();
      s.expression.form = parse_expression(s.expression.tokens);

      const Pnm image = read_pnm(dir / rec.at("image").get<std::string>());
      const Pnm mask = read_pnm(dir / rec.at("mask").get<std::string>());
      if (image.channels != 3 || mask.channels != 1 || image.width != s.scene.width ||
          image.height != s.scene.height || mask.width != s.scene.width || mask.height != s.scene.height) {
        throw std::runtime_error("image/mask extents disagree with the scene");
      }
      s.raster.height = image.height;
      s.raster.width = image.width;
      s.raster.rgb = image.data;
      s.raster.mask.resize(mask.data.size());
      for (std::size_t i = 0; i < mask.data.size(); ++i) s.raster.mask[i] = mask.data[i] != 0;
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw std::runtime_error((dir / "meta.jsonl").string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

Tensor image_tensor(const Raster& r) {
  std::vector<double> v(r.rgb.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(r.rgb[i]) / 255.0 - 0.5;
  return Tensor::from({r.height, r.width, 3}, std::move(v));
}

Tensor mask_tensor(const Raster& r) {
  std::vector<double> v(r.mask.begin(), r.mask.end());
  return Tensor::from({r.height, r.width}, std::move(v));
}

CorpusStats corpus_stats(const std::vector<Sample>& samples) {
  CorpusStats st;
  st.samples = samples.size();
  if (samples.empty()) return st;
  double distractors = 0.0, tokens = 0.0;
  std::size_t distracting = 0, ambiguous = 0;
  for (const Sample& s : samples) {
    ++st.mode_counts[static_cast<std::size_t>(s.mode)];
    distractors += static_cast<double>(s.scene.same_category_distractors());
    tokens += static_cast<double>(s.expression.tokens.size());
    if (s.mode == Mode::object_distracting) {
      ++distracting;
      LogicalForm subject_only;
      subject_only.subject = s.expression.form.subject;
      ambiguous += resolve(s.scene, subject_only).satisfiers.size() > 1;
    }
  }
  const auto n = static_cast<double>(samples.size());
  st.mean_distractors = distractors / n;
  st.mean_tokens = tokens / n;
  st.ambiguous_subject_fraction = distracting ? static_cast<double>(ambiguous) / static_cast<double>(distracting) : 0.0;
  return st;
}

}  // namespace safire
