#include "safire/run_config.h"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace safire {

namespace {

std::vector<std::string> split_list(const std::string& key, const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    std::string item = text.substr(start, end - start);
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    item = a == std::string::npos ? "" : item.substr(a, b - a + 1);
    if (item.empty()) throw ConfigError(key, "empty list element in '" + text + "'");
    out.push_back(item);
    start = end + 1;
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ConfigError(key, "not a valid number: '" + text + "'");
  return v;
}

template <class T>
std::vector<T> number_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split_list(key, text)) out.push_back(parse_number<T>(key, item));
  return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, std::string>)
      out += xs[i];
    else if constexpr (std::is_floating_point_v<T>)
      out += format_double(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

}  // namespace

RunConfig::RunConfig() {
  model.vocab_size = vocabulary().size();
  model.vocab_hash = vocabulary_hash();
  ablation_variants = default_variants();
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (gen.small_extent == 0) throw ConfigError("small_extent", "must be >= 1");
  if (gen.large_extent < gen.small_extent) throw ConfigError("large_extent", "must be >= small_extent");
  if (gen.large_extent > gen.height || gen.large_extent > gen.width)
    throw ConfigError("large_extent", "objects larger than the canvas");
  if (!(gen.distractor_mean >= 0.0)) throw ConfigError("distractor_mean", "must be >= 0");
  if (gen.extra_max < gen.extra_min) throw ConfigError("extra_max", "must be >= extra_min");
  if (!(gen.margin >= 0.0)) throw ConfigError("margin", "must be >= 0");
  if (gen.placement_attempts == 0) throw ConfigError("placement_attempts", "must be >= 1");
  if (gen.sample_attempts == 0) throw ConfigError("sample_attempts", "must be >= 1");
  double mix_total = 0.0;
  for (double m : gen.mode_mix) {
    if (!(m >= 0.0)) throw ConfigError("mode_mix", "weights must be >= 0");
    mix_total += m;
  }
  if (!(mix_total > 0.0)) throw ConfigError("mode_mix", "weights must not all be zero");
  gen.validate();
  if (train_size == 0) throw ConfigError("train_size", "must be positive");
  if (test_size == 0) throw ConfigError("test_size", "must be positive");
  if (ablation_seeds.size() < 3) throw ConfigError("ablation_seeds", "at least 3 seeds required");
  for (const auto& v : ablation_variants) {
    try {
      Arrangement::parse(v);
    } catch (const std::exception& e) {
      throw ConfigError("ablation_variants", e.what());
    }
  }
  for (std::size_t s : bench_sides)
    for (std::size_t w : bench_windows)
      if (w == 0 || s % w != 0)
        throw ConfigError("bench_sides", "side " + std::to_string(s) + " not divisible by window " + std::to_string(w));
  if (bench_sides.size() < 2) throw ConfigError("bench_sides", "need at least 2 sizes for the fit");
  if (bench_text_length == 0) throw ConfigError("bench_text_length", "must be positive");
  if (bench_channels == 0) throw ConfigError("bench_channels", "must be positive");
}

KeyValues RunConfig::to_kv() const {
  KeyValues kv;
  model.write(kv);
  train.write(kv);
  kv["distractor_mean"] = format_double(gen.distractor_mean);
  kv["extra_min"] = std::to_string(gen.extra_min);
  kv["extra_max"] = std::to_string(gen.extra_max);
  kv["small_extent"] = std::to_string(gen.small_extent);
  kv["large_extent"] = std::to_string(gen.large_extent);
  kv["gap"] = std::to_string(gen.gap);
  kv["margin"] = format_double(gen.margin);
  kv["placement_attempts"] = std::to_string(gen.placement_attempts);
  kv["sample_attempts"] = std::to_string(gen.sample_attempts);
  kv["mode_mix"] = join(std::vector<double>(gen.mode_mix.begin(), gen.mode_mix.end()));
  kv["data_seed"] = std::to_string(data_seed);
  kv["train_size"] = std::to_string(train_size);
  kv["val_size"] = std::to_string(val_size);
  kv["test_size"] = std::to_string(test_size);
  kv["ablation_variants"] = join(ablation_variants);
  kv["ablation_seeds"] = join(ablation_seeds);
  kv["ablation_train_size"] = std::to_string(ablation_train_size);
  kv["ablation_test_size"] = std::to_string(ablation_test_size);
  kv["ablation_epochs"] = std::to_string(ablation_epochs);
  kv["bench_windows"] = join(bench_windows);
  kv["bench_sides"] = join(bench_sides);
  kv["bench_text_length"] = std::to_string(bench_text_length);
  kv["bench_channels"] = std::to_string(bench_channels);
  return kv;
}

std::string RunConfig::serialize() const { return serialize_kv(to_kv()); }

RunConfig RunConfig::parse(std::string_view text, std::string_view source) {
  KvReader r(parse_kv(text, source));
  RunConfig c;
  c.model = ModelConfig::read(r);
  if (c.model.vocab_size == 0) c.model.vocab_size = vocabulary().size();
  if (c.model.vocab_hash == 0) c.model.vocab_hash = vocabulary_hash();
  c.train = TrainConfig::read(r);
  c.gen.height = c.model.image_height;
  c.gen.width = c.model.image_width;
  c.gen.distractor_mean = r.get_double("distractor_mean", c.gen.distractor_mean);
  c.gen.extra_min = r.get_size("extra_min", c.gen.extra_min);
  c.gen.extra_max = r.get_size("extra_max", c.gen.extra_max);
  c.gen.small_extent = r.get_size("small_extent", c.gen.small_extent);
  c.gen.large_extent = r.get_size("large_extent", c.gen.large_extent);
  c.gen.gap = r.get_size("gap", c.gen.gap);
  c.gen.margin = r.get_double("margin", c.gen.margin);
  c.gen.placement_attempts = r.get_size("placement_attempts", c.gen.placement_attempts);
  c.gen.sample_attempts = r.get_size("sample_attempts", c.gen.sample_attempts);
  {
    const std::string fallback = join(std::vector<double>(c.gen.mode_mix.begin(), c.gen.mode_mix.end()));
    const auto mix = number_list<double>("mode_mix", r.get_string("mode_mix", fallback));
    if (mix.size() != 3) throw ConfigError("mode_mix", "expected 3 comma-separated weights");
    for (std::size_t i = 0; i < 3; ++i) c.gen.mode_mix[i] = mix[i];
  }
  c.data_seed = r.get_u64("data_seed", c.data_seed);
  c.train_size = r.get_size("train_size", c.train_size);
  c.val_size = r.get_size("val_size", c.val_size);
  c.test_size = r.get_size("test_size", c.test_size);
  c.ablation_variants = split_list("ablation_variants", r.get_string("ablation_variants", join(c.ablation_variants)));
  c.ablation_seeds =
      number_list<std::uint64_t>("ablation_seeds", r.get_string("ablation_seeds", join(c.ablation_seeds)));
  c.ablation_train_size = r.get_size("ablation_train_size", c.ablation_train_size);
  c.ablation_test_size = r.get_size("ablation_test_size", c.ablation_test_size);
  c.ablation_epochs = r.get_size("ablation_epochs", c.ablation_epochs);
  c.bench_windows = number_list<std::size_t>("bench_windows", r.get_string("bench_windows", join(c.bench_windows)));
  c.bench_sides = number_list<std::size_t>("bench_sides", r.get_string("bench_sides", join(c.bench_sides)));
  c.bench_text_length = r.get_size("bench_text_length", c.bench_text_length);
  c.bench_channels = r.get_size("bench_channels", c.bench_channels);
  r.finish();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(serialize())));
  return buf;
}

std::size_t RunConfig::split_size(const std::string& split) const {
  if (split == "train") return train_size;
  if (split == "val") return val_size;
  if (split == "test") return test_size;
  throw ConfigError("split", "unknown split '" + split + "' (expected train, val or test)");
}

}  // namespace safire
