// safire: corpus generation, training, evaluation, ablation, benchmark and
// mask dumps over one flat config file.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "safire/checkpoint.h"
#include "safire/dataset.h"
#include "safire/harness.h"
#include "safire/run_config.h"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace safire;

namespace {

constexpr int kValidationError = 1;
constexpr int kRuntimeError = 2;

/// Raised for bad inputs that are not config keys (missing checkpoint, bad flag value).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string split = "test";
};

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

RunConfig load_config(const Options& o) {
  RunConfig c = RunConfig::load(o.config);
  if (o.seed) c.train.seed = *o.seed;
  return c;
}

fs::path run_dir(const Options& o, const RunConfig& c, const std::string& command) {
  const fs::path dir = o.out.empty() ? fs::path("runs") / (command + "-" + c.hash() + "-" + timestamp()) : fs::path(o.out);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<Sample> load_split(const RunConfig& c, const std::string& split) {
  if (fs::exists(fs::path(split) / "meta.jsonl")) return read_split(split);
  return build_split(split, c.split_size(split), c.data_seed, c.gen);
}

Model load_model(const std::string& path) {
  if (path.empty()) throw UsageError("--checkpoint is required");
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  const auto ckpt = read_checkpoint(path);
  const RunConfig stored = RunConfig::parse(ckpt.config_text, path);
  Model model = init_model(stored.model, stored.train.seed);
  load_params(ckpt, model.store);
  return model;
}

void print_stats(const std::string& name, const CorpusStats& s) {
  std::printf("%-5s samples %zu  simple %zu  object-distracting %zu  category-implicit %zu\n", name.c_str(),
              s.samples, s.mode_counts[0], s.mode_counts[1], s.mode_counts[2]);
  std::printf("      mean distractors %.4f  mean tokens %.4f  ambiguous subjects %.4f\n", s.mean_distractors,
              s.mean_tokens, s.ambiguous_subject_fraction);
}

json report_json(const EvalReport& r, const std::string& split) {
  EpochRecord rec;
  rec.split = split;
  rec.report = r;
  json j = json::parse(epoch_json(rec));
  j.erase("epoch");
  j.erase("lr");
  j.erase("loss");
  j["ambiguous"] = {{"miou", r.ambiguous.miou}, {"oiou", r.ambiguous.oiou}, {"count", r.ambiguous.count}};
  return j;
}

int cmd_gen(const Options& o) {
  const RunConfig c = load_config(o);
  const fs::path dir = run_dir(o, c, "gen");
  write_text(dir / "config.txt", c.serialize());
  const std::pair<const char*, std::size_t> splits[] = {{"train", c.train_size}, {"val", c.val_size}, {"test", c.test_size}};
  for (const auto& [name, size] : splits) {
    if (size == 0) continue;
    const auto samples = build_split(name, size, c.data_seed, c.gen);
    write_split(dir / name, samples);
    print_stats(name, corpus_stats(samples));
  }
  std::printf("wrote %s\n", dir.string().c_str());
  return 0;
}

int cmd_train(const Options& o) {
  const RunConfig c = load_config(o);
  const auto train_set = build_split("train", c.train_size, c.data_seed, c.gen);
  const auto val_set = build_split("val", c.val_size, c.data_seed, c.gen);
  const fs::path dir = run_dir(o, c, "train");
  write_text(dir / "config.txt", c.serialize());

  Model model = init_model(c.model, c.train.seed);
  std::ofstream log(dir / "metrics.jsonl", std::ios::binary);
  const auto t0 = std::chrono::steady_clock::now();
  train(model, train_set, val_set, c.train, [&](const EpochRecord& r) {
    const std::string line = epoch_json(r);
    log << line << '\n';
    log.flush();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("epoch %zu  loss %.5f  val miou %.4f  oiou %.4f  lr %.3g  (%.0fs)\n", r.epoch, r.train_loss,
                r.report.overall.miou, r.report.overall.oiou, r.lr, secs);
    std::fflush(stdout);
  });
  save_checkpoint(dir / "checkpoint.bin", c.serialize(), model.store);
  std::printf("wrote %s\n", dir.string().c_str());
  return 0;
}

int cmd_eval(const Options& o) {
  const RunConfig c = load_config(o);
  const Model model = load_model(o.checkpoint);
  const auto samples = load_split(c, o.split);
  const auto report = evaluate(model, samples);
  const fs::path dir = run_dir(o, c, "eval");
  const std::string line = report_json(report, o.split).dump();
  write_text(dir / "eval.jsonl", line + "\n");
  std::printf("%s\n", line.c_str());
  return 0;
}

int cmd_ablate(const Options& o) {
  const RunConfig c = load_config(o);
  const std::size_t n_train = c.ablation_train_size ? c.ablation_train_size : c.train_size;
  const std::size_t n_test = c.ablation_test_size ? c.ablation_test_size : c.test_size;
  TrainConfig tc = c.train;
  if (c.ablation_epochs) tc.epochs = c.ablation_epochs;
  const auto train_set = build_split("train", n_train, c.data_seed, c.gen);
  const auto test_set = build_split("test", n_test, c.data_seed, c.gen);
  const fs::path dir = run_dir(o, c, "ablate");
  write_text(dir / "config.txt", c.serialize());

  const auto result = ablate_arrangement(c.model, tc, train_set, test_set, c.ablation_variants, c.ablation_seeds,
                                         [](const AblationRun& r) {
                                           std::printf("%-9s seed %llu  ambiguous oiou %.4f  simple oiou %.4f\n",
                                                       r.variant.c_str(), static_cast<unsigned long long>(r.seed),
                                                       r.ambiguous.oiou, r.simple.oiou);
                                           std::fflush(stdout);
                                         });
  write_text(dir / "ablation.csv", ablation_csv(result));
  write_text(dir / "ablation_runs.csv", ablation_runs_csv(result));
  std::printf("%s", ablation_csv(result).c_str());
  std::printf("wrote %s\n", dir.string().c_str());
  return 0;
}

int cmd_bench(const Options& o) {
  const RunConfig c = load_config(o);
  const fs::path dir = run_dir(o, c, "bench");
  const auto result = bench_complexity(c.bench_windows, c.bench_sides, c.bench_text_length, c.bench_channels,
                                       c.train.seed);
  write_text(dir / "bench.csv", bench_csv(result));
  write_text(dir / "bench.dat", bench_gnuplot(result));
  std::ostringstream fits;
  fits << "w,analytic,measured,r_squared\n";
  for (const auto& f : result.fits) {
    fits << f.window << ',' << format_double(f.analytic) << ',' << format_double(f.measured) << ','
         << format_double(f.r_squared) << '\n';
    std::printf("w=%zu L=%zu  overhead analytic %.6f measured %.6f  R^2 %.8f\n", f.window, c.bench_text_length,
                f.analytic, f.measured, f.r_squared);
  }
  write_text(dir / "fits.csv", fits.str());
  std::printf("wrote %s\n", dir.string().c_str());
  return 0;
}

int cmd_masks(const Options& o) {
  const RunConfig c = load_config(o);
  const Model model = load_model(o.checkpoint);
  const auto samples = load_split(c, o.split);
  const auto report = evaluate(model, samples, true);
  const fs::path dir = run_dir(o, c, "masks");
  fs::create_directories(dir / "masks");
  fs::create_directories(dir / "panels");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& r = samples[i].raster;
    const auto& pred = report.predictions[i];
    char stem[16];
    std::snprintf(stem, sizeof stem, "%06zu", samples[i].index);

    Pnm mask{r.width, r.height, 1, {}};
    for (auto v : pred) mask.data.push_back(v ? 255 : 0);
    write_pnm(dir / "masks" / (std::string(stem) + ".pgm"), mask);

    // image | gt | prediction with one white separator column between panels
    const std::size_t pw = 3 * r.width + 2;
    Pnm panel{pw, r.height, 3, std::vector<std::uint8_t>(pw * r.height * 3, 255)};
    for (std::size_t y = 0; y < r.height; ++y) {
      for (std::size_t x = 0; x < r.width; ++x) {
        const std::size_t p = y * r.width + x;
        const std::uint8_t g = r.mask[p] ? 255 : 0;
        const std::uint8_t q = pred[p] ? 255 : 0;
        for (std::size_t ch = 0; ch < 3; ++ch) {
          panel.data[(y * pw + x) * 3 + ch] = r.rgb[p * 3 + ch];
          panel.data[(y * pw + r.width + 1 + x) * 3 + ch] = g;
          panel.data[(y * pw + 2 * r.width + 2 + x) * 3 + ch] = q;
        }
      }
    }
    write_pnm(dir / "panels" / (std::string(stem) + ".ppm"), panel);
  }
  std::printf("%s\n", report_json(report, o.split).dump().c_str());
  std::printf("wrote %zu masks to %s\n", samples.size(), dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"safire: synthetic referring segmentation toolkit"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "flat key = value config file")->required();
    sub->add_option("--out", o.out, "output directory (default runs/<command>-<hash>-<time>)");
    sub->add_option("--seed", o.seed, "override the training/init seed");
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint file");
    sub->add_option("--split", o.split, "split name (train, val, test) or a generated split directory");
  };
  const std::pair<const char*, const char*> commands[] = {
      {"gen", "generate train/val/test corpora and print statistics"},
      {"train", "train a model and write checkpoint.bin and metrics.jsonl"},
      {"eval", "evaluate a checkpoint on a split"},
      {"ablate", "compare token arrangements over several seeds"},
      {"bench", "count fixation scan cost against feature map size"},
      {"masks", "write predicted masks and image|gt|prediction panels"},
  };
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kValidationError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "gen") return cmd_gen(o);
    if (command == "train") return cmd_train(o);
    if (command == "eval") return cmd_eval(o);
    if (command == "ablate") return cmd_ablate(o);
    if (command == "bench") return cmd_bench(o);
    return cmd_masks(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kValidationError;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidationError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
}
