#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "app.hpp"
#include "transiam/errors.hpp"
#include "transiam/parallel.hpp"
#include "util.hpp"

namespace transiam::app {

namespace {

// Exclusive flock on <dir>/.lock for the life of a command.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create " + dir.string() + ": " + ec.message());
    const auto file = dir / ".lock";
    fd_ = ::open(file.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw ConfigError("cannot open " + file.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw ConfigError(dir.string() + " is in use by another transiam command");
    }
  }
  ~RunLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

void log_header(const std::string& command) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S", std::localtime(&now));
  std::fprintf(stderr, "[%s] transiam %s, %d thread(s)\n", stamp, command.c_str(), thread_count());
}

std::map<std::string, std::string> parse_sets(const std::vector<std::string>& sets) {
  std::map<std::string, std::string> kv;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return kv;
}

// Flags echoed under cli.*; merge_config drops them when the file is reused.
void echo(const fs::path& file, std::map<std::string, std::string> keys,
          const std::map<std::string, std::string>& flags) {
  for (const auto& [k, v] : flags) keys[kFlagPrefix + k] = v;
  save_config(file, keys);
}

void write_report(const fs::path& csv_path, const MetricReport& report) {
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  std::ofstream csv(csv_path, std::ios::binary);
  report.write_csv(csv);
  auto table_path = csv_path;
  table_path += ".txt";
  std::ofstream table(table_path, std::ios::binary);
  for (const auto& n : report.notes) table << "# " << n << '\n';
  report.write_table(table);
  if (!csv || !table) throw ConfigError("cannot write report " + csv_path.string());
}

void require_multiple(const ModelConfig& cfg, std::int64_t height, std::int64_t width, const std::string& what) {
  const auto m = cfg.required_multiple();
  if (height % m || width % m) {
    throw DimensionError(what + " is " + std::to_string(height) + "x" + std::to_string(width) +
                         "; height and width must be multiples of " + std::to_string(m));
  }
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  fs::path out;
  std::int64_t count = 1;
  std::string size = "16x64x64";
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
  const auto size = parse_extents(a.size);
  if (a.count < 0) throw ConfigError("--count must be >= 0");
  RunLock lock(a.out);
  log_header("synth");
  const auto entries = synth_dataset(a.out, a.count, size, a.seed);
  echo(a.out / "command.cfg", {},
       {{"command", "synth"}, {"count", std::to_string(a.count)}, {"size", to_string(size)},
        {"seed", std::to_string(a.seed)}});
  std::printf("wrote %zu volume(s) of %s to %s\n", entries.size(), to_string(size).c_str(), a.out.c_str());
  return kOk;
}

struct TrainArgs {
  std::optional<fs::path> config;
  fs::path data, out;
  std::vector<std::string> sets;
  std::optional<fs::path> resume;
};

int cmd_train(const TrainArgs& a) {
  DataOptions data;
  TrainConfig cfg;
  cfg.apply_keys(data.take_keys(merge_config(a.config, parse_sets(a.sets))));
  cfg.validate();
  data.validate();
  if (a.resume && !fs::is_directory(*a.resume)) throw ConfigError("checkpoint " + a.resume->string() + " not found");

  const auto volumes = load_dataset(a.data);
  if (volumes.empty()) throw ConfigError("data directory " + a.data.string() + " lists no volumes");
  const auto slices = training_slices(volumes, data, cfg.seed);
  for (const auto& s : slices) require_multiple(cfg.model, s.height, s.width, "training slice");

  RunLock lock(a.out);
  log_header("train");
  auto keys = cfg.to_keys();
  keys.merge(data.to_keys());
  std::map<std::string, std::string> flags{{"command", "train"}, {"data", a.data.string()}};
  if (a.resume) flags["resume"] = a.resume->string();
  echo(a.out / "command.cfg", keys, flags);

  Trainer trainer(cfg, slices);
  if (a.resume) trainer.resume(*a.resume);
  std::printf("training on %zu slices, %lld parameters\n", slices.size(),
              static_cast<long long>(param_count(trainer.model())));
  const auto records = trainer.run(a.out, [](const StepRecord& r) {
    std::printf("step %lld epoch %lld L_joint %.6f L_CE %.6f L_dice %.6f batch dice %.2f\n",
                static_cast<long long>(r.step), static_cast<long long>(r.epoch), r.joint, r.ce, r.dice, r.batch_dice);
    std::fflush(stdout);
  });
  std::printf("%zu step(s), %lld epoch(s) complete%s\n", records.size(), static_cast<long long>(trainer.epochs_done()),
              trainer.stopped_early() ? ", stopped at the target dice" : "");
  return kOk;
}

struct EvalArgs {
  fs::path ckpt_dir, data, report;
  std::int64_t last = 5;
};

int cmd_eval(const EvalArgs& a) {
  log_header("eval");
  const auto entries = read_index(a.data);
  std::vector<std::string> notes;
  const auto ckpts = pick_checkpoints(a.ckpt_dir, a.last, notes);
  for (const auto& n : notes) {
    if (n.rfind("warning", 0) == 0) std::fprintf(stderr, "%s\n", n.c_str());
  }
  const auto models = load_models(ckpts);
  const auto volumes = load_dataset(a.data);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    require_multiple(models.front().cfg, volumes[i].size.height, volumes[i].size.width, "volume " + entries[i].file);
    ids.push_back(entries[i].file);
  }
  auto report = evaluate_volumes(pointers(models), volumes, ids);
  report.notes = notes;
  write_report(a.report, report);
  report.write_table(std::cout);
  return kOk;
}

struct PredictArgs {
  fs::path ckpt_dir, volume, out;
  std::int64_t last = 5;
};

int cmd_predict(const PredictArgs& a) {
  std::vector<std::string> notes;
  const auto ckpts = pick_checkpoints(a.ckpt_dir, a.last, notes);
  const auto models = load_models(ckpts);
  auto v = load_volume(a.volume);
  require_multiple(models.front().cfg, v.size.height, v.size.width, "volume");

  RunLock lock(a.out);
  log_header("predict");
  for (const auto& n : notes) std::fprintf(stderr, "%s\n", n.c_str());
  echo(a.out / "command.cfg", {},
       {{"command", "predict"}, {"ckpt_dir", a.ckpt_dir.string()}, {"volume", a.volume.string()},
        {"last", std::to_string(a.last)}});

  v.labels = predict_volume(pointers(models), v);
  v.meta["prediction_of"] = a.volume.filename().string();
  save_volume(a.out / "prediction.tsv1", v);

  // overlays on Flair, where edema is brightest
  const auto wt = whole_tumor(v.labels);
  const auto plane = static_cast<std::size_t>(v.size.height * v.size.width);
  std::int64_t painted = 0;
  for (std::int64_t z = 0; z < v.size.depth; ++z) {
    char name[48];
    std::snprintf(name, sizeof name, "overlay_z%03lld.ppm", static_cast<long long>(z));
    const auto off = static_cast<std::size_t>(z) * plane;
    const std::span<const float> image(v.modalities[kFlair].data() + off, plane);
    const std::span<const std::uint8_t> mask(wt.data() + off, plane);
    write_overlay_ppm(a.out / name, image, mask, v.size.height, v.size.width);
    for (auto m : mask) painted += m;
  }
  std::printf("%s: %lld slice overlays, %lld whole-tumor voxels\n", (a.out / "prediction.tsv1").c_str(),
              static_cast<long long>(v.size.depth), static_cast<long long>(painted));
  return kOk;
}

struct AblateArgs {
  std::string grid;
  std::int64_t seeds = 1;
  std::uint64_t seed = 0;
  fs::path out;
  std::optional<fs::path> config;
  std::vector<std::string> sets;
};

int cmd_ablate(const AblateArgs& a) {
  const auto grid = parse_grid(a.grid);
  if (a.seeds < 1) throw ConfigError("--seeds must be >= 1");
  auto desk = desk_config();
  desk.apply_keys(merge_config(a.config, parse_sets(a.sets)));
  desk.validate();
  std::vector<std::uint64_t> seeds;
  for (std::int64_t i = 0; i < a.seeds; ++i) seeds.push_back(a.seed + static_cast<std::uint64_t>(i));

  RunLock lock(a.out);
  log_header("ablate");
  echo(a.out / ("ablation_" + to_string(grid) + ".cfg"), desk.to_keys(),
       {{"command", "ablate"}, {"grid", to_string(grid)}, {"seeds", std::to_string(a.seeds)},
        {"seed", std::to_string(a.seed)}});
  const auto table = run_ablation(grid, desk, seeds, a.out, [](const VariantResult& r) {
    std::printf("%-40s seed %llu: %lld steps, dice %.2f\n", r.label.c_str(), static_cast<unsigned long long>(r.seed),
                static_cast<long long>(r.steps), r.mean.dice);
    std::fflush(stdout);
  });
  const auto stem = a.out / ("ablation_" + to_string(grid));
  {
    std::ofstream csv(fs::path(stem) += ".csv", std::ios::binary);
    table.write_csv(csv);
    std::ofstream txt(fs::path(stem) += ".txt", std::ios::binary);
    table.write_table(txt);
  }
  table.write_table(std::cout);
  return kOk;
}

struct GradcheckArgs {
  std::string scope = "all";
  double threshold = 1e-5;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  if (!(a.threshold > 0)) throw ConfigError("--threshold must be positive");
  std::vector<Scope> scopes;
  if (a.scope == "all") {
    scopes = {Scope::primitives, Scope::blocks, Scope::model};
  } else {
    scopes = {parse_scope(a.scope)};
  }
  log_header("gradcheck");
  int failed = 0;
  double worst = 0;
  for (auto s : scopes) {
    gradcheck_suite(s, [&](const SuiteResult& r) {
      const bool ok = r.max_rel_error <= a.threshold;
      failed += !ok;
      worst = std::max(worst, r.max_rel_error);
      std::printf("%s %-12s %-50s %6lld probes  worst %.3g at %s (%.2f s)\n", ok ? "PASS" : "FAIL",
                  to_string(s).c_str(), r.name.c_str(), static_cast<long long>(r.probes), r.max_rel_error,
                  r.worst.c_str(), r.seconds);
      std::fflush(stdout);
    });
  }
  std::printf("%d failure(s); worst relative error %.3g, threshold %.3g\n", failed, worst, a.threshold);
  return failed ? kNumerical : kOk;
}

struct ParamsArgs {
  std::optional<fs::path> config;
  std::vector<std::string> sets;
};

int cmd_params(const ParamsArgs& a) {
  ModelConfig cfg;
  const auto unknown = cfg.apply_keys(merge_config(a.config, parse_sets(a.sets)));
  if (!unknown.empty()) throw ConfigError("unknown config key '" + unknown.front() + "'");
  cfg.validate();
  write_param_report(std::cout, cfg);
  return kOk;
}

}  // namespace

void write_param_report(std::ostream& out, const ModelConfig& cfg) {
  const auto m = build_model<float>(cfg, 0);
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> family;  // tensors, scalars
  for (const auto& p : m.store.params()) {
    auto& f = family[p.name.substr(0, p.name.find('.'))];
    f.first += 1;
    f.second += p.tensor.numel();
  }
  const auto total = param_count(m);
  char line[160];
  out << "parameter tensors: " << m.store.params().size() << '\n';
  for (const auto& [name, f] : family) {
    std::snprintf(line, sizeof line, "  %-8s %4lld tensors %10lld\n", name.c_str(), static_cast<long long>(f.first),
                  static_cast<long long>(f.second));
    out << line;
  }
  std::snprintf(line, sizeof line, "total parameters: %lld (%.2fM)\n", static_cast<long long>(total), total / 1e6);
  out << line;
  std::snprintf(line, sizeof line, "published reference: %.2fM (difference %+.2fM, %+.1f%%)\n", kReferenceParamsM,
                total / 1e6 - kReferenceParamsM, 100.0 * (total / 1e6 - kReferenceParamsM) / kReferenceParamsM);
  out << line;
  out << "The reference is not a target. Stage widths, ICMT block count, head count and the decoder\n"
         "layout are not published in enough detail to rebuild that network exactly; this build uses\n"
         "stages ";
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) out << (i ? "/" : "") << cfg.stages[i];
  out << ", " << cfg.icmt_blocks_per_stage << " ICMT block(s) per transformer stage, " << cfg.heads
      << " heads, and a light decoder\n"
         "(2x2 transposed convolution, additive skip, group norm) whose size is the main unknown.\n";
}

int run_cli(int argc, char** argv) {
  CLI::App cli{"Dual-path CNN + transformer segmentation on synthetic multimodal phantoms"};
  cli.require_subcommand(1);
  int threads = 0;
  cli.add_option("--threads", threads, "Worker threads (default: TRANSIAM_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);

  SynthArgs synth;
  auto* s = cli.add_subcommand("synth", "Write phantom volumes and an index");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--count", synth.count, "Number of volumes")->capture_default_str();
  s->add_option("--size", synth.size, "Extents DxHxW")->capture_default_str();
  s->add_option("--seed", synth.seed, "Base seed")->capture_default_str();

  TrainArgs train;
  auto* t = cli.add_subcommand("train", "Train a model");
  t->add_option("--config", train.config, "key = value config file");
  t->add_option("--data", train.data, "Dataset directory")->required();
  t->add_option("--out", train.out, "Run directory")->required();
  t->add_option("--set", train.sets, "Override a config key (key=value)");
  t->add_option("--resume", train.resume, "Checkpoint directory to continue from");

  EvalArgs eval;
  auto* e = cli.add_subcommand("eval", "Evaluate averaged checkpoints");
  e->add_option("--ckpt-dir", eval.ckpt_dir, "Run directory holding ckpt_epoch_<n>")->required();
  e->add_option("--data", eval.data, "Dataset directory")->required();
  e->add_option("--last", eval.last, "Checkpoints averaged")->capture_default_str();
  e->add_option("--report", eval.report, "CSV report path (a .txt table goes next to it)")->required();

  PredictArgs predict;
  auto* p = cli.add_subcommand("predict", "Segment one volume");
  p->add_option("--ckpt-dir", predict.ckpt_dir, "Run directory holding ckpt_epoch_<n>")->required();
  p->add_option("--volume", predict.volume, "Volume file")->required();
  p->add_option("--out", predict.out, "Output directory")->required();
  p->add_option("--last", predict.last, "Checkpoints averaged")->capture_default_str();

  AblateArgs ablate;
  auto* ab = cli.add_subcommand("ablate", "Train and compare the variants of one grid");
  ab->add_option("--grid", ablate.grid, "fusion, icmt or paths")->required();
  ab->add_option("--seeds", ablate.seeds, "Number of seeds")->capture_default_str();
  ab->add_option("--seed", ablate.seed, "First seed")->capture_default_str();
  ab->add_option("--out", ablate.out, "Output directory")->required();
  ab->add_option("--config", ablate.config, "key = value overrides of the desk config");
  ab->add_option("--set", ablate.sets, "Override a config key (key=value)");

  GradcheckArgs gc;
  auto* g = cli.add_subcommand("gradcheck", "Finite-difference gradient suites in 64-bit");
  g->add_option("--scope", gc.scope, "primitives, blocks, model or all")->capture_default_str();
  g->add_option("--threshold", gc.threshold, "Largest accepted relative error")->capture_default_str();

  ParamsArgs params;
  auto* pa = cli.add_subcommand("params", "Report parameter counts");
  pa->add_option("--config", params.config, "key = value model config");
  pa->add_option("--set", params.sets, "Override a config key (key=value)");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = cli.exit(err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (threads > 0) set_thread_count(threads);
    if (s->parsed()) return cmd_synth(synth);
    if (t->parsed()) return cmd_train(train);
    if (e->parsed()) return cmd_eval(eval);
    if (p->parsed()) return cmd_predict(predict);
    if (ab->parsed()) return cmd_ablate(ablate);
    if (g->parsed()) return cmd_gradcheck(gc);
    if (pa->parsed()) return cmd_params(params);
  } catch (const NumericalError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kNumerical;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kValidation;
  }
  return kValidation;
}

}  // namespace transiam::app
