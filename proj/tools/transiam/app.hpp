#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "transiam/data.hpp"
#include "transiam/metrics.hpp"
#include "transiam/training.hpp"

namespace transiam::app {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kValidation = 1, kNumerical = 2 };

// ---------------------------------------------------------------------------
// datasets: a directory of volume files plus index.tsv ("file<TAB>seed" rows
// under a header line)

struct DatasetEntry {
  std::string file;
  std::uint64_t seed = 0;
};

inline constexpr const char* kIndexFile = "index.tsv";

/// Volume i is generate_phantom(derive_seed(seed, "data", i), size).
std::vector<DatasetEntry> synth_dataset(const fs::path& out, std::int64_t count, Extents3 size,
                                        std::uint64_t seed, const PhantomConfig& phantom = {});
std::vector<DatasetEntry> read_index(const fs::path& dir);
std::vector<VolumeSample> load_dataset(const fs::path& dir);

/// Which slices of a dataset are trained on. Config keys carry a "data." prefix.
struct DataOptions {
  SliceSelection selection;
  std::int64_t max_slices = 0;  // 0 keeps all

  void validate() const;
  std::map<std::string, std::string> to_keys() const;
  /// Consumes the data.* keys of `kv` and returns the rest.
  std::map<std::string, std::string> take_keys(const std::map<std::string, std::string>& kv);
};

std::vector<Slice> training_slices(const std::vector<VolumeSample>& volumes, const DataOptions& opt,
                                   std::uint64_t seed);

/// Keys under this prefix are echoes of command-line flags and are ignored
/// when a config file is read back.
inline constexpr const char* kFlagPrefix = "cli.";

/// File values, then overrides; cli.* keys dropped.
std::map<std::string, std::string> merge_config(const std::optional<fs::path>& file,
                                                const std::map<std::string, std::string>& overrides);

// ---------------------------------------------------------------------------
// evaluation

/// The last `last` checkpoints under `dir` (all of them when fewer exist, with
/// a note saying so in `notes`). Throws ConfigError when there are none.
std::vector<fs::path> pick_checkpoints(const fs::path& dir, std::int64_t last, std::vector<std::string>& notes);

std::vector<Model<float>> load_models(const std::vector<fs::path>& checkpoints);
std::vector<const Model<float>*> pointers(const std::vector<Model<float>>& models);

/// One row per volume, named by `ids`.
MetricReport evaluate_volumes(const std::vector<const Model<float>*>& models, const std::vector<VolumeSample>& volumes,
                              const std::vector<std::string>& ids);

/// One row per slice ("slice_<i>"), each scored as a 1xHxW volume.
MetricReport evaluate_slices(const std::vector<const Model<float>*>& models, const std::vector<Slice>& slices);

// ---------------------------------------------------------------------------
// ablation

enum class Grid { fusion, icmt, paths };
Grid parse_grid(const std::string& name);
std::string to_string(Grid g);

struct Variant {
  std::string label;  // row label
  VariantOverrides overrides;
  bool conv_projection = true, conv_ffn = true;  // icmt grid columns
};

/// Rows in table order.
std::vector<Variant> grid_variants(Grid g);

/// Scaled-down experiment: phantoms of `size`, `train_slices` lesion slices
/// for training and `val_slices` held-out ones from separately seeded volumes.
struct DeskConfig {
  TrainConfig train;
  Extents3 size{16, 32, 32};
  std::int64_t train_slices = 200;
  std::int64_t val_slices = 50;
  std::int64_t average_last = 5;  // checkpoints averaged at evaluation

  void validate() const;
  std::map<std::string, std::string> to_keys() const;
  void apply_keys(const std::map<std::string, std::string>& kv);
};

DeskConfig desk_config();

struct DeskData {
  std::vector<Slice> train, val;
};

/// Train volumes use derive_seed(seed, "train", i), held-out ones
/// derive_seed(seed, "val", i).
DeskData desk_data(const DeskConfig& cfg, std::uint64_t seed);

struct VariantResult {
  std::string label;
  std::uint64_t seed = 0;
  std::int64_t params = 0;
  std::int64_t steps = 0;
  MetricRow mean;
  MetricReport report;
};

/// Trains one variant on `data`, keeping checkpoints under `run_dir`, and
/// evaluates the average of the last checkpoints on the held-out slices.
VariantResult run_variant(const DeskConfig& cfg, const Variant& v, const DeskData& data, std::uint64_t seed,
                          const fs::path& run_dir);

struct AblationRow {
  Variant variant;
  std::int64_t params = 0;
  MetricRow mean;  // over seeds
  std::vector<double> seed_dice;
};

struct AblationTable {
  Grid grid = Grid::fusion;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;

  void write_csv(std::ostream& out) const;
  void write_table(std::ostream& out) const;
};

AblationTable run_ablation(Grid g, const DeskConfig& cfg, const std::vector<std::uint64_t>& seeds, const fs::path& out,
                           const std::function<void(const VariantResult&)>& on_variant = {});

// ---------------------------------------------------------------------------
// finite-difference suites

enum class Scope { primitives, blocks, model };
Scope parse_scope(const std::string& name);
std::string to_string(Scope s);

struct SuiteResult {
  std::string name;
  std::int64_t probes = 0;
  double max_rel_error = 0.0;
  std::string worst;
  double seconds = 0.0;
  std::vector<std::pair<std::string, double>> per_input;
};

/// 64-bit central differences. The model scope probes every registered
/// parameter tensor of the default model on 1x2x16x16 inputs.
std::vector<SuiteResult> gradcheck_suite(Scope s, const std::function<void(const SuiteResult&)>& on_case = {});

// ---------------------------------------------------------------------------
// parameter report

inline constexpr double kReferenceParamsM = 7.98;
void write_param_report(std::ostream& out, const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// command line

int run_cli(int argc, char** argv);

}  // namespace transiam::app
