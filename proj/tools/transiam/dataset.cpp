#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "app.hpp"
#include "transiam/errors.hpp"
#include "transiam/rng.hpp"
#include "util.hpp"

namespace transiam::app {

std::vector<DatasetEntry> synth_dataset(const fs::path& out, std::int64_t count, Extents3 size, std::uint64_t seed,
                                        const PhantomConfig& phantom) {
  if (count < 0) throw ConfigError("count must be >= 0, got " + std::to_string(count));
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw ConfigError("cannot create output directory " + out.string());

  std::vector<DatasetEntry> entries;
  for (std::int64_t i = 0; i < count; ++i) {
    char name[48];
    std::snprintf(name, sizeof name, "case_%04lld.tsv1", static_cast<long long>(i));
    const auto s = derive_seed(seed, "data", static_cast<std::uint64_t>(i));
    auto v = generate_phantom(s, size, phantom);
    v.meta["case"] = name;
    save_volume(out / name, v);
    entries.push_back({name, s});
  }

  std::ofstream index(out / kIndexFile, std::ios::binary);
  if (!index) throw ConfigError("cannot write " + (out / kIndexFile).string());
  index << "file\tseed\n";
  for (const auto& e : entries) index << e.file << '\t' << e.seed << '\n';
  if (!index.flush()) throw ConfigError("cannot write " + (out / kIndexFile).string());
  return entries;
}

std::vector<DatasetEntry> read_index(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("data directory " + dir.string() + " not found");
  const auto file = dir / kIndexFile;
  std::ifstream in(file);
  if (!in) throw ConfigError("no " + std::string(kIndexFile) + " in " + dir.string());
  std::string line;
  if (!std::getline(in, line) || line != "file\tseed") {
    throw CorruptFileError(file.string() + ": expected header 'file<TAB>seed'");
  }
  std::vector<DatasetEntry> entries;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    DatasetEntry e;
    if (tab != std::string::npos) {
      e.file = line.substr(0, tab);
      const auto* first = line.data() + tab + 1;
      const auto* last = line.data() + line.size();
      auto [p, err] = std::from_chars(first, last, e.seed);
      if (err != std::errc{} || p != last) e.file.clear();
    }
    if (e.file.empty() || e.file.find('/') != std::string::npos) {
      throw CorruptFileError(file.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    entries.push_back(e);
  }
  return entries;
}

std::vector<VolumeSample> load_dataset(const fs::path& dir) {
  std::vector<VolumeSample> volumes;
  for (const auto& e : read_index(dir)) volumes.push_back(load_volume(dir / e.file));
  return volumes;
}

void DataOptions::validate() const {
  if (selection.min_foreground < 0) throw ConfigError("data.min_foreground must be >= 0");
  if (!(selection.background_quota >= 0.0)) throw ConfigError("data.background_quota must be >= 0");
  if (max_slices < 0) throw ConfigError("data.max_slices must be >= 0");
}

std::map<std::string, std::string> DataOptions::to_keys() const {
  return {{"data.min_foreground", std::to_string(selection.min_foreground)},
          {"data.background_quota", format_double(selection.background_quota)},
          {"data.max_slices", std::to_string(max_slices)}};
}

std::map<std::string, std::string> DataOptions::take_keys(const std::map<std::string, std::string>& kv) {
  std::map<std::string, std::string> rest;
  for (const auto& [k, v] : kv) {
    if (k == "data.min_foreground") {
      selection.min_foreground = parse_integer(k, v);
    } else if (k == "data.background_quota") {
      selection.background_quota = parse_real(k, v);
    } else if (k == "data.max_slices") {
      max_slices = parse_integer(k, v);
    } else if (k.rfind("data.", 0) == 0) {
      throw ConfigError("unknown config key '" + k + "'");
    } else {
      rest.emplace(k, v);
    }
  }
  return rest;
}

std::vector<Slice> training_slices(const std::vector<VolumeSample>& volumes, const DataOptions& opt,
                                   std::uint64_t seed) {
  auto slices = select_slices(volumes, opt.selection, derive_seed(seed, "select"));
  if (opt.max_slices > 0 && static_cast<std::int64_t>(slices.size()) > opt.max_slices) {
    slices.resize(static_cast<std::size_t>(opt.max_slices));
  }
  if (slices.empty()) throw ConfigError("no slices meet the selection");
  return slices;
}

std::map<std::string, std::string> merge_config(const std::optional<fs::path>& file,
                                                const std::map<std::string, std::string>& overrides) {
  std::map<std::string, std::string> kv;
  if (file) kv = load_config(*file);
  for (const auto& [k, v] : overrides) kv[k] = v;
  std::erase_if(kv, [](const auto& e) { return e.first.rfind(kFlagPrefix, 0) == 0; });
  return kv;
}

// ---------------------------------------------------------------------------
// evaluation

std::vector<fs::path> pick_checkpoints(const fs::path& dir, std::int64_t last, std::vector<std::string>& notes) {
  if (last < 1) throw ConfigError("--last must be >= 1");
  auto all = list_checkpoints(dir);
  if (all.empty()) throw ConfigError("no ckpt_epoch_<n> directories in " + dir.string());
  if (static_cast<std::int64_t>(all.size()) < last) {
    notes.push_back("warning: " + std::to_string(last) + " checkpoints requested, " + std::to_string(all.size()) +
                    " found; averaging all of them");
  } else {
    all.erase(all.begin(), all.end() - last);
  }
  std::string names;
  for (const auto& p : all) names += (names.empty() ? "" : " ") + p.filename().string();
  notes.push_back("checkpoints: " + names);
  return all;
}

std::vector<Model<float>> load_models(const std::vector<fs::path>& checkpoints) {
  std::vector<Model<float>> models;
  models.reserve(checkpoints.size());
  for (const auto& c : checkpoints) models.push_back(load_checkpoint_model(c));
  return models;
}

std::vector<const Model<float>*> pointers(const std::vector<Model<float>>& models) {
  std::vector<const Model<float>*> out;
  for (const auto& m : models) out.push_back(&m);
  return out;
}

MetricReport evaluate_volumes(const std::vector<const Model<float>*>& models, const std::vector<VolumeSample>& volumes,
                              const std::vector<std::string>& ids) {
  MetricReport report;
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    const auto pred = predict_volume(models, volumes[i]);
    report.rows.push_back(evaluate(pred, volumes[i].labels, volumes[i].size, ids.at(i)));
  }
  return report;
}

MetricReport evaluate_slices(const std::vector<const Model<float>*>& models, const std::vector<Slice>& slices) {
  MetricReport report;
  constexpr std::size_t kBatch = 8;
  for (std::size_t i0 = 0; i0 < slices.size(); i0 += kBatch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = i0; i < std::min(slices.size(), i0 + kBatch); ++i) idx.push_back(i);
    const auto b = make_batch(slices, idx);
    const auto pred = predict_averaged(models, b.input_a, b.input_b);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& s = slices[idx[j]];
      const auto n = static_cast<std::size_t>(s.pixels());
      const std::span<const std::uint8_t> p(pred.data() + j * n, n);
      report.rows.push_back(evaluate(p, s.labels, Extents3{1, s.height, s.width}, "slice_" + std::to_string(idx[j])));
    }
  }
  return report;
}

}  // namespace transiam::app
