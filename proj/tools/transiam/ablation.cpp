#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "app.hpp"
#include "transiam/errors.hpp"
#include "transiam/rng.hpp"
#include "util.hpp"

namespace transiam::app {

Grid parse_grid(const std::string& name) {
  if (name == "fusion") return Grid::fusion;
  if (name == "icmt") return Grid::icmt;
  if (name == "paths") return Grid::paths;
  throw ConfigError("unknown grid '" + name + "' (expected fusion, icmt or paths)");
}

std::string to_string(Grid g) {
  switch (g) {
    case Grid::fusion: return "fusion";
    case Grid::icmt: return "icmt";
    case Grid::paths: return "paths";
  }
  return "?";
}

std::vector<Variant> grid_variants(Grid g) {
  std::vector<Variant> rows;
  switch (g) {
    case Grid::fusion:
      for (auto [label, kind] : {std::pair{"Without", FuseKind::without}, std::pair{"Add", FuseKind::add},
                                 std::pair{"Concatenate", FuseKind::concat},
                                 std::pair{"Attention gate", FuseKind::attention_gate},
                                 std::pair{"TMM block", FuseKind::tmm}}) {
        Variant v;
        v.label = label;
        v.overrides.fusion = kind;
        rows.push_back(v);
      }
      break;
    case Grid::icmt:
      // raw transformer first, full block last
      for (auto [proj, ffn] :
           {std::pair{false, false}, std::pair{true, false}, std::pair{false, true}, std::pair{true, true}}) {
        Variant v;
        v.label = std::string(proj ? "conv" : "linear") + " projection, " + (ffn ? "conv" : "mlp") + " extractor";
        v.overrides.use_conv_projection = proj;
        v.overrides.use_conv_ffn = ffn;
        v.conv_projection = proj;
        v.conv_ffn = ffn;
        rows.push_back(v);
      }
      break;
    case Grid::paths:
      for (auto [label, mode] : {std::pair{"Single path", PathMode::single}, std::pair{"Dual path", PathMode::dual}}) {
        Variant v;
        v.label = label;
        v.overrides.paths = mode;
        rows.push_back(v);
      }
      break;
  }
  return rows;
}

// ---------------------------------------------------------------------------

void DeskConfig::validate() const {
  train.validate();
  if (size.depth < 16 || size.height < 16 || size.width < 16) throw ConfigError("desk.size must be at least 16 per axis");
  const auto m = train.model.required_multiple();
  if (size.height % m || size.width % m) {
    throw ConfigError("desk.size height and width must be multiples of " + std::to_string(m));
  }
  if (train_slices < 1 || val_slices < 1) throw ConfigError("desk.train_slices and desk.val_slices must be >= 1");
  if (average_last < 1) throw ConfigError("desk.average_last must be >= 1");
}

std::map<std::string, std::string> DeskConfig::to_keys() const {
  auto kv = train.to_keys();
  kv["desk.size"] = transiam::to_string(size);
  kv["desk.train_slices"] = std::to_string(train_slices);
  kv["desk.val_slices"] = std::to_string(val_slices);
  kv["desk.average_last"] = std::to_string(average_last);
  return kv;
}

void DeskConfig::apply_keys(const std::map<std::string, std::string>& kv) {
  std::map<std::string, std::string> rest;
  for (const auto& [k, v] : kv) {
    if (k == "desk.size") {
      size = parse_extents(v);
    } else if (k == "desk.train_slices") {
      train_slices = parse_integer(k, v);
    } else if (k == "desk.val_slices") {
      val_slices = parse_integer(k, v);
    } else if (k == "desk.average_last") {
      average_last = parse_integer(k, v);
    } else if (k.rfind("desk.", 0) == 0) {
      throw ConfigError("unknown config key '" + k + "'");
    } else {
      rest.emplace(k, v);
    }
  }
  train.apply_keys(rest);
}

DeskConfig desk_config() {
  DeskConfig d;
  d.train.model.stages = {16, 32, 64, 128};
  d.train.model.heads = 2;
  d.train.epochs = 20;
  d.train.batch = 8;
  d.train.keep_checkpoints = d.average_last;
  return d;
}

namespace {

std::vector<Slice> lesion_slices(std::uint64_t seed, const char* tag, std::int64_t want, Extents3 size) {
  std::vector<Slice> out;
  const SliceSelection sel{1, 0.0};
  for (std::uint64_t i = 0; static_cast<std::int64_t>(out.size()) < want; ++i) {
    if (i > static_cast<std::uint64_t>(want) + 1000) {
      throw ConfigError("phantoms of size " + transiam::to_string(size) + " yield too few lesion slices");
    }
    const auto v = generate_phantom(derive_seed(seed, tag, i), size);
    for (auto& s : select_slices({v}, sel, 0)) {
      if (static_cast<std::int64_t>(out.size()) < want) out.push_back(std::move(s));
    }
  }
  return out;
}

std::string slug(const std::string& label) {
  std::string s;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!s.empty() && s.back() != '_') {
      s += '_';
    }
  }
  while (!s.empty() && s.back() == '_') s.pop_back();
  return s;
}

// Mean over the entries where a metric is defined.
MetricRow mean_of(const std::vector<MetricRow>& rows) {
  MetricReport r;
  r.rows = rows;
  return r.mean();
}

std::string cell(const std::optional<double>& v, const char* fmt) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, fmt, *v);
  return buf;
}

}  // namespace

DeskData desk_data(const DeskConfig& cfg, std::uint64_t seed) {
  return {lesion_slices(seed, "train", cfg.train_slices, cfg.size), lesion_slices(seed, "val", cfg.val_slices, cfg.size)};
}

VariantResult run_variant(const DeskConfig& cfg, const Variant& v, const DeskData& data, std::uint64_t seed,
                          const fs::path& run_dir) {
  TrainConfig tc = cfg.train;
  tc.model = variant_config(cfg.train.model, v.overrides);
  tc.seed = seed;
  tc.keep_checkpoints = std::max(tc.keep_checkpoints, cfg.average_last);
  fs::remove_all(run_dir);

  Trainer trainer(tc, data.train);
  trainer.run(run_dir);

  VariantResult r;
  r.label = v.label;
  r.seed = seed;
  r.params = param_count(trainer.model());
  r.steps = trainer.steps_done();
  std::vector<std::string> notes;
  const auto models = load_models(pick_checkpoints(run_dir, cfg.average_last, notes));
  r.report = evaluate_slices(pointers(models), data.val);
  r.report.notes = notes;
  r.mean = r.report.mean();
  r.mean.case_id = v.label;
  return r;
}

AblationTable run_ablation(Grid g, const DeskConfig& cfg, const std::vector<std::uint64_t>& seeds, const fs::path& out,
                           const std::function<void(const VariantResult&)>& on_variant) {
  cfg.validate();
  if (seeds.empty()) throw ConfigError("at least one seed is needed");
  AblationTable table;
  table.grid = g;
  table.seeds = seeds;
  const auto variants = grid_variants(g);
  std::vector<std::vector<MetricRow>> per_variant(variants.size());
  for (auto& v : variants) table.rows.push_back({v, 0, {}, {}});

  for (auto seed : seeds) {
    const auto data = desk_data(cfg, seed);
    for (std::size_t i = 0; i < variants.size(); ++i) {
      const auto dir = out / to_string(g) / slug(variants[i].label) / ("seed_" + std::to_string(seed));
      auto r = run_variant(cfg, variants[i], data, seed, dir);
      {
        std::ofstream csv(dir / "metrics.csv");
        r.report.write_csv(csv);
      }
      table.rows[i].params = r.params;
      table.rows[i].seed_dice.push_back(r.mean.dice);
      per_variant[i].push_back(r.mean);
      if (on_variant) on_variant(r);
    }
  }
  for (std::size_t i = 0; i < variants.size(); ++i) {
    table.rows[i].mean = mean_of(per_variant[i]);
    table.rows[i].mean.case_id = variants[i].label;
  }
  return table;
}

void AblationTable::write_csv(std::ostream& out) const {
  out << "# grid: " << to_string(grid) << "\n# seeds:";
  for (auto s : seeds) out << ' ' << s;
  out << "\n# metrics are whole-tumor means over held-out slices, then over seeds\n";
  switch (grid) {
    case Grid::fusion: out << "fusion"; break;
    case Grid::icmt: out << "conv_projection,conv_ffn"; break;
    case Grid::paths: out << "model"; break;
  }
  out << ",dice,sensitivity,specificity,hd95";
  if (grid == Grid::paths) out << ",params";
  out << '\n';
  for (const auto& r : rows) {
    if (grid == Grid::icmt) {
      out << (r.variant.conv_projection ? "yes" : "no") << ',' << (r.variant.conv_ffn ? "yes" : "no");
    } else {
      out << r.variant.label;
    }
    out << ',' << cell(r.mean.dice, "%.4f") << ',' << cell(r.mean.sensitivity, "%.4f") << ','
        << cell(r.mean.specificity, "%.4f") << ',' << cell(r.mean.hd95, "%.4f");
    if (grid == Grid::paths) out << ',' << r.params;
    out << '\n';
  }
}

void AblationTable::write_table(std::ostream& out) const {
  std::vector<std::string> head;
  switch (grid) {
    case Grid::fusion: head = {"Fusion"}; break;
    case Grid::icmt: head = {"Conv projection", "Conv instead of MLP"}; break;
    case Grid::paths: head = {"Model"}; break;
  }
  for (const char* h : {"Dice", "Sensitivity", "Specificity", "HD95"}) head.emplace_back(h);
  if (grid == Grid::paths) head.emplace_back("Params(M)");

  std::vector<std::vector<std::string>> body;
  for (const auto& r : rows) {
    std::vector<std::string> line;
    if (grid == Grid::icmt) {
      line.emplace_back(r.variant.conv_projection ? "yes" : "-");
      line.emplace_back(r.variant.conv_ffn ? "yes" : "-");
    } else {
      line.push_back(r.variant.label);
    }
    line.push_back(cell(r.mean.dice, "%.2f"));
    line.push_back(cell(r.mean.sensitivity, "%.2f"));
    line.push_back(cell(r.mean.specificity, "%.2f"));
    line.push_back(cell(r.mean.hd95, "%.3f"));
    if (grid == Grid::paths) line.push_back(cell(static_cast<double>(r.params) / 1e6, "%.3f"));
    body.push_back(line);
  }

  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& line : body) width[c] = std::max(width[c], line[c].size());
  }
  auto rule = [&] {
    std::size_t total = 0;
    for (auto w : width) total += w + 2;
    out << std::string(total, '-') << '\n';
  };
  auto emit = [&](const std::vector<std::string>& line) {
    std::string text;
    for (std::size_t c = 0; c < line.size(); ++c) {
      const std::string pad(width[c] - line[c].size(), ' ');
      // first column left aligned, numbers right aligned
      text += c == 0 && grid != Grid::icmt ? line[c] + pad : pad + line[c];
      text += "  ";
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out << text << '\n';
  };
  rule();
  emit(head);
  rule();
  for (const auto& line : body) emit(line);
  rule();
}

}  // namespace transiam::app
