#include "transiam/model.hpp"

#include <fstream>
#include <sstream>

#include "config_keys.hpp"
#include "transiam/errors.hpp"
#include "transiam/serialize.hpp"

namespace transiam {

std::string to_string(PathMode mode) { return mode == PathMode::single ? "single" : "dual"; }

PathMode parse_path_mode(const std::string& name) {
  if (name == "single") return PathMode::single;
  if (name == "dual") return PathMode::dual;
  throw ConfigError("unknown path mode '" + name + "' (expected single or dual)");
}

// ---------------------------------------------------------------------------
// config

void ModelConfig::validate() const {
  if (stages.empty()) throw ConfigError("stages must list at least one width");
  for (auto w : stages) {
    if (w < 1) throw ConfigError("stage widths must be positive");
  }
  if (conv_stages < 0 || icmt_stages < 0 ||
      conv_stages + icmt_stages != static_cast<int>(stages.size())) {
    throw ConfigError("conv_stages + icmt_stages (" + std::to_string(conv_stages) + " + " +
                      std::to_string(icmt_stages) + ") must equal the number of stages (" +
                      std::to_string(stages.size()) + ")");
  }
  if (icmt_stages > 0 && icmt_blocks_per_stage < 1) {
    throw ConfigError("icmt_blocks_per_stage must be at least 1");
  }
  if (heads < 1) throw ConfigError("heads must be at least 1");
  for (int i = conv_stages; i < static_cast<int>(stages.size()); ++i) {
    if (!icmt_as_conv && stages[static_cast<std::size_t>(i)] % heads != 0) {
      throw ConfigError("stage width " + std::to_string(stages[static_cast<std::size_t>(i)]) +
                        " is not divisible by heads=" + std::to_string(heads));
    }
  }
  if (fusion == FuseKind::tmm && stages.back() % heads != 0) {
    throw ConfigError("deepest width " + std::to_string(stages.back()) +
                      " is not divisible by heads=" + std::to_string(heads));
  }
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (input_channels_per_path < 1) throw ConfigError("input_channels_per_path must be positive");
  if (paths == PathMode::single && fusion != FuseKind::without) {
    throw ConfigError("a single-path model has nothing to fuse; fusion must be 'without', got '" +
                      to_string(fusion) + "'");
  }
}

namespace {

std::string join_widths(const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

using keys::parse_bool;
using keys::parse_int;
using keys::trim;

}  // namespace

std::map<std::string, std::string> ModelConfig::to_keys() const {
  return {{"stages", join_widths(stages)},
          {"conv_stages", std::to_string(conv_stages)},
          {"icmt_stages", std::to_string(icmt_stages)},
          {"icmt_blocks_per_stage", std::to_string(icmt_blocks_per_stage)},
          {"heads", std::to_string(heads)},
          {"num_classes", std::to_string(num_classes)},
          {"fusion", to_string(fusion)},
          {"paths", to_string(paths)},
          {"use_conv_projection", use_conv_projection ? "true" : "false"},
          {"use_conv_ffn", use_conv_ffn ? "true" : "false"},
          {"icmt_as_conv", icmt_as_conv ? "true" : "false"},
          {"input_channels_per_path", std::to_string(input_channels_per_path)}};
}

std::vector<std::string> ModelConfig::apply_keys(const std::map<std::string, std::string>& kv) {
  std::vector<std::string> unknown;
  for (const auto& [k, v] : kv) {
    if (k == "stages") {
      stages.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) stages.push_back(parse_int(k, trim(item)));
    } else if (k == "conv_stages") {
      conv_stages = parse_int(k, v);
    } else if (k == "icmt_stages") {
      icmt_stages = parse_int(k, v);
    } else if (k == "icmt_blocks_per_stage") {
      icmt_blocks_per_stage = parse_int(k, v);
    } else if (k == "heads") {
      heads = parse_int(k, v);
    } else if (k == "num_classes") {
      num_classes = parse_int(k, v);
    } else if (k == "fusion") {
      fusion = parse_fuse_kind(v);
    } else if (k == "paths") {
      paths = parse_path_mode(v);
    } else if (k == "use_conv_projection") {
      use_conv_projection = parse_bool(k, v);
    } else if (k == "use_conv_ffn") {
      use_conv_ffn = parse_bool(k, v);
    } else if (k == "icmt_as_conv") {
      icmt_as_conv = parse_bool(k, v);
    } else if (k == "input_channels_per_path") {
      input_channels_per_path = parse_int(k, v);
    } else {
      unknown.push_back(k);
    }
  }
  return unknown;
}

bool operator==(const ModelConfig& a, const ModelConfig& b) { return a.to_keys() == b.to_keys(); }

ModelConfig variant_config(ModelConfig base, const VariantOverrides& o) {
  if (o.use_conv_projection) base.use_conv_projection = *o.use_conv_projection;
  if (o.use_conv_ffn) base.use_conv_ffn = *o.use_conv_ffn;
  if (o.icmt_as_conv) base.icmt_as_conv = *o.icmt_as_conv;
  if (o.paths) base.paths = *o.paths;
  if (o.fusion) {
    if (base.paths == PathMode::single && *o.fusion != FuseKind::without) {
      throw ConfigError("contradictory overrides: paths=single with fusion=" + to_string(*o.fusion));
    }
    base.fusion = *o.fusion;
  } else if (base.paths == PathMode::single) {
    base.fusion = FuseKind::without;
  }
  base.validate();
  return base;
}

// ---------------------------------------------------------------------------
// construction

namespace {

template <typename T>
Encoder<T> make_encoder(ParamStore<T>& store, const std::string& name, const ModelConfig& cfg,
                        std::int64_t in_channels) {
  Encoder<T> e;
  e.stem = make_conv_block(store, name + ".stem", in_channels, cfg.stages[0]);
  const int n = static_cast<int>(cfg.stages.size());
  for (int i = 0; i < n; ++i) {
    const std::string sn = name + ".stage" + std::to_string(i + 1);
    const std::int64_t w = cfg.stages[static_cast<std::size_t>(i)];
    EncoderStage<T> st;
    if (i < cfg.conv_stages) {
      for (int b = 0; b < 2; ++b) st.convs.push_back(make_conv_block(store, sn + ".conv" + std::to_string(b), w, w));
    } else if (cfg.icmt_as_conv) {
      for (int b = 0; b < cfg.icmt_blocks_per_stage; ++b) {
        st.convs.push_back(make_conv_block(store, sn + ".conv" + std::to_string(b), w, w));
      }
    } else {
      for (int b = 0; b < cfg.icmt_blocks_per_stage; ++b) {
        st.icmts.push_back(make_icmt(store, sn + ".icmt" + std::to_string(b), w, cfg.heads,
                                     cfg.use_conv_projection, cfg.use_conv_ffn));
      }
    }
    if (i + 1 < n) {
      st.down = make_downsample(store, sn + ".down", w, cfg.stages[static_cast<std::size_t>(i + 1)]);
    }
    e.stages.push_back(std::move(st));
  }
  return e;
}

template <typename T>
Decoder<T> make_decoder(ParamStore<T>& store, const std::string& name, const ModelConfig& cfg) {
  Decoder<T> d;
  for (int i = static_cast<int>(cfg.stages.size()) - 1; i > 0; --i) {
    const std::int64_t in = cfg.stages[static_cast<std::size_t>(i)];
    const std::int64_t out = cfg.stages[static_cast<std::size_t>(i - 1)];
    const std::string un = name + ".up" + std::to_string(i);
    UpStage<T> u;
    // each output pixel of a k2 s2 transposed conv sees one tap per input channel
    u.up.w = store.kaiming(un + ".w", {in, out, 2, 2}, in);
    // no bias: the group norm right after would cancel most of it
    u.up.stride = 2;
    u.norm = make_norm(store, un + ".norm", out);
    d.ups.push_back(std::move(u));
  }
  d.head = make_conv(store, name + ".head", cfg.stages[0], cfg.num_classes, 1, 1, 0);
  return d;
}

template <typename T>
std::vector<FeatureMap<T>> run_encoder(const Encoder<T>& e, const FeatureMap<T>& x) {
  std::vector<FeatureMap<T>> skips;
  auto h = conv_block(x, e.stem);
  for (const auto& st : e.stages) {
    for (const auto& c : st.convs) h = conv_block(h, c);
    for (const auto& b : st.icmts) h = icmt_block(h, b);
    skips.push_back(h);
    if (st.down) h = downsample(h, *st.down);
  }
  return skips;
}

template <typename T>
FeatureMap<T> run_decoder(const Decoder<T>& d, FeatureMap<T> h, const std::vector<FeatureMap<T>>& skips) {
  for (std::size_t j = 0; j < d.ups.size(); ++j) {
    const auto& u = d.ups[j];
    const auto& skip = skips[skips.size() - 2 - j];
    auto up = add(conv_transpose2d(h, u.up.w, u.up.b, 2), skip);
    h = relu(group_norm(up, u.norm.gamma, u.norm.beta, norm_groups(up.dim(1))));
  }
  return apply_conv(h, d.head);
}

template <typename T>
void check_input(const ModelConfig& cfg, const FeatureMap<T>& x, std::int64_t channels,
                 const char* which) {
  expect_feature_map(x, "forward");
  if (x.dim(1) != channels) {
    throw DimensionError(std::string("forward: ") + which + " has " + std::to_string(x.dim(1)) +
                         " channels, the model expects " + std::to_string(channels));
  }
  const auto m = cfg.required_multiple();
  if (x.dim(2) % m != 0 || x.dim(3) % m != 0) {
    throw DimensionError("forward: input extents " + std::to_string(x.dim(2)) + "x" +
                         std::to_string(x.dim(3)) + " must be multiples of " + std::to_string(m));
  }
}

}  // namespace

template <typename T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model<T> m;
  m.cfg = cfg;
  m.store = ParamStore<T>(seed);
  const std::int64_t cin = cfg.input_channels_per_path;
  if (cfg.paths == PathMode::dual) {
    m.enc_a = make_encoder(m.store, "enc_a", cfg, cin);
    m.enc_b = make_encoder(m.store, "enc_b", cfg, cin);
    m.fuse = make_fuse(m.store, "fuse", cfg.fusion, cfg.stages.back(), cfg.heads);
    m.dec_a = make_decoder(m.store, "dec_a", cfg);
    m.dec_b = make_decoder(m.store, "dec_b", cfg);
  } else {
    m.enc_a = make_encoder(m.store, "enc", cfg, 2 * cin);
    m.fuse.kind = FuseKind::without;
    m.dec_a = make_decoder(m.store, "dec", cfg);
  }
  return m;
}

template <typename T>
Model<T> build_variant(const ModelConfig& base, const VariantOverrides& o, std::uint64_t seed) {
  return build_model<T>(variant_config(base, o), seed);
}

template <typename T>
HeadLogits<T> forward_heads(const Model<T>& m, const FeatureMap<T>& in_a, const FeatureMap<T>& in_b) {
  const std::int64_t cin = m.cfg.input_channels_per_path;
  check_input(m.cfg, in_a, cin, "input A");
  check_input(m.cfg, in_b, cin, "input B");
  if (in_a.shape() != in_b.shape()) {
    throw DimensionError("forward: input shapes differ, " + shape_string(in_a.shape()) + " vs " +
                         shape_string(in_b.shape()));
  }
  if (m.cfg.paths == PathMode::single) {
    auto skips = run_encoder(m.enc_a, concat_channels(in_a, in_b));
    return {run_decoder(m.dec_a, skips.back(), skips), {}};
  }
  auto skips_a = run_encoder(m.enc_a, in_a);
  auto skips_b = run_encoder(m.enc_b, in_b);
  auto [fa, fb] = fuse_variant(skips_a.back(), skips_b.back(), m.fuse);
  return {run_decoder(m.dec_a, fa, skips_a), run_decoder(m.dec_b, fb, skips_b)};
}

template <typename T>
FeatureMap<T> forward(const Model<T>& m, const FeatureMap<T>& in_a, const FeatureMap<T>& in_b) {
  auto h = forward_heads(m, in_a, in_b);
  if (!h.b.defined()) return h.a;
  return scale(add(h.a, h.b), T(0.5));
}

template <typename T>
FeatureMap<T> forward(const Model<T>& m, const FeatureMap<T>& in) {
  if (m.cfg.paths != PathMode::single) {
    throw DimensionError("forward: a dual-path model takes two inputs");
  }
  check_input(m.cfg, in, 2 * m.cfg.input_channels_per_path, "input");
  auto skips = run_encoder(m.enc_a, in);
  return run_decoder(m.dec_a, skips.back(), skips);
}

#define TRANSIAM_INSTANTIATE(T)                                                                  \
  template Model<T> build_model<T>(const ModelConfig&, std::uint64_t);                          \
  template Model<T> build_variant<T>(const ModelConfig&, const VariantOverrides&, std::uint64_t); \
  template HeadLogits<T> forward_heads(const Model<T>&, const FeatureMap<T>&,                   \
                                       const FeatureMap<T>&);                                    \
  template FeatureMap<T> forward(const Model<T>&, const FeatureMap<T>&, const FeatureMap<T>&);  \
  template FeatureMap<T> forward(const Model<T>&, const FeatureMap<T>&);

TRANSIAM_INSTANTIATE(float)
TRANSIAM_INSTANTIATE(double)
#undef TRANSIAM_INSTANTIATE

// ---------------------------------------------------------------------------
// files

namespace {

std::string shape_token(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

void save_tensors(const std::filesystem::path& dir, const std::vector<NamedParam<float>>& tensors,
                  const std::string& stem) {
  std::filesystem::create_directories(dir);
  std::ofstream payload(dir / (stem + ".payload"), std::ios::binary);
  std::ofstream manifest(dir / (stem + ".manifest"));
  if (!payload || !manifest) throw ConfigError("cannot write tensors to " + dir.string());
  std::uint64_t offset = 0;
  for (const auto& p : tensors) {
    manifest << p.name << ' ' << shape_token(p.tensor.shape()) << ' ' << offset << '\n';
    write_tensor(payload, p.tensor);
    offset += serialized_size(p.tensor.shape());
  }
  if (!payload || !manifest) throw ConfigError("failed writing tensors to " + dir.string());
}

void load_tensors(const std::filesystem::path& dir, const std::vector<NamedParam<float>>& into,
                  const std::string& stem) {
  std::ifstream manifest(dir / (stem + ".manifest"));
  std::ifstream payload(dir / (stem + ".payload"), std::ios::binary);
  if (!manifest || !payload) {
    throw CorruptFileError("missing " + stem + ".manifest or " + stem + ".payload in " + dir.string());
  }
  std::string line;
  std::size_t i = 0;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, shape;
    std::uint64_t offset = 0;
    if (!(ls >> name >> shape >> offset)) throw CorruptFileError("bad manifest line: " + line);
    if (i >= into.size()) throw CorruptFileError("manifest lists more tensors than the model has: " + name);
    const auto& dst = into[i++];
    if (name != dst.name || shape != shape_token(dst.tensor.shape())) {
      throw CorruptFileError("checkpoint does not match model: found " + name + " " + shape +
                             ", expected " + dst.name + " " + shape_token(dst.tensor.shape()));
    }
    payload.seekg(static_cast<std::streamoff>(offset));
    auto t = read_tensor(payload);
    auto d = dst.tensor;
    std::copy(t.values().begin(), t.values().end(), d.values().begin());
  }
  if (i != into.size()) {
    throw CorruptFileError("checkpoint holds " + std::to_string(i) + " tensors, model has " +
                           std::to_string(into.size()));
  }
}

void save_config(const std::filesystem::path& file, const std::map<std::string, std::string>& kv) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw ConfigError("cannot write " + file.string());
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

std::map<std::string, std::string> load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(file.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace transiam
