#include "transiam/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <regex>

#include "transiam/binary_io.hpp"
#include "transiam/errors.hpp"
#include "transiam/rng.hpp"

namespace transiam {

Extents3 parse_extents(const std::string& text) {
  static const std::regex pattern(R"((\d+)x(\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(text, m, pattern)) throw ConfigError("bad size '" + text + "', expected DxHxW");
  try {
    return {std::stoll(m[1]), std::stoll(m[2]), std::stoll(m[3])};
  } catch (const std::out_of_range&) {
    throw ConfigError("size '" + text + "' out of range");
  }
}

std::string to_string(const Extents3& e) {
  return std::to_string(e.depth) + "x" + std::to_string(e.height) + "x" + std::to_string(e.width);
}

// ---------------------------------------------------------------------------
// phantom

namespace {

// Intensity added to the tissue baseline per label, columns T1, T1ce, Flair, T2.
constexpr double kContrast[4][kModalities] = {
    {0.0, 0.0, 0.0, 0.0},      // background
    {-0.6, -0.3, 0.3, 0.9},    // necrotic core: dark T1, bright T2
    {-0.3, 0.0, 0.8, 0.8},     // edema: bright Flair and T2
    {-0.1, 1.0, 0.6, 0.4},     // enhancing rim: bright T1ce
};
constexpr double kTissue[kModalities] = {0.8, 0.7, 0.6, 0.65};

struct Lesion {
  double cz, cy, cx;
  double rz, r;          // edema radii (depth, in-plane)
  double core, rim;      // nested radii as fractions of the edema radius
  double wobble, phase;  // in-plane boundary modulation
};

}  // namespace

VolumeSample generate_phantom(std::uint64_t seed, Extents3 size, const PhantomConfig& cfg) {
  if (size.depth < 16 || size.height < 16 || size.width < 16) {
    throw DimensionError("phantom size " + to_string(size) + " is degenerate: need at least 16 per axis");
  }
  if (cfg.min_lesions < 0 || cfg.max_lesions < cfg.min_lesions) {
    throw ConfigError("phantom lesion count range is empty");
  }
  Rng rng(derive_seed(seed, "phantom"));
  const double D = static_cast<double>(size.depth), H = static_cast<double>(size.height),
               W = static_cast<double>(size.width);

  // brain ellipsoid
  const double bz = D / 2 + rng.uniform(-0.03, 0.03) * D, by = H / 2 + rng.uniform(-0.03, 0.03) * H,
               bx = W / 2 + rng.uniform(-0.03, 0.03) * W;
  const double rbz = rng.uniform(0.42, 0.47) * D, rby = rng.uniform(0.40, 0.46) * H,
               rbx = rng.uniform(0.36, 0.42) * W;

  // low-frequency bias field per modality
  double field[kModalities][4];
  for (auto& f : field) {
    f[0] = rng.uniform(0.03, 0.08);
    f[1] = rng.uniform(0.0, 2 * std::numbers::pi);
    f[2] = rng.uniform(0.5, 1.5);
    f[3] = rng.uniform(0.5, 1.5);
  }

  const int count = cfg.min_lesions + static_cast<int>(rng.below(
                                          static_cast<std::uint64_t>(cfg.max_lesions - cfg.min_lesions + 1)));
  std::vector<Lesion> lesions;
  const double plane = std::min(H, W);
  for (int i = 0; i < count; ++i) {
    Lesion l;
    l.r = rng.uniform(cfg.min_radius, cfg.max_radius) * plane;
    l.rz = std::max(1.5, rng.uniform(0.25, 0.4) * D);
    // centre well inside the brain
    const double a = rng.uniform(0, 2 * std::numbers::pi), rho = std::sqrt(rng.uniform()) * 0.45;
    l.cy = by + rho * rby * std::sin(a);
    l.cx = bx + rho * rbx * std::cos(a);
    l.cz = bz + rng.uniform(-0.3, 0.3) * rbz;
    l.core = rng.uniform(0.25, 0.4);
    l.rim = l.core + rng.uniform(0.2, 0.3);
    l.wobble = rng.uniform(0.0, 0.2);
    l.phase = rng.uniform(0, 2 * std::numbers::pi);
    lesions.push_back(l);
  }

  VolumeSample v;
  v.size = size;
  v.seed = seed;
  const auto n = static_cast<std::size_t>(size.voxels());
  for (auto& m : v.modalities) m.assign(n, 0.0f);
  v.labels.assign(n, kBackground);
  std::vector<std::uint8_t> brain(n, 0);
  Rng noise(derive_seed(seed, "noise"));

  std::size_t idx = 0;
  for (std::int64_t z = 0; z < size.depth; ++z) {
    for (std::int64_t y = 0; y < size.height; ++y) {
      for (std::int64_t x = 0; x < size.width; ++x, ++idx) {
        const double dz = (z + 0.5 - bz) / rbz, dy = (y + 0.5 - by) / rby, dx = (x + 0.5 - bx) / rbx;
        if (dz * dz + dy * dy + dx * dx > 1.0) continue;
        brain[idx] = 1;
        // innermost region of any lesion wins: necrotic > enhancing > edema
        int label = kBackground;
        for (const auto& l : lesions) {
          const double ly = y + 0.5 - l.cy, lx = x + 0.5 - l.cx, lz = (z + 0.5 - l.cz) / l.rz;
          const double theta = std::atan2(ly, lx);
          const double r = l.r * (1.0 + l.wobble * std::sin(3 * theta + l.phase));
          const double d = std::sqrt(lz * lz + (ly * ly + lx * lx) / (r * r));
          int here = kBackground;
          if (d <= l.core) {
            here = kNecrotic;
          } else if (d <= l.rim) {
            here = kEnhancing;
          } else if (d <= 1.0) {
            here = kEdema;
          }
          auto rank = [](int lab) { return lab == kNecrotic ? 3 : lab == kEnhancing ? 2 : lab == kEdema ? 1 : 0; };
          if (rank(here) > rank(label)) label = here;
        }
        v.labels[idx] = static_cast<std::uint8_t>(label);
        for (int m = 0; m < kModalities; ++m) {
          const auto& f = field[m];
          const double bias = f[0] * std::sin(f[2] * 2 * std::numbers::pi * (x + 0.5) / W + f[1]) *
                              std::cos(f[3] * std::numbers::pi * (y + 0.5) / H);
          const double value = kTissue[m] + bias + kContrast[label][m] + cfg.noise_sigma * noise.normal();
          v.modalities[static_cast<std::size_t>(m)][idx] = static_cast<float>(value);
        }
      }
    }
  }

  // zero mean, unit variance over the brain
  for (auto& m : v.modalities) {
    double sum = 0, sq = 0, count_in = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!brain[i]) continue;
      sum += m[i];
      count_in += 1;
    }
    if (count_in == 0) continue;
    const double mean = sum / count_in;
    for (std::size_t i = 0; i < n; ++i) {
      if (brain[i]) sq += (m[i] - mean) * (m[i] - mean);
    }
    const double sd = std::sqrt(sq / count_in);
    for (std::size_t i = 0; i < n; ++i) {
      if (!brain[i]) continue;
      float z = static_cast<float>((m[i] - mean) / (sd > 0 ? sd : 1.0));
      // exact zero is reserved for "outside the brain"
      if (z == 0.0f) z = std::numeric_limits<float>::min();
      m[i] = z;
    }
  }

  v.meta["generator"] = "phantom";
  v.meta["lesions"] = std::to_string(count);
  v.meta["noise_sigma"] = std::to_string(cfg.noise_sigma);
  return v;
}

VolumeSample crop_background(const VolumeSample& v) {
  const Extents3 s = v.size;
  std::int64_t lo[3] = {s.depth, s.height, s.width}, hi[3] = {-1, -1, -1};
  std::size_t idx = 0;
  for (std::int64_t z = 0; z < s.depth; ++z) {
    for (std::int64_t y = 0; y < s.height; ++y) {
      for (std::int64_t x = 0; x < s.width; ++x, ++idx) {
        bool inside = false;
        for (const auto& m : v.modalities) inside = inside || m[idx] != 0.0f;
        if (!inside) continue;
        const std::int64_t c[3] = {z, y, x};
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], c[a]);
          hi[a] = std::max(hi[a], c[a]);
        }
      }
    }
  }
  if (hi[0] < 0) throw DomainError("crop_background: the brain mask is empty");

  const std::int64_t dims[3] = {s.depth, s.height, s.width};
  std::int64_t start[3], len[3];
  for (int a = 0; a < 3; ++a) {
    const std::int64_t tight = hi[a] - lo[a] + 1;
    len[a] = (tight + 7) / 8 * 8;
    // grow around the box, staying inside the source when it is large enough
    start[a] = lo[a] - (len[a] - tight) / 2;
    if (len[a] <= dims[a]) start[a] = std::clamp<std::int64_t>(start[a], 0, dims[a] - len[a]);
  }

  VolumeSample out;
  out.size = {len[0], len[1], len[2]};
  out.seed = v.seed;
  out.meta = v.meta;
  out.meta["crop_z"] = std::to_string(start[0]);
  out.meta["crop_y"] = std::to_string(start[1]);
  out.meta["crop_x"] = std::to_string(start[2]);
  const auto n = static_cast<std::size_t>(out.size.voxels());
  for (auto& m : out.modalities) m.assign(n, 0.0f);
  out.labels.assign(n, kBackground);
  std::size_t o = 0;
  for (std::int64_t z = 0; z < len[0]; ++z) {
    for (std::int64_t y = 0; y < len[1]; ++y) {
      for (std::int64_t x = 0; x < len[2]; ++x, ++o) {
        const std::int64_t sz = z + start[0], sy = y + start[1], sx = x + start[2];
        if (sz < 0 || sy < 0 || sx < 0 || sz >= s.depth || sy >= s.height || sx >= s.width) continue;
        const auto i = static_cast<std::size_t>((sz * s.height + sy) * s.width + sx);
        for (int m = 0; m < kModalities; ++m) out.modalities[static_cast<std::size_t>(m)][o] = v.modalities[static_cast<std::size_t>(m)][i];
        out.labels[o] = v.labels[i];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// slices

std::int64_t Slice::foreground() const {
  return std::count_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l != kBackground; });
}

Slice axial_slice(const VolumeSample& v, std::int64_t z) {
  if (z < 0 || z >= v.size.depth) {
    throw DimensionError("slice " + std::to_string(z) + " outside depth " + std::to_string(v.size.depth));
  }
  Slice s;
  s.height = v.size.height;
  s.width = v.size.width;
  const auto plane = static_cast<std::size_t>(s.pixels());
  const auto off = static_cast<std::ptrdiff_t>(static_cast<std::size_t>(z) * plane);
  for (int m = 0; m < kModalities; ++m) {
    const auto& src = v.modalities[static_cast<std::size_t>(m)];
    s.channels[static_cast<std::size_t>(m)].assign(src.begin() + off, src.begin() + off + static_cast<std::ptrdiff_t>(plane));
  }
  s.labels.assign(v.labels.begin() + off, v.labels.begin() + off + static_cast<std::ptrdiff_t>(plane));
  return s;
}

namespace {

// Resamples every channel and the labels through `map`, which gives the
// source coordinate (y, x) of an output pixel.
template <typename Map>
Slice resample(const Slice& s, std::int64_t out_h, std::int64_t out_w, Map map, bool bilinear) {
  Slice o;
  o.height = out_h;
  o.width = out_w;
  const auto n = static_cast<std::size_t>(out_h * out_w);
  for (auto& c : o.channels) c.resize(n);
  o.labels.resize(n);
  auto clampi = [](double v, std::int64_t hi) {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(v), 0, hi - 1);
  };
  for (std::int64_t y = 0; y < out_h; ++y) {
    for (std::int64_t x = 0; x < out_w; ++x) {
      const auto [sy, sx] = map(y, x);
      const auto o_idx = static_cast<std::size_t>(y * out_w + x);
      const std::int64_t ny = clampi(std::floor(sy + 0.5), s.height), nx = clampi(std::floor(sx + 0.5), s.width);
      o.labels[o_idx] = s.labels[static_cast<std::size_t>(ny * s.width + nx)];
      if (!bilinear) {
        for (int m = 0; m < kModalities; ++m) {
          o.channels[static_cast<std::size_t>(m)][o_idx] = s.channels[static_cast<std::size_t>(m)][static_cast<std::size_t>(ny * s.width + nx)];
        }
        continue;
      }
      const double fy = std::clamp(sy, 0.0, static_cast<double>(s.height - 1));
      const double fx = std::clamp(sx, 0.0, static_cast<double>(s.width - 1));
      const std::int64_t y0 = static_cast<std::int64_t>(fy), x0 = static_cast<std::int64_t>(fx);
      const std::int64_t y1 = std::min(y0 + 1, s.height - 1), x1 = std::min(x0 + 1, s.width - 1);
      const double wy = fy - y0, wx = fx - x0;
      for (int m = 0; m < kModalities; ++m) {
        const auto& c = s.channels[static_cast<std::size_t>(m)];
        auto at = [&](std::int64_t yy, std::int64_t xx) { return static_cast<double>(c[static_cast<std::size_t>(yy * s.width + xx)]); };
        const double v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                         wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
        o.channels[static_cast<std::size_t>(m)][o_idx] = static_cast<float>(v);
      }
    }
  }
  return o;
}

// Mirror index without repeating the edge: -1 -> 1, n -> n - 2.
std::int64_t reflect(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Slice apply_augment(const Slice& s, const AugmentTrace& t) {
  const std::int64_t H = s.height, W = s.width;
  Slice cur = s;
  if (t.flipped) {
    const bool vert = t.flip_vertical;
    cur = resample(cur, H, W, [&](std::int64_t y, std::int64_t x) {
      return std::pair<double, double>(vert ? H - 1 - y : y, vert ? x : W - 1 - x);
    }, false);
  }
  if (t.rotated && t.quarter_turns % 4 != 0) {
    const int k = ((t.quarter_turns % 4) + 4) % 4;
    if (H != W && k % 2 == 1) throw DimensionError("quarter turns need a square slice");
    cur = resample(cur, H, W, [&](std::int64_t y, std::int64_t x) {
      // counter-clockwise by k quarter turns
      switch (k) {
        case 1: return std::pair<double, double>(x, W - 1 - y);
        case 2: return std::pair<double, double>(H - 1 - y, W - 1 - x);
        default: return std::pair<double, double>(H - 1 - x, y);
      }
    }, false);
  }
  if (t.scaled && t.factor != 1.0) {
    const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0, f = t.factor;
    cur = resample(cur, H, W, [&](std::int64_t y, std::int64_t x) {
      return std::pair<double, double>((y - cy) / f + cy, (x - cx) / f + cx);
    }, true);
  }
  if (t.cropped) {
    cur = resample(cur, H, W, [&](std::int64_t y, std::int64_t x) {
      return std::pair<double, double>(reflect(y + t.crop_dy, H), reflect(x + t.crop_dx, W));
    }, false);
  }
  return cur;
}

Slice augment(const Slice& s, std::uint64_t seed, const AugmentConfig& cfg, AugmentTrace* trace) {
  // Every draw happens whether or not its transform fires, so the stream
  // position of each decision is fixed.
  Rng rng(derive_seed(seed, "augment"));
  AugmentTrace t;
  t.flipped = rng.bernoulli(cfg.probability);
  t.flip_vertical = rng.bernoulli(0.5);
  t.rotated = rng.bernoulli(cfg.probability);
  const bool square = s.height == s.width;
  const int turn = 1 + static_cast<int>(rng.below(3));
  t.quarter_turns = square ? turn : 2;
  t.scaled = rng.bernoulli(cfg.probability);
  t.factor = rng.uniform(cfg.min_scale, cfg.max_scale);
  t.cropped = rng.bernoulli(cfg.probability);
  const std::int64_t m = std::min({cfg.crop_margin, s.height - 1, s.width - 1});
  t.crop_dy = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * m + 1))) - m;
  t.crop_dx = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * m + 1))) - m;
  if (!t.rotated) t.quarter_turns = 0;
  if (!t.scaled) t.factor = 1.0;
  if (!t.cropped) t.crop_dy = t.crop_dx = 0;
  if (trace) *trace = t;
  return apply_augment(s, t);
}

std::vector<Slice> select_slices(const std::vector<VolumeSample>& volumes, const SliceSelection& sel,
                                 std::uint64_t seed) {
  std::vector<Slice> fg, bg;
  for (const auto& v : volumes) {
    for (std::int64_t z = 0; z < v.size.depth; ++z) {
      Slice s = axial_slice(v, z);
      const auto count = s.foreground();
      if (count >= sel.min_foreground && count > 0) {
        fg.push_back(std::move(s));
      } else if (count == 0) {
        bg.push_back(std::move(s));
      }
    }
  }
  auto quota = static_cast<std::size_t>(std::llround(sel.background_quota * static_cast<double>(fg.size())));
  quota = std::min(quota, bg.size());
  if (fg.empty() && quota == 0) throw DomainError("select_slices: no slice has enough foreground");
  // keep a seeded subset of the background slices, in their original order
  std::vector<std::size_t> pick(bg.size());
  std::iota(pick.begin(), pick.end(), 0);
  Rng rng(derive_seed(seed, "background"));
  for (std::size_t i = 0; i < quota; ++i) {
    std::swap(pick[i], pick[i + rng.below(pick.size() - i)]);
  }
  pick.resize(quota);
  std::sort(pick.begin(), pick.end());
  for (auto i : pick) fg.push_back(std::move(bg[i]));
  return fg;
}

SliceBatch make_batch(const std::vector<Slice>& slices, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DimensionError("make_batch: empty batch");
  const auto& first = slices.at(indices[0]);
  const std::int64_t H = first.height, W = first.width, B = static_cast<std::int64_t>(indices.size());
  SliceBatch b{Tensor<float>({B, 2, H, W}), Tensor<float>({B, 2, H, W}), {}};
  b.target.reserve(static_cast<std::size_t>(B * H * W));
  const auto plane = static_cast<std::size_t>(H * W);
  for (std::int64_t j = 0; j < B; ++j) {
    const auto& s = slices.at(indices[static_cast<std::size_t>(j)]);
    if (s.height != H || s.width != W) {
      throw DimensionError("make_batch: slices of " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                           " and " + std::to_string(H) + "x" + std::to_string(W) + " cannot share a batch");
    }
    for (int c = 0; c < 2; ++c) {
      std::copy(s.channels[static_cast<std::size_t>(c)].begin(), s.channels[static_cast<std::size_t>(c)].end(),
                b.input_a.data() + (j * 2 + c) * static_cast<std::int64_t>(plane));
      std::copy(s.channels[static_cast<std::size_t>(c + 2)].begin(), s.channels[static_cast<std::size_t>(c + 2)].end(),
                b.input_b.data() + (j * 2 + c) * static_cast<std::int64_t>(plane));
    }
    b.target.insert(b.target.end(), s.labels.begin(), s.labels.end());
  }
  return b;
}

std::vector<std::vector<std::size_t>> epoch_order(std::size_t n, std::size_t batch, std::uint64_t seed,
                                                  std::int64_t epoch) {
  if (batch == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "epoch", static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
  }
  return out;
}

std::vector<SliceBatch> slice_batches(const std::vector<Slice>& slices, std::size_t batch, std::uint64_t seed,
                                      std::int64_t epoch) {
  if (slices.empty()) throw DomainError("slice_batches: no slices");
  std::vector<SliceBatch> out;
  for (const auto& idx : epoch_order(slices.size(), batch, seed, epoch)) out.push_back(make_batch(slices, idx));
  return out;
}

// ---------------------------------------------------------------------------
// files

namespace {

constexpr std::uint32_t kByteOrderMark = 0x01020304u;

void write_string(std::ostream& out, const std::string& s) {
  binary::write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto len = binary::read_u32(in, "meta string length");
  if (len > (1u << 20)) throw CorruptFileError("meta string of " + std::to_string(len) + " bytes");
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (in.gcount() != static_cast<std::streamsize>(len)) throw CorruptFileError("truncated file while reading meta");
  return s;
}

}  // namespace

void save_volume(const std::filesystem::path& file, const VolumeSample& v) {
  const auto n = static_cast<std::size_t>(v.size.voxels());
  for (const auto& m : v.modalities) {
    if (m.size() != n) throw DimensionError("save_volume: modality size does not match " + to_string(v.size));
  }
  if (v.labels.size() != n) throw DimensionError("save_volume: label size does not match " + to_string(v.size));
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + file.string());
  out.write("TSV1", 4);
  binary::write_u32(out, kByteOrderMark);
  binary::write_u64(out, static_cast<std::uint64_t>(v.size.depth));
  binary::write_u64(out, static_cast<std::uint64_t>(v.size.height));
  binary::write_u64(out, static_cast<std::uint64_t>(v.size.width));
  binary::write_u64(out, v.seed);
  binary::write_u32(out, static_cast<std::uint32_t>(v.meta.size()));
  for (const auto& [k, val] : v.meta) {
    write_string(out, k);
    write_string(out, val);
  }
  for (const auto& m : v.modalities) binary::write_f32(out, m);
  binary::write_bytes(out, v.labels);
  if (!out) throw ConfigError("failed writing " + file.string());
}

VolumeSample load_volume(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CorruptFileError("cannot open volume " + file.string());
  binary::expect_magic(in, "TSV1", "volume header");
  const auto bom = binary::read_u32(in, "byte-order mark");
  if (bom != kByteOrderMark) {
    throw CorruptFileError(file.string() + ": byte-order mark does not read as little-endian");
  }
  VolumeSample v;
  v.size.depth = static_cast<std::int64_t>(binary::read_u64(in, "depth"));
  v.size.height = static_cast<std::int64_t>(binary::read_u64(in, "height"));
  v.size.width = static_cast<std::int64_t>(binary::read_u64(in, "width"));
  constexpr std::int64_t kMaxExtent = 1 << 16;
  if (v.size.depth <= 0 || v.size.height <= 0 || v.size.width <= 0 || v.size.depth > kMaxExtent ||
      v.size.height > kMaxExtent || v.size.width > kMaxExtent) {
    throw CorruptFileError(file.string() + ": implausible extents " + to_string(v.size));
  }
  v.seed = binary::read_u64(in, "seed");
  const auto meta = binary::read_u32(in, "meta count");
  if (meta > 4096) throw CorruptFileError(file.string() + ": implausible meta count");
  for (std::uint32_t i = 0; i < meta; ++i) {
    auto k = read_string(in);
    v.meta[k] = read_string(in);
  }
  const auto n = static_cast<std::size_t>(v.size.voxels());
  for (auto& m : v.modalities) {
    m.resize(n);
    binary::read_f32(in, m, "modality data");
  }
  v.labels.resize(n);
  binary::read_bytes(in, v.labels, "labels");
  for (auto l : v.labels) {
    if (l > kEnhancing) throw CorruptFileError(file.string() + ": label value " + std::to_string(l) + " out of range");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CorruptFileError(file.string() + ": trailing bytes");
  return v;
}

namespace {

std::vector<std::uint8_t> to_grey(std::span<const float> image) {
  if (image.empty()) return {};
  const auto [lo, hi] = std::minmax_element(image.begin(), image.end());
  const float range = *hi - *lo;
  std::vector<std::uint8_t> out(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    out[i] = range > 0 ? static_cast<std::uint8_t>(std::lround(255.0f * (image[i] - *lo) / range)) : 0;
  }
  return out;
}

std::ofstream open_image(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + file.string());
  return out;
}

}  // namespace

void write_pgm(const std::filesystem::path& file, std::span<const float> image, std::int64_t height,
               std::int64_t width) {
  if (static_cast<std::int64_t>(image.size()) != height * width) throw DimensionError("write_pgm: size mismatch");
  auto out = open_image(file);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  const auto grey = to_grey(image);
  out.write(reinterpret_cast<const char*>(grey.data()), static_cast<std::streamsize>(grey.size()));
}

void write_overlay_ppm(const std::filesystem::path& file, std::span<const float> image,
                       std::span<const std::uint8_t> mask, std::int64_t height, std::int64_t width) {
  if (static_cast<std::int64_t>(image.size()) != height * width || mask.size() != image.size()) {
    throw DimensionError("write_overlay_ppm: size mismatch");
  }
  auto out = open_image(file);
  out << "P6\n" << width << ' ' << height << "\n255\n";
  const auto grey = to_grey(image);
  std::vector<std::uint8_t> rgb(3 * grey.size());
  for (std::size_t i = 0; i < grey.size(); ++i) {
    if (mask[i]) {
      rgb[3 * i] = 0;
      rgb[3 * i + 1] = 255;
      rgb[3 * i + 2] = 0;
    } else {
      rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = grey[i];
    }
  }
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

}  // namespace transiam
