#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "transiam/data.hpp"
#include "transiam/errors.hpp"

namespace transiam {
namespace {

namespace fs = std::filesystem;

const Extents3 kSmall{24, 48, 48};

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("transiam_data_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

std::vector<std::uint8_t> brain_mask(const VolumeSample& v) {
  std::vector<std::uint8_t> m(v.labels.size(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (const auto& c : v.modalities) m[i] |= c[i] != 0.0f;
  }
  return m;
}

// A slice whose channel 0 is the label map, so any geometric transform that
// keeps labels aligned with images keeps channel 0 equal to the labels.
Slice label_slice(std::int64_t h, std::int64_t w) {
  Slice s;
  s.height = h;
  s.width = w;
  s.labels.resize(static_cast<std::size_t>(h * w));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      s.labels[static_cast<std::size_t>(y * w + x)] = static_cast<std::uint8_t>((3 * y + x) % 4);
    }
  }
  for (int m = 0; m < kModalities; ++m) {
    auto& c = s.channels[static_cast<std::size_t>(m)];
    c.resize(s.labels.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = m == 0 ? s.labels[i] : static_cast<float>(i) + m;
  }
  return s;
}

bool channel0_matches_labels(const Slice& s) {
  for (std::size_t i = 0; i < s.labels.size(); ++i) {
    if (s.channels[0][i] != static_cast<float>(s.labels[i])) return false;
  }
  return true;
}

TEST(Extents, ParsesAndPrints) {
  EXPECT_EQ(parse_extents("8x16x32"), (Extents3{8, 16, 32}));
  EXPECT_EQ(to_string(Extents3{8, 16, 32}), "8x16x32");
  for (const char* bad : {"", "8x16", "8x16x32x4", "8xax32", "8x16x32 ", "x16x32"}) {
    EXPECT_THROW(parse_extents(bad), ConfigError) << bad;
  }
}

TEST(Phantom, SameSeedSameVolume) {
  const auto a = generate_phantom(7, kSmall), b = generate_phantom(7, kSmall), c = generate_phantom(8, kSmall);
  EXPECT_EQ(a.labels, b.labels);
  for (int m = 0; m < kModalities; ++m) EXPECT_EQ(a.modalities[m], b.modalities[m]);
  EXPECT_NE(a.modalities[0], c.modalities[0]);
}

TEST(Phantom, NormalizedInsideZeroOutside) {
  const auto v = generate_phantom(3, kSmall);
  const auto brain = brain_mask(v);
  const auto inside = std::count(brain.begin(), brain.end(), 1);
  ASSERT_GT(inside, v.size.voxels() / 5);
  ASSERT_LT(inside, v.size.voxels());
  for (const auto& m : v.modalities) {
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!brain[i]) continue;
      sum += m[i];
      sq += double(m[i]) * m[i];
    }
    const double mean = sum / inside;
    EXPECT_NEAR(mean, 0.0, 1e-4);
    EXPECT_NEAR(std::sqrt(sq / inside - mean * mean), 1.0, 1e-4);
  }
  for (std::size_t i = 0; i < brain.size(); ++i) {
    if (!brain[i]) ASSERT_EQ(v.labels[i], kBackground);
  }
}

TEST(Phantom, LesionContrasts) {
  // Average over several volumes: edema is bright in Flair, the enhancing
  // rim bright in T1ce, the necrotic core dark in T1.
  double sums[4][kModalities] = {}, counts[4] = {};
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto v = generate_phantom(seed, kSmall);
    const auto brain = brain_mask(v);
    for (std::size_t i = 0; i < v.labels.size(); ++i) {
      if (!brain[i]) continue;
      counts[v.labels[i]] += 1;
      for (int m = 0; m < kModalities; ++m) sums[v.labels[i]][m] += v.modalities[m][i];
    }
  }
  for (int l = 0; l < 4; ++l) ASSERT_GT(counts[l], 0) << "label " << l << " never generated";
  auto mean = [&](int l, int m) { return sums[l][m] / counts[l]; };
  EXPECT_GT(mean(kEdema, kFlair), mean(kBackground, kFlair) + 1.0);
  EXPECT_GT(mean(kEnhancing, kT1ce), mean(kEdema, kT1ce) + 1.0);
  EXPECT_LT(mean(kNecrotic, kT1), mean(kBackground, kT1) - 1.0);
}

TEST(Phantom, CoreSitsInsideTumour) {
  // Every necrotic voxel has no direct background neighbour in-plane.
  const auto v = generate_phantom(11, Extents3{16, 64, 64});
  const auto H = v.size.height, W = v.size.width;
  std::int64_t checked = 0;
  for (std::int64_t z = 0; z < v.size.depth; ++z) {
    for (std::int64_t y = 1; y + 1 < H; ++y) {
      for (std::int64_t x = 1; x + 1 < W; ++x) {
        const auto i = static_cast<std::size_t>((z * H + y) * W + x);
        if (v.labels[i] != kNecrotic) continue;
        ++checked;
        for (auto d : {std::int64_t{1}, std::int64_t{-1}, W, -W}) {
          EXPECT_NE(v.labels[static_cast<std::size_t>(static_cast<std::int64_t>(i) + d)], kBackground);
        }
      }
    }
  }
  EXPECT_GT(checked, 0);
}

TEST(Phantom, ZeroLesionsMeansNoLabels) {
  PhantomConfig cfg;
  cfg.min_lesions = cfg.max_lesions = 0;
  const auto v = generate_phantom(4, kSmall, cfg);
  EXPECT_TRUE(std::all_of(v.labels.begin(), v.labels.end(), [](std::uint8_t l) { return l == kBackground; }));
}

TEST(Phantom, LesionVoxelsStandOutInTwoModalities) {
  // Local background is the lesion-free brain of the same axial slice; a
  // voxel stands out in a modality when it is at least one background
  // standard deviation away from that slice's background mean.
  const Extents3 size{16, 64, 64};
  const auto plane = static_cast<std::size_t>(size.height * size.width);
  std::int64_t lesion = 0, weak = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto v = generate_phantom(seed, size);
    const auto brain = brain_mask(v);
    for (std::int64_t z = 0; z < size.depth; ++z) {
      const std::size_t off = static_cast<std::size_t>(z) * plane;
      double mean[kModalities] = {}, sd[kModalities] = {}, n = 0;
      for (std::size_t i = off; i < off + plane; ++i) {
        if (!brain[i] || v.labels[i] != kBackground) continue;
        n += 1;
        for (int m = 0; m < kModalities; ++m) mean[m] += v.modalities[m][i];
      }
      if (n < 2) continue;
      for (auto& x : mean) x /= n;
      for (std::size_t i = off; i < off + plane; ++i) {
        if (!brain[i] || v.labels[i] != kBackground) continue;
        for (int m = 0; m < kModalities; ++m) sd[m] += (v.modalities[m][i] - mean[m]) * (v.modalities[m][i] - mean[m]);
      }
      for (auto& x : sd) x = std::sqrt(x / n);
      for (std::size_t i = off; i < off + plane; ++i) {
        if (v.labels[i] == kBackground) continue;
        ++lesion;
        int distinct = 0;
        for (int m = 0; m < kModalities; ++m) distinct += std::abs(v.modalities[m][i] - mean[m]) >= sd[m];
        weak += distinct < 2;
      }
    }
  }
  ASSERT_GT(lesion, 1000);
  EXPECT_EQ(weak, 0) << "of " << lesion << " lesion voxels";
}

TEST(Phantom, ClassFrequencies) {
  const Extents3 size{16, 64, 64};
  int lesioned = 0, present[4] = {};
  std::int64_t background = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto v = generate_phantom(seed, size);
    bool seen[4] = {};
    for (auto l : v.labels) seen[l] = true;
    background += std::count(v.labels.begin(), v.labels.end(), kBackground);
    total += size.voxels();
    if (!(seen[1] || seen[2] || seen[3])) continue;
    ++lesioned;
    for (int l = 1; l < 4; ++l) present[l] += seen[l];
  }
  EXPECT_GE(static_cast<double>(background) / static_cast<double>(total), 0.8);
  ASSERT_GT(lesioned, 0);
  for (int l = 1; l < 4; ++l) EXPECT_GE(present[l], 0.9 * lesioned) << "label " << l;
}

TEST(Phantom, RejectsDegenerateSizes) {
  EXPECT_THROW(generate_phantom(0, Extents3{8, 64, 64}), DimensionError);
  PhantomConfig cfg;
  cfg.min_lesions = 3;
  cfg.max_lesions = 2;
  EXPECT_THROW(generate_phantom(0, kSmall, cfg), ConfigError);
}

TEST(Crop, MultiplesOfEightAndNothingLost) {
  const auto v = generate_phantom(5, Extents3{30, 50, 70});
  const auto c = crop_background(v);
  EXPECT_EQ(c.size.depth % 8, 0);
  EXPECT_EQ(c.size.height % 8, 0);
  EXPECT_EQ(c.size.width % 8, 0);
  EXPECT_LT(c.size.voxels(), v.size.voxels());
  const auto oz = std::stoll(c.meta.at("crop_z")), oy = std::stoll(c.meta.at("crop_y")),
             ox = std::stoll(c.meta.at("crop_x"));
  // every source voxel inside the brain appears at its shifted position
  std::size_t i = 0;
  for (std::int64_t z = 0; z < v.size.depth; ++z) {
    for (std::int64_t y = 0; y < v.size.height; ++y) {
      for (std::int64_t x = 0; x < v.size.width; ++x, ++i) {
        if (v.modalities[0][i] == 0.0f) continue;
        const auto cz = z - oz, cy = y - oy, cx = x - ox;
        ASSERT_TRUE(cz >= 0 && cy >= 0 && cx >= 0 && cz < c.size.depth && cy < c.size.height && cx < c.size.width);
        const auto j = static_cast<std::size_t>((cz * c.size.height + cy) * c.size.width + cx);
        ASSERT_EQ(c.modalities[0][j], v.modalities[0][i]);
        ASSERT_EQ(c.labels[j], v.labels[i]);
      }
    }
  }
}

TEST(Crop, EmptyBrainIsAnError) {
  VolumeSample v;
  v.size = {8, 8, 8};
  for (auto& m : v.modalities) m.assign(512, 0.0f);
  v.labels.assign(512, 0);
  EXPECT_THROW(crop_background(v), DomainError);
}

TEST(Slices, AxialSliceCopiesThePlane) {
  const auto v = generate_phantom(2, kSmall);
  const auto s = axial_slice(v, 5);
  const auto plane = static_cast<std::size_t>(kSmall.height * kSmall.width);
  EXPECT_EQ(s.pixels(), static_cast<std::int64_t>(plane));
  EXPECT_TRUE(std::equal(s.labels.begin(), s.labels.end(), v.labels.begin() + 5 * plane));
  EXPECT_TRUE(std::equal(s.channels[kFlair].begin(), s.channels[kFlair].end(), v.modalities[kFlair].begin() + 5 * plane));
  EXPECT_THROW(axial_slice(v, kSmall.depth), DimensionError);
}

TEST(Slices, SelectionHonoursForegroundAndQuota) {
  std::vector<VolumeSample> vols{generate_phantom(1, kSmall), generate_phantom(2, kSmall)};
  SliceSelection sel;
  sel.min_foreground = 20;
  const auto fg = select_slices(vols, sel, 0);
  ASSERT_FALSE(fg.empty());
  for (const auto& s : fg) EXPECT_GE(s.foreground(), 20);

  sel.background_quota = 0.5;
  const auto mixed = select_slices(vols, sel, 0);
  const auto bg = std::count_if(mixed.begin(), mixed.end(), [](const Slice& s) { return s.foreground() == 0; });
  EXPECT_EQ(static_cast<std::size_t>(bg), mixed.size() - fg.size());
  long long empty = 0;
  for (const auto& v : vols) {
    for (std::int64_t z = 0; z < v.size.depth; ++z) empty += axial_slice(v, z).foreground() == 0;
  }
  EXPECT_EQ(bg, std::min(empty, std::llround(0.5 * static_cast<double>(fg.size()))));
  EXPECT_GT(bg, 0);
}

TEST(Augment, TraceReplaysExactly) {
  const auto s = axial_slice(generate_phantom(4, kSmall), 12);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    AugmentTrace t;
    const auto a = augment(s, seed, {}, &t);
    const auto b = apply_augment(s, t);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.channels[2], b.channels[2]);
    EXPECT_EQ(a.height, s.height);
    EXPECT_EQ(a.width, s.width);
  }
}

TEST(Augment, IdentityTraceChangesNothing) {
  const auto s = label_slice(16, 16);
  const auto out = apply_augment(s, AugmentTrace{});
  EXPECT_EQ(out.labels, s.labels);
  EXPECT_EQ(out.channels[1], s.channels[1]);
}

TEST(Augment, FlipTwiceAndFourTurnsAreIdentity) {
  const auto s = label_slice(12, 12);
  for (bool vertical : {false, true}) {
    AugmentTrace t;
    t.flipped = true;
    t.flip_vertical = vertical;
    EXPECT_EQ(apply_augment(apply_augment(s, t), t).channels[3], s.channels[3]);
  }
  AugmentTrace r;
  r.rotated = true;
  r.quarter_turns = 1;
  auto cur = s;
  for (int i = 0; i < 4; ++i) cur = apply_augment(cur, r);
  EXPECT_EQ(cur.channels[3], s.channels[3]);
  EXPECT_EQ(cur.labels, s.labels);
}

TEST(Augment, ZeroTurnsIsIdentity) {
  const auto s = label_slice(10, 10);
  AugmentTrace r;
  r.rotated = true;
  r.quarter_turns = 0;
  EXPECT_EQ(apply_augment(s, r).channels[2], s.channels[2]);
}

TEST(Augment, QuarterTurnMovesCorners) {
  // counter-clockwise: the top-right pixel lands at the top-left
  const auto s = label_slice(4, 4);
  AugmentTrace r;
  r.rotated = true;
  r.quarter_turns = 1;
  const auto o = apply_augment(s, r);
  EXPECT_EQ(o.channels[1][0], s.channels[1][3]);
  EXPECT_EQ(o.channels[1][12], s.channels[1][0]);
}

TEST(Augment, LabelsMoveWithImages) {
  // Flip, rotation and crop are exact permutations of pixels; the label map
  // must follow channel 0 everywhere.
  const auto s = label_slice(20, 20);
  AugmentConfig cfg;
  cfg.probability = 1.0;
  cfg.min_scale = cfg.max_scale = 1.0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    AugmentTrace t;
    const auto out = augment(s, seed, cfg, &t);
    EXPECT_TRUE(t.flipped && t.rotated && t.cropped);
    EXPECT_TRUE(channel0_matches_labels(out)) << "seed " << seed;
  }
}

TEST(Augment, ZoomKeepsLabelsNearest) {
  auto s = label_slice(32, 32);
  // blocky labels so bilinear and nearest agree away from edges
  for (std::int64_t y = 0; y < 32; ++y) {
    for (std::int64_t x = 0; x < 32; ++x) {
      const auto l = static_cast<std::uint8_t>((y / 8 + x / 8) % 4);
      s.labels[static_cast<std::size_t>(y * 32 + x)] = l;
      s.channels[0][static_cast<std::size_t>(y * 32 + x)] = l;
    }
  }
  AugmentTrace t;
  t.scaled = true;
  t.factor = 1.1;
  const auto o = apply_augment(s, t);
  std::set<std::uint8_t> values(o.labels.begin(), o.labels.end());
  for (auto v : values) EXPECT_LE(v, 3);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < o.labels.size(); ++i) agree += std::abs(o.channels[0][i] - o.labels[i]) < 0.5f;
  EXPECT_GT(static_cast<double>(agree) / static_cast<double>(o.labels.size()), 0.85);
}

TEST(Augment, EachTransformFiresAboutHalfTheTime) {
  const auto s = label_slice(16, 16);
  int fired[4] = {};
  constexpr int kDraws = 1000;
  for (int i = 0; i < kDraws; ++i) {
    AugmentTrace t;
    augment(s, static_cast<std::uint64_t>(i), {}, &t);
    fired[0] += t.flipped;
    fired[1] += t.rotated;
    fired[2] += t.scaled;
    fired[3] += t.cropped;
    if (t.scaled) {
      EXPECT_GE(t.factor, 0.9);
      EXPECT_LE(t.factor, 1.1);
    }
    if (t.cropped) {
      EXPECT_LE(std::abs(t.crop_dy), 8);
      EXPECT_LE(std::abs(t.crop_dx), 8);
    }
  }
  // binomial sd is about 16; 5 sd either side
  for (int f : fired) {
    EXPECT_GT(f, 420);
    EXPECT_LT(f, 580);
  }
}

TEST(Augment, NonSquareOnlyHalfTurns) {
  const auto s = label_slice(8, 16);
  AugmentConfig cfg;
  cfg.probability = 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    AugmentTrace t;
    const auto o = augment(s, seed, cfg, &t);
    EXPECT_EQ(t.quarter_turns, 2);
    EXPECT_EQ(o.height, 8);
  }
}

TEST(Batches, SplitsPathsAndKeepsTargets) {
  std::vector<Slice> slices{label_slice(8, 8), label_slice(8, 8), label_slice(8, 8)};
  slices[1].channels[kFlair][5] = 42.0f;
  const std::vector<std::size_t> idx{2, 1};
  const auto b = make_batch(slices, idx);
  EXPECT_EQ(b.input_a.shape(), (Shape{2, 2, 8, 8}));
  EXPECT_EQ(b.input_b.shape(), (Shape{2, 2, 8, 8}));
  EXPECT_EQ(b.target.size(), 128u);
  // batch item 1, path B channel 0 is Flair of slice 1
  EXPECT_EQ(b.input_b.values()[(1 * 2 + 0) * 64 + 5], 42.0f);
  EXPECT_EQ(b.input_a.values()[(0 * 2 + 1) * 64 + 7], slices[2].channels[kT1ce][7]);
  EXPECT_EQ(b.input_b.values()[(0 * 2 + 1) * 64 + 7], slices[2].channels[kT2][7]);

  slices.push_back(label_slice(8, 16));
  const std::vector<std::size_t> bad{0, 3};
  EXPECT_THROW(make_batch(slices, bad), DimensionError);
}

TEST(Batches, EpochOrderIsASeededPartition) {
  const auto a = epoch_order(10, 4, 9, 0);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a.back().size(), 2u);
  std::vector<std::size_t> all;
  for (const auto& b : a) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> want(10);
  std::iota(want.begin(), want.end(), 0);
  EXPECT_EQ(all, want);
  EXPECT_EQ(epoch_order(10, 4, 9, 0), a);
  EXPECT_NE(epoch_order(10, 4, 9, 1), a);
  EXPECT_THROW(epoch_order(10, 0, 9, 0), ConfigError);
}

TEST(Batches, SingleBatchesCoverEverySliceOnce) {
  std::vector<VolumeSample> vols{generate_phantom(31, kSmall)};
  const auto slices = select_slices(vols, {}, 0);
  const auto batches = slice_batches(slices, 1, 5, 0);
  ASSERT_EQ(batches.size(), slices.size());
  // every slice shows up once: match on the T1 plane, which is channel 0 of path A
  std::vector<int> hits(slices.size(), 0);
  for (const auto& b : batches) {
    const auto v = b.input_a.values();
    for (std::size_t k = 0; k < slices.size(); ++k) {
      if (std::equal(slices[k].channels[kT1].begin(), slices[k].channels[kT1].end(), v.begin())) ++hits[k];
    }
  }
  EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  EXPECT_THROW(slice_batches({}, 1, 5, 0), DomainError);
}

TEST(Files, VolumeRoundTripIsBitExact) {
  auto v = generate_phantom(21, kSmall);
  v.meta["note"] = "hello";
  const auto file = scratch("round.tsv");
  save_volume(file, v);
  const auto back = load_volume(file);
  EXPECT_EQ(back.size, v.size);
  EXPECT_EQ(back.seed, v.seed);
  EXPECT_EQ(back.meta, v.meta);
  EXPECT_EQ(back.labels, v.labels);
  for (int m = 0; m < kModalities; ++m) EXPECT_EQ(back.modalities[m], v.modalities[m]);
}

TEST(Files, DamagedVolumesAreRejected) {
  const auto v = generate_phantom(22, Extents3{16, 16, 16});
  const auto file = scratch("damaged.tsv");
  save_volume(file, v);
  const auto size = fs::file_size(file);

  fs::resize_file(file, size - 10);
  EXPECT_THROW(load_volume(file), CorruptFileError);

  save_volume(file, v);
  {
    std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char swapped[4] = {1, 2, 3, 4};  // big-endian writer
    f.write(swapped, 4);
  }
  EXPECT_THROW(load_volume(file), CorruptFileError);

  save_volume(file, v);
  {
    std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(size - 1));
    f.put(9);  // label out of range
  }
  EXPECT_THROW(load_volume(file), CorruptFileError);

  EXPECT_THROW(load_volume(scratch("missing.tsv")), CorruptFileError);
}

TEST(Files, ImagesHaveNetpbmHeaders) {
  const auto s = label_slice(4, 6);
  const auto pgm = scratch("x.pgm"), ppm = scratch("x.ppm");
  write_pgm(pgm, s.channels[1], 4, 6);
  write_overlay_ppm(ppm, s.channels[1], s.labels, 4, 6);
  std::ifstream a(pgm, std::ios::binary), b(ppm, std::ios::binary);
  std::string magic;
  a >> magic;
  EXPECT_EQ(magic, "P5");
  b >> magic;
  EXPECT_EQ(magic, "P6");
  EXPECT_EQ(fs::file_size(pgm), std::string("P5\n6 4\n255\n").size() + 24);
  EXPECT_EQ(fs::file_size(ppm), std::string("P6\n6 4\n255\n").size() + 72);
  EXPECT_THROW(write_pgm(pgm, s.channels[1], 5, 6), DimensionError);
}

}  // namespace
}  // namespace transiam
