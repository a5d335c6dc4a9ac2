#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "transiam/tensor.hpp"

namespace transiam {

/// Channel order of a sample. Path A sees (T1, T1ce), path B (Flair, T2).
enum Modality : int { kT1 = 0, kT1ce = 1, kFlair = 2, kT2 = 3 };
inline constexpr int kModalities = 4;

/// Label values.
enum Label : std::uint8_t { kBackground = 0, kNecrotic = 1, kEdema = 2, kEnhancing = 3 };

struct Extents3 {
  std::int64_t depth = 0, height = 0, width = 0;
  std::int64_t voxels() const { return depth * height * width; }
  friend bool operator==(const Extents3&, const Extents3&) = default;
};

/// Parses "DxHxW".
Extents3 parse_extents(const std::string& text);
std::string to_string(const Extents3& e);

struct VolumeSample {
  Extents3 size;
  std::array<std::vector<float>, kModalities> modalities;  // each z-major, then y, then x
  std::vector<std::uint8_t> labels;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> meta;
};

struct PhantomConfig {
  int min_lesions = 1;
  int max_lesions = 3;
  double noise_sigma = 0.1;
  /// Edema radius range as a fraction of the smaller in-plane extent.
  double min_radius = 0.10;
  double max_radius = 0.20;
};

/// Ellipsoidal brain with nested lesions (necrotic core inside an enhancing
/// rim inside edema). Modalities are normalized to zero mean and unit
/// variance over the brain; everything outside the brain is exactly zero.
VolumeSample generate_phantom(std::uint64_t seed, Extents3 size, const PhantomConfig& cfg = {});

/// Bounding box of the brain (voxels where any modality is nonzero), grown
/// to multiples of 8 on every axis. Voxels beyond the source are zero.
/// meta gains crop_z, crop_y, crop_x: the source coordinate of output (0,0,0).
VolumeSample crop_background(const VolumeSample& v);

// ---------------------------------------------------------------------------
// 2D slices

struct Slice {
  std::int64_t height = 0, width = 0;
  std::array<std::vector<float>, kModalities> channels;
  std::vector<std::uint8_t> labels;

  std::int64_t pixels() const { return height * width; }
  std::int64_t foreground() const;
};

Slice axial_slice(const VolumeSample& v, std::int64_t z);

struct AugmentConfig {
  double probability = 0.5;  // per transform
  double min_scale = 0.9;
  double max_scale = 1.1;
  std::int64_t crop_margin = 8;  // reflect padding before the random crop
};

/// What augment() did, for statistics and tests.
struct AugmentTrace {
  bool flipped = false, rotated = false, scaled = false, cropped = false;
  bool flip_vertical = false;
  int quarter_turns = 0;
  double factor = 1.0;
  std::int64_t crop_dy = 0, crop_dx = 0;
};

/// Each transform fires independently with cfg.probability: flip (horizontal
/// or vertical), rotation by a multiple of 90 degrees (180 only on
/// non-square slices), zoom about the centre (bilinear images, nearest
/// labels), random crop after reflect padding. The output keeps the input
/// extents; all channels and the labels move together.
Slice augment(const Slice& s, std::uint64_t seed, const AugmentConfig& cfg = {},
              AugmentTrace* trace = nullptr);

/// Applies exactly the transforms recorded in `t` (which need not have fired
/// at random). augment() is draw-then-apply.
Slice apply_augment(const Slice& s, const AugmentTrace& t);

struct SliceSelection {
  std::int64_t min_foreground = 1;
  /// Background-only slices kept, as a fraction of the foreground slices.
  double background_quota = 0.0;
};

/// Axial slices of every volume meeting the selection, in volume order then
/// z order, with the background quota drawn by `seed`.
std::vector<Slice> select_slices(const std::vector<VolumeSample>& volumes, const SliceSelection& sel,
                                 std::uint64_t seed);

struct SliceBatch {
  Tensor<float> input_a;  // batch x 2 x H x W: T1, T1ce
  Tensor<float> input_b;  // batch x 2 x H x W: Flair, T2
  std::vector<std::uint8_t> target;  // batch x H x W
};

SliceBatch make_batch(const std::vector<Slice>& slices, std::span<const std::size_t> indices);

/// Shuffled partition of [0, n) into batches of `batch` (the last may be
/// short). The order depends only on (seed, epoch).
std::vector<std::vector<std::size_t>> epoch_order(std::size_t n, std::size_t batch, std::uint64_t seed,
                                                  std::int64_t epoch);

/// One epoch of batches over `slices`, unaugmented.
std::vector<SliceBatch> slice_batches(const std::vector<Slice>& slices, std::size_t batch,
                                      std::uint64_t seed, std::int64_t epoch = 0);

// ---------------------------------------------------------------------------
// files

/// Volume file: "TSV1", byte-order mark 0x01020304 (u32), extents (u64 x3),
/// seed (u64), meta count (u32) with length-prefixed key/value strings, the
/// four modalities as little-endian f32, then one byte per label.
void save_volume(const std::filesystem::path& file, const VolumeSample& v);
VolumeSample load_volume(const std::filesystem::path& file);

/// Binary PGM of one channel, min-max scaled to 0..255.
void write_pgm(const std::filesystem::path& file, std::span<const float> image, std::int64_t height,
               std::int64_t width);

/// Binary PPM: the grey image with `mask` pixels painted green.
void write_overlay_ppm(const std::filesystem::path& file, std::span<const float> image,
                       std::span<const std::uint8_t> mask, std::int64_t height, std::int64_t width);

}  // namespace transiam
