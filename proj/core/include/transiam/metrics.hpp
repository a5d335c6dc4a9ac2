#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "transiam/data.hpp"

namespace transiam {

/// 1 where the label is any lesion class. Labels above 3 are a DomainError.
std::vector<std::uint8_t> whole_tumor(std::span<const std::uint8_t> labels);

/// 100 * 2|P & G| / (|P| + |G|); two empty masks agree perfectly (100).
double dice_score(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::int64_t total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

/// Percentages; empty when the denominator is zero.
std::optional<double> sensitivity(const ConfusionCounts& c);
std::optional<double> specificity(const ConfusionCounts& c);

/// Foreground voxels with at least one face neighbour in the background.
/// Outside the volume counts as background; axes of extent 1 are ignored, so
/// a 1xHxW mask is treated as a 2D image.
std::vector<std::uint8_t> boundary(std::span<const std::uint8_t> mask, Extents3 size);

/// Symmetric boundary distance at quantile q in (0, 1]: for each direction,
/// the ceil(q n)-th smallest Euclidean distance from a boundary voxel of one
/// mask to the nearest boundary voxel of the other; the larger direction
/// wins. Empty when either mask is empty. q = 1 is the Hausdorff distance.
std::optional<double> boundary_distance(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                                        Extents3 size, double q);

inline std::optional<double> hd95(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                                  Extents3 size) {
  return boundary_distance(pred, gt, size, 0.95);
}

/// Squared Euclidean distance from every voxel to the nearest set voxel of
/// `mask` (exact, separable lower-envelope transform). Infinity everywhere
/// when the mask is empty.
std::vector<double> squared_distance_transform(std::span<const std::uint8_t> mask, Extents3 size);

struct MetricRow {
  std::string case_id;
  double dice = 0.0;
  std::optional<double> sensitivity, specificity, hd95;
};

/// Whole-tumor metrics of one case from label volumes.
MetricRow evaluate(std::span<const std::uint8_t> pred_labels, std::span<const std::uint8_t> gt_labels,
                   Extents3 size, const std::string& case_id);

struct MetricReport {
  std::vector<std::string> notes;  // written as '#' lines above the CSV header
  std::vector<MetricRow> rows;

  /// Means over the cases where each metric is defined.
  MetricRow mean() const;
  std::int64_t undefined_hd95() const;

  void write_csv(std::ostream& out) const;
  void write_table(std::ostream& out) const;
};

}  // namespace transiam
