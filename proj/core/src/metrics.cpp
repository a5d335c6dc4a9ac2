#include "transiam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "transiam/errors.hpp"

namespace transiam {

namespace {

void check_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": masks of " + std::to_string(a) + " and " + std::to_string(b) +
                         " voxels");
  }
}

void check_extents(std::size_t n, Extents3 size) {
  if (static_cast<std::int64_t>(n) != size.voxels()) {
    throw DimensionError("mask of " + std::to_string(n) + " voxels does not match " + to_string(size));
  }
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas: d[i] = min_j (f[j] + (i - j)^2), in place over
// a strided line. Exact for integer inputs.
void distance_1d(double* f, std::int64_t n, std::int64_t stride, std::vector<double>& d, std::vector<std::int64_t>& v,
                 std::vector<double>& z) {
  d.resize(static_cast<std::size_t>(n));
  v.resize(static_cast<std::size_t>(n));
  z.resize(static_cast<std::size_t>(n + 1));
  auto F = [&](std::int64_t i) { return f[i * stride]; };
  std::int64_t k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    if (F(q) == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    auto cross = [&](std::int64_t p) {
      return ((F(q) + double(q) * q) - (F(p) + double(p) * p)) / (2.0 * double(q - p));
    };
    // z[0] is -inf, so this stops at k = 0 at the latest
    double s = cross(v[static_cast<std::size_t>(k)]);
    while (s <= z[static_cast<std::size_t>(k)]) s = cross(v[static_cast<std::size_t>(--k)]);
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k + 1)] = kInf;
  }
  if (k < 0) return;  // line is empty; stays infinite
  std::int64_t j = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j + 1)] < double(q)) ++j;
    const auto p = v[static_cast<std::size_t>(j)];
    d[static_cast<std::size_t>(q)] = double(q - p) * double(q - p) + F(p);
  }
  for (std::int64_t q = 0; q < n; ++q) f[q * stride] = d[static_cast<std::size_t>(q)];
}

std::string fmt(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string fmt(const std::optional<double>& v, int decimals) { return v ? fmt(*v, decimals) : "undefined"; }

}  // namespace

std::vector<std::uint8_t> whole_tumor(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > kEnhancing) {
      throw DomainError("label " + std::to_string(labels[i]) + " at voxel " + std::to_string(i) + " is not in 0..3");
    }
    out[i] = labels[i] != kBackground;
  }
  return out;
}

double dice_score(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  check_same(pred.size(), gt.size(), "dice_score");
  std::int64_t both = 0, p = 0, g = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] != 0, b = gt[i] != 0;
    both += a && b;
    p += a;
    g += b;
  }
  if (p + g == 0) return 100.0;
  return 100.0 * 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  check_same(pred.size(), gt.size(), "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] != 0, b = gt[i] != 0;
    c.tp += a && b;
    c.fp += a && !b;
    c.fn += !a && b;
    c.tn += !a && !b;
  }
  return c;
}

std::optional<double> sensitivity(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) return std::nullopt;
  return 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

std::optional<double> specificity(const ConfusionCounts& c) {
  if (c.tn + c.fp == 0) return std::nullopt;
  return 100.0 * static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
}

std::vector<std::uint8_t> boundary(std::span<const std::uint8_t> mask, Extents3 size) {
  check_extents(mask.size(), size);
  const std::int64_t D = size.depth, H = size.height, W = size.width;
  std::vector<std::uint8_t> out(mask.size(), 0);
  std::size_t i = 0;
  for (std::int64_t z = 0; z < D; ++z) {
    for (std::int64_t y = 0; y < H; ++y) {
      for (std::int64_t x = 0; x < W; ++x, ++i) {
        if (!mask[i]) continue;
        auto bg = [&](std::int64_t zz, std::int64_t yy, std::int64_t xx) {
          if (zz < 0 || yy < 0 || xx < 0 || zz >= D || yy >= H || xx >= W) return true;
          return mask[static_cast<std::size_t>((zz * H + yy) * W + xx)] == 0;
        };
        bool edge = false;
        if (D > 1) edge = edge || bg(z - 1, y, x) || bg(z + 1, y, x);
        if (H > 1) edge = edge || bg(z, y - 1, x) || bg(z, y + 1, x);
        if (W > 1) edge = edge || bg(z, y, x - 1) || bg(z, y, x + 1);
        out[i] = edge;
      }
    }
  }
  return out;
}

std::vector<double> squared_distance_transform(std::span<const std::uint8_t> mask, Extents3 size) {
  check_extents(mask.size(), size);
  const std::int64_t D = size.depth, H = size.height, W = size.width;
  std::vector<double> f(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) f[i] = mask[i] ? 0.0 : kInf;
  std::vector<double> d, z;
  std::vector<std::int64_t> v;
  for (std::int64_t a = 0; a < D * H; ++a) distance_1d(f.data() + a * W, W, 1, d, v, z);
  for (std::int64_t a = 0; a < D; ++a) {
    for (std::int64_t x = 0; x < W; ++x) distance_1d(f.data() + a * H * W + x, H, W, d, v, z);
  }
  for (std::int64_t a = 0; a < H * W; ++a) distance_1d(f.data() + a, D, H * W, d, v, z);
  return f;
}

std::optional<double> boundary_distance(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                                        Extents3 size, double q) {
  check_same(pred.size(), gt.size(), "boundary_distance");
  if (!(q > 0.0 && q <= 1.0)) throw DomainError("boundary_distance: quantile must be in (0, 1]");
  const auto bp = boundary(pred, size), bg = boundary(gt, size);
  const auto any = [](const std::vector<std::uint8_t>& m) { return std::find(m.begin(), m.end(), 1) != m.end(); };
  if (!any(bp) || !any(bg)) return std::nullopt;

  auto directed = [&](const std::vector<std::uint8_t>& from, const std::vector<std::uint8_t>& to) {
    const auto dt = squared_distance_transform(to, size);
    std::vector<double> d;
    for (std::size_t i = 0; i < from.size(); ++i) {
      if (from[i]) d.push_back(dt[i]);
    }
    // nearest rank: the ceil(q n)-th order statistic; the slack keeps
    // 0.95 * 100 from rounding up to 96
    const auto n = d.size();
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(rank - 1), d.end());
    return std::sqrt(d[rank - 1]);
  };
  return std::max(directed(bp, bg), directed(bg, bp));
}

MetricRow evaluate(std::span<const std::uint8_t> pred_labels, std::span<const std::uint8_t> gt_labels,
                   Extents3 size, const std::string& case_id) {
  check_same(pred_labels.size(), gt_labels.size(), "evaluate");
  const auto p = whole_tumor(pred_labels), g = whole_tumor(gt_labels);
  const auto c = confusion(p, g);
  MetricRow row;
  row.case_id = case_id;
  row.dice = dice_score(p, g);
  row.sensitivity = sensitivity(c);
  row.specificity = specificity(c);
  row.hd95 = hd95(p, g, size);
  return row;
}

MetricRow MetricReport::mean() const {
  MetricRow m;
  m.case_id = "mean";
  if (rows.empty()) return m;
  auto avg = [&](auto get) -> std::optional<double> {
    double sum = 0;
    int n = 0;
    for (const auto& r : rows) {
      if (auto v = get(r)) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
  };
  m.dice = *avg([](const MetricRow& r) { return std::optional<double>(r.dice); });
  m.sensitivity = avg([](const MetricRow& r) { return r.sensitivity; });
  m.specificity = avg([](const MetricRow& r) { return r.specificity; });
  m.hd95 = avg([](const MetricRow& r) { return r.hd95; });
  return m;
}

std::int64_t MetricReport::undefined_hd95() const {
  return std::count_if(rows.begin(), rows.end(), [](const MetricRow& r) { return !r.hd95; });
}

void MetricReport::write_csv(std::ostream& out) const {
  for (const auto& n : notes) out << "# " << n << '\n';
  if (const auto u = undefined_hd95()) out << "# hd95 undefined for " << u << " case(s), excluded from the mean\n";
  out << "case,dice,sensitivity,specificity,hd95\n";
  auto line = [&](const MetricRow& r) {
    out << r.case_id << ',' << fmt(r.dice, 6) << ',' << fmt(r.sensitivity, 6) << ',' << fmt(r.specificity, 6) << ','
        << fmt(r.hd95, 6) << '\n';
  };
  for (const auto& r : rows) line(r);
  line(mean());
}

void MetricReport::write_table(std::ostream& out) const {
  std::size_t w = 4;
  for (const auto& r : rows) w = std::max(w, r.case_id.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %11s  %11s  %9s\n", static_cast<int>(w), "Case", "Dice(%)",
                "Sensitivity", "Specificity", "HD95");
  out << buf;
  auto line = [&](const MetricRow& r) {
    std::snprintf(buf, sizeof buf, "%-*s  %9s  %11s  %11s  %9s\n", static_cast<int>(w), r.case_id.c_str(),
                  fmt(r.dice, 2).c_str(), fmt(r.sensitivity, 2).c_str(), fmt(r.specificity, 2).c_str(),
                  fmt(r.hd95, 2).c_str());
    out << buf;
  };
  for (const auto& r : rows) line(r);
  out << std::string(w + 52, '-') << '\n';
  line(mean());
}

}  // namespace transiam
