#include <algorithm>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "transiam/errors.hpp"
#include "transiam/metrics.hpp"
#include "transiam/rng.hpp"
#include "metric_oracles.hpp"

namespace transiam {
namespace {

using Mask = std::vector<std::uint8_t>;

Mask mask_with(Extents3 size, std::initializer_list<std::array<std::int64_t, 3>> on) {
  Mask m(static_cast<std::size_t>(size.voxels()), 0);
  for (auto [z, y, x] : on) m[static_cast<std::size_t>((z * size.height + y) * size.width + x)] = 1;
  return m;
}

using oracle::boundary_points;
using oracle::brute_hd;
using oracle::random_blobby;

TEST(WholeTumor, UnionOfLesionLabels) {
  const std::vector<std::uint8_t> labels{0, 1, 2, 3, 0, 2};
  EXPECT_EQ(whole_tumor(labels), (Mask{0, 1, 1, 1, 0, 1}));
  EXPECT_EQ(whole_tumor(std::vector<std::uint8_t>(5, 0)), Mask(5, 0));
  EXPECT_THROW(whole_tumor(std::vector<std::uint8_t>{0, 4}), DomainError);
}

TEST(Dice, UnitValues) {
  const Mask a{1, 1, 1, 1, 0, 0, 0, 0}, b{0, 0, 1, 1, 1, 1, 0, 0}, c{0, 0, 0, 0, 1, 1, 1, 1};
  EXPECT_EQ(dice_score(a, a), 100.0);
  EXPECT_EQ(dice_score(a, c), 0.0);
  EXPECT_EQ(dice_score(a, b), 50.0);
  EXPECT_EQ(dice_score(b, a), dice_score(a, b));
  EXPECT_EQ(dice_score(Mask(8, 0), Mask(8, 0)), 100.0);
  EXPECT_EQ(dice_score(Mask(8, 0), a), 0.0);
  EXPECT_THROW(dice_score(a, Mask(7, 0)), DimensionError);
}

TEST(Confusion, SensitivitySpecificity) {
  const Mask gt{1, 1, 1, 1, 0, 0};
  const auto perfect = confusion(gt, gt);
  EXPECT_EQ(perfect.total(), 6);
  EXPECT_EQ(*sensitivity(perfect), 100.0);
  EXPECT_EQ(*specificity(perfect), 100.0);

  const auto all = confusion(Mask(6, 1), gt);
  EXPECT_EQ(*sensitivity(all), 100.0);
  EXPECT_EQ(*specificity(all), 0.0);

  EXPECT_EQ(*sensitivity(ConfusionCounts{3, 0, 0, 1}), 75.0);
  EXPECT_FALSE(sensitivity(confusion(Mask(4, 0), Mask(4, 0))).has_value());
  EXPECT_FALSE(specificity(confusion(Mask(4, 1), Mask(4, 1))).has_value());
}

TEST(Hd95, UnitValues) {
  const Extents3 s{1, 10, 10};
  const auto a = mask_with(s, {{0, 2, 1}}), b = mask_with(s, {{0, 2, 6}});
  EXPECT_EQ(*hd95(a, b, s), 5.0);
  EXPECT_EQ(*hd95(a, a, s), 0.0);
  EXPECT_FALSE(hd95(a, Mask(100, 0), s).has_value());
  // 3-4-5 triangle in 3D
  const Extents3 v{4, 8, 8};
  EXPECT_EQ(*hd95(mask_with(v, {{1, 0, 0}}), mask_with(v, {{1, 3, 4}}), v), 5.0);
}

TEST(Hd95, BoundaryIgnoresUnitAxes) {
  const Extents3 s{1, 5, 5};
  Mask full(25, 0);
  for (std::int64_t y = 1; y < 4; ++y) {
    for (std::int64_t x = 1; x < 4; ++x) full[static_cast<std::size_t>(y * 5 + x)] = 1;
  }
  const auto b = boundary(full, s);
  EXPECT_EQ(std::count(b.begin(), b.end(), 1), 8);
  EXPECT_EQ(b[12], 0);  // centre has four foreground neighbours
}

TEST(Hd95, MatchesBruteForceOnRandomPairs) {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const Extents3 s = trial % 2 ? Extents3{1, 12 + trial % 5, 9 + trial % 7} : Extents3{3 + trial % 3, 7, 8};
    const double p = rng.uniform(0.05, 0.5);
    const auto a = random_blobby(rng, s, p), b = random_blobby(rng, s, p);
    const auto want = brute_hd(a, b, s, 95), got = hd95(a, b, s);
    ASSERT_EQ(want.has_value(), got.has_value()) << "trial " << trial;
    if (!want) continue;
    EXPECT_EQ(*got, *want) << "trial " << trial;
    // never above the full Hausdorff distance
    EXPECT_LE(*got, *boundary_distance(a, b, s, 1.0));
    EXPECT_EQ(*boundary_distance(a, b, s, 1.0), *brute_hd(a, b, s, 100));
  }
}

TEST(Hd95, SymmetricAndTranslationInvariant) {
  Rng rng(7);
  const Extents3 s{1, 24, 24};
  Mask a(576, 0), b(576, 0);
  for (std::int64_t y = 4; y < 16; ++y) {
    for (std::int64_t x = 4; x < 16; ++x) {
      a[static_cast<std::size_t>(y * 24 + x)] = rng.bernoulli(0.8);
      b[static_cast<std::size_t>(y * 24 + x)] = rng.bernoulli(0.8);
    }
  }
  auto shift = [](const Mask& m) {
    Mask o(576, 0);
    for (std::int64_t y = 0; y + 5 < 24; ++y) {
      for (std::int64_t x = 0; x + 3 < 24; ++x) o[static_cast<std::size_t>((y + 5) * 24 + x + 3)] = m[static_cast<std::size_t>(y * 24 + x)];
    }
    return o;
  };
  EXPECT_EQ(*hd95(a, b, s), *hd95(b, a, s));
  EXPECT_EQ(*hd95(a, b, s), *hd95(shift(a), shift(b), s));
  EXPECT_EQ(dice_score(a, b), dice_score(shift(a), shift(b)));
  const auto c1 = confusion(a, b), c2 = confusion(shift(a), shift(b));
  EXPECT_EQ(*sensitivity(c1), *sensitivity(c2));
  EXPECT_EQ(*specificity(c1), *specificity(c2));
}

TEST(DistanceTransform, MatchesBruteForce) {
  Rng rng(3);
  const Extents3 s{3, 6, 7};
  const auto m = random_blobby(rng, s, 0.1);
  const auto dt = squared_distance_transform(m, s);
  std::size_t i = 0;
  for (std::int64_t z = 0; z < s.depth; ++z) {
    for (std::int64_t y = 0; y < s.height; ++y) {
      for (std::int64_t x = 0; x < s.width; ++x, ++i) {
        double best = INFINITY;
        std::size_t j = 0;
        for (std::int64_t zz = 0; zz < s.depth; ++zz) {
          for (std::int64_t yy = 0; yy < s.height; ++yy) {
            for (std::int64_t xx = 0; xx < s.width; ++xx, ++j) {
              if (m[j]) best = std::min(best, double((z - zz) * (z - zz) + (y - yy) * (y - yy) + (x - xx) * (x - xx)));
            }
          }
        }
        ASSERT_EQ(dt[i], best);
      }
    }
  }
  const auto empty = squared_distance_transform(Mask(126, 0), s);
  EXPECT_TRUE(std::all_of(empty.begin(), empty.end(), [](double d) { return std::isinf(d); }));
}

TEST(Report, PerfectCaseAndMeans) {
  const Extents3 s{1, 4, 4};
  std::vector<std::uint8_t> gt(16, 0), miss(16, 0);
  gt[5] = 2;
  gt[6] = 1;
  miss[0] = 3;
  MetricReport r;
  r.rows.push_back(evaluate(gt, gt, s, "perfect"));
  EXPECT_EQ(r.rows[0].dice, 100.0);
  EXPECT_EQ(*r.rows[0].sensitivity, 100.0);
  EXPECT_EQ(*r.rows[0].specificity, 100.0);
  EXPECT_EQ(*r.rows[0].hd95, 0.0);

  r.rows.push_back(evaluate(miss, gt, s, "disjoint"));
  r.rows.push_back(evaluate(std::vector<std::uint8_t>(16, 0), gt, s, "empty"));
  EXPECT_FALSE(r.rows[2].hd95.has_value());
  EXPECT_EQ(r.undefined_hd95(), 1);
  const auto m = r.mean();
  EXPECT_DOUBLE_EQ(m.dice, (100.0 + 0.0 + 0.0) / 3);
  EXPECT_DOUBLE_EQ(*m.hd95, (0.0 + *r.rows[1].hd95) / 2);

  std::ostringstream csv;
  r.notes.push_back("test run");
  r.write_csv(csv);
  std::istringstream in(csv.str());
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], "# test run");
  EXPECT_EQ(lines[2], "case,dice,sensitivity,specificity,hd95");
  EXPECT_EQ(lines[3].substr(0, 8), "perfect,");
  EXPECT_EQ(lines[4].substr(0, 9), "disjoint,");
  EXPECT_NE(lines[5].find("undefined"), std::string::npos);
  EXPECT_EQ(lines[6].substr(0, 5), "mean,");

  std::ostringstream table;
  r.write_table(table);
  EXPECT_NE(table.str().find("Dice(%)"), std::string::npos);
  EXPECT_NE(table.str().find("33.33"), std::string::npos);
}

TEST(Report, TwoCasesAverage) {
  MetricReport r;
  r.rows.push_back({"a", 100.0, 100.0, 100.0, 0.0});
  r.rows.push_back({"b", 0.0, 0.0, 100.0, 4.0});
  EXPECT_EQ(r.mean().dice, 50.0);
  EXPECT_EQ(*r.mean().hd95, 2.0);
}

}  // namespace
}  // namespace transiam
