#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "transiam/blocks.hpp"
#include "transiam/grad_check.hpp"

namespace transiam {
namespace {

using oracle::max_abs_diff;
using oracle::random_tensor;

constexpr double kEps = 1e-5;

template <typename T>
void zero(Tensor<T> t) {
  if (t.defined()) std::fill(t.values().begin(), t.values().end(), T{0});
}

template <typename T>
void zero(const ConvParams<T>& p) {
  zero(p.w);
  zero(p.b);
}

std::vector<double> vec(const Tensor<double>& t) { return {t.values().begin(), t.values().end()}; }

template <typename T>
void randomize(ParamStore<T>& store, std::uint64_t seed) {
  // norm affine params start at (1, 0); perturb everything so those paths are exercised
  std::uint64_t s = seed;
  for (auto& p : store.params()) {
    auto r = random_tensor<T>(p.tensor.shape(), ++s, -0.6, 0.6);
    auto t = p.tensor;
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      t[i] = p.name.find("gamma") != std::string::npos ? T(1) + r[i] / 2 : r[i];
    }
  }
}

template <typename T>
std::vector<GradCheckInput<T>> all_params(ParamStore<T>& store) {
  std::vector<GradCheckInput<T>> in;
  for (auto& p : store.params()) in.push_back({p.name, p.tensor});
  return in;
}

// ---------------------------------------------------------------------------
// conv_block and downsample

TEST(ConvBlock, ZeroWeightsWithoutResidualGiveZero) {
  ParamStore<double> store(1);
  auto p = make_conv_block(store, "b", 2, 8);
  zero(p.conv1);
  zero(p.conv2);
  auto y = conv_block(random_tensor<double>({1, 2, 5, 5}, 2), p);
  ASSERT_EQ(y.shape(), (Shape{1, 8, 5, 5}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(ConvBlock, ResidualWhenChannelsMatch) {
  ParamStore<double> store(1);
  auto p = make_conv_block(store, "b", 8, 8);
  zero(p.conv2);
  auto x = random_tensor<double>({2, 8, 6, 4}, 3);
  auto y = conv_block(x, p);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(max_abs_diff(y, x), 0.0);
}

TEST(ConvBlock, ChannelMismatch) {
  ParamStore<double> store(1);
  auto p = make_conv_block(store, "b", 4, 8);
  EXPECT_THROW(conv_block(Tensor<double>({1, 3, 4, 4}), p), DimensionError);
}

TEST(ConvBlock, GradCheckOnThreeShapes) {
  const std::vector<std::tuple<int, int, Shape>> cases = {
      {2, 8, {1, 2, 5, 5}}, {8, 8, {2, 8, 4, 4}}, {4, 16, {1, 4, 6, 3}}};
  std::uint64_t seed = 10;
  for (const auto& [in, out, shape] : cases) {
    ParamStore<double> store(seed);
    auto p = make_conv_block(store, "b", in, out);
    randomize(store, seed * 7);
    auto x = random_tensor<double>(shape, ++seed);
    auto probe = random_tensor<double>({shape[0], out, shape[2], shape[3]}, ++seed);
    auto inputs = all_params(store);
    inputs.push_back({"x", x});
    auto r = grad_check<double>([&] { return sum(mul(conv_block(x, p), probe)); }, inputs, kEps);
    EXPECT_LE(r.max_rel_error, 1e-5) << r.worst;
  }
}

TEST(Downsample, HalvesExtents) {
  ParamStore<float> store(1);
  auto d1 = make_downsample(store, "d1", 4, 8);
  auto d2 = make_downsample(store, "d2", 8, 16);
  auto y = downsample(Tensor<float>({1, 4, 32, 32}), d1);
  EXPECT_EQ(y.shape(), (Shape{1, 8, 16, 16}));
  auto z = downsample(downsample(Tensor<float>({1, 4, 64, 64}), d1), d2);
  EXPECT_EQ(z.shape(), (Shape{1, 16, 16, 16}));
}

TEST(Downsample, SameAsStrideTwoConv) {
  ParamStore<double> store(2);
  auto d = make_downsample(store, "d", 3, 5);
  randomize(store, 5);
  auto x = random_tensor<double>({2, 3, 8, 6}, 4);
  EXPECT_EQ(max_abs_diff(downsample(x, d), conv2d(x, d.w, d.b, 2, 1)), 0.0);
}

TEST(Downsample, OddExtentAsksForPadding) {
  ParamStore<double> store(2);
  auto d = make_downsample(store, "d", 3, 5);
  try {
    downsample(Tensor<double>({1, 3, 7, 8}), d);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("pad"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// projection and attention

ProjectionWeights<double> delta_projection(std::int64_t c) {
  ProjectionWeights<double> p;
  for (auto* w : {&p.w_q, &p.w_k, &p.w_v}) {
    *w = Tensor<double>({c, 1, 3, 3});
    for (std::int64_t i = 0; i < c; ++i) (*w)[i * 9 + 4] = 1.0;
  }
  return p;
}

TEST(ConvProjection, DeltaKernelsGiveReshapedInput) {
  auto x = random_tensor<double>({1, 8, 3, 5}, 6);
  auto ctx = conv_projection(x, delta_projection(8), 2);
  auto expected = to_heads(x, 2);
  EXPECT_EQ(ctx.q.shape(), (Shape{2, 15, 4}));
  EXPECT_EQ(max_abs_diff(ctx.q, expected), 0.0);
  EXPECT_EQ(max_abs_diff(ctx.k, expected), 0.0);
  EXPECT_EQ(max_abs_diff(ctx.v, expected), 0.0);
  EXPECT_EQ(ctx.d_k, 4);
}

TEST(ConvProjection, ZeroValueKernelOnlyAffectsV) {
  auto x = random_tensor<double>({1, 4, 3, 3}, 7);
  auto pw = delta_projection(4);
  zero(pw.w_v);
  auto ctx = conv_projection(x, pw, 4);
  for (double v : ctx.v.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(max_abs_diff(ctx.q, to_heads(x, 4)), 0.0);
  EXPECT_EQ(max_abs_diff(ctx.k, to_heads(x, 4)), 0.0);
}

TEST(ConvProjection, ShapeAndErrors) {
  ParamStore<double> store(3);
  auto pw = make_projection(store, "p", 12, true);
  auto ctx = conv_projection(Tensor<double>({1, 12, 4, 5}), pw, 3);
  EXPECT_EQ(ctx.q.shape(), (Shape{3, 20, 4}));
  EXPECT_THROW(conv_projection(Tensor<double>({1, 8, 4, 5}), pw, 4), DimensionError);
  EXPECT_THROW(conv_projection(Tensor<double>({1, 12, 4, 5}), pw, 5), DimensionError);
}

TEST(MultiHeadSelfAttention, ZeroValueIsExactResidual) {
  ParamStore<double> store(4);
  auto pw = make_projection(store, "p", 8, true);
  zero(pw.w_v);
  auto x = random_tensor<double>({2, 8, 4, 4}, 8);
  auto att = multi_head_self_attention(conv_projection(x, pw, 4), x);
  EXPECT_EQ(max_abs_diff(att, x), 0.0);
}

TEST(MultiHeadSelfAttention, SinglePositionReturnsValuePlusInput) {
  ParamStore<double> store(5);
  auto pw = make_projection(store, "p", 4, true);
  auto x = random_tensor<double>({1, 4, 1, 1}, 9);
  auto ctx = conv_projection(x, pw, 2);
  auto att = multi_head_self_attention(ctx, x);
  auto expected = add(from_heads(ctx.v, 2, 1, 1), x);
  EXPECT_LE(max_abs_diff(att, expected), 1e-15);
}

TEST(MultiHeadSelfAttention, MatchesNaiveLoop) {
  for (int heads : {1, 2, 4}) {
    ParamStore<double> store(6);
    auto pw = make_projection(store, "p", 8, true);
    auto x = random_tensor<double>({1, 8, 4, 3}, 10);
    auto ctx = conv_projection(x, pw, heads);
    auto qm = vec(depthwise_conv2d(x, pw.w_q, 1, 1));
    auto km = vec(depthwise_conv2d(x, pw.w_k, 1, 1));
    auto vm = vec(depthwise_conv2d(x, pw.w_v, 1, 1));
    auto expected = oracle::multi_head(qm, km, vm, 8, 12, heads);
    auto xv = vec(x);
    for (std::size_t i = 0; i < expected.size(); ++i) expected[i] += xv[i];
    auto att = multi_head_self_attention(ctx, x);
    for (std::int64_t i = 0; i < att.numel(); ++i) EXPECT_NEAR(att[i], expected[i], 1e-6);
  }
}

// ---------------------------------------------------------------------------
// ICMT

TEST(ICMT, ZeroExtractorLeavesAttention) {
  ParamStore<double> store(7);
  auto p = make_icmt(store, "icmt", 8, 4);
  randomize(store, 3);
  zero(p.extractor);
  auto x = random_tensor<double>({1, 8, 5, 5}, 11);
  auto att = multi_head_self_attention(
      conv_projection(layer_norm(x, p.norm_attn.gamma, p.norm_attn.beta), p.proj, 4), x);
  EXPECT_EQ(max_abs_diff(icmt_block(x, p), att), 0.0);
}

TEST(ICMT, DoubleResidualIdentity) {
  for (bool conv_proj : {true, false}) {
    for (bool conv_ffn : {true, false}) {
      ParamStore<double> store(8);
      auto p = make_icmt(store, "icmt", 8, 2, conv_proj, conv_ffn);
      randomize(store, 4);
      zero(p.proj.w_v);
      zero(p.extractor);
      zero(p.mlp2);
      auto x = random_tensor<double>({2, 8, 3, 4}, 12);
      EXPECT_EQ(max_abs_diff(icmt_block(x, p), x), 0.0);
    }
  }
}

TEST(ICMT, GradCheckAllToggles) {
  const std::vector<Shape> shapes = {{1, 8, 6, 6}, {2, 8, 3, 5}, {1, 16, 4, 4}};
  std::uint64_t seed = 20;
  for (const auto& shape : shapes) {
    for (bool conv_proj : {true, false}) {
      for (bool conv_ffn : {true, false}) {
        ParamStore<double> store(++seed);
        auto p = make_icmt(store, "icmt", shape[1], 4, conv_proj, conv_ffn);
        randomize(store, ++seed);
        auto x = random_tensor<double>(shape, ++seed);
        auto probe = random_tensor<double>(shape, ++seed);
        auto inputs = all_params(store);
        inputs.push_back({"x", x});
        auto r = grad_check<double>([&] { return sum(mul(icmt_block(x, p), probe)); }, inputs, kEps);
        EXPECT_LE(r.max_rel_error, 1e-5)
            << shape_string(shape) << " conv_proj=" << conv_proj << " conv_ffn=" << conv_ffn << " "
            << r.worst;
      }
    }
  }
}

// Spatially permuting the input of a position-wise ICMT permutes its output.
TEST(ICMT, PositionWiseModeIsPermutationEquivariant) {
  ParamStore<double> store(9);
  auto p = make_icmt(store, "icmt", 8, 2, false, false);
  randomize(store, 5);
  const std::int64_t c = 8, positions = 20;
  auto x = random_tensor<double>({1, c, 4, 5}, 13);
  std::vector<std::int64_t> perm(positions);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(14);
  for (std::int64_t i = positions - 1; i > 0; --i) {
    std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
  }
  Tensor<double> xp(x.shape());
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t q = 0; q < positions; ++q) xp[ch * positions + q] = x[ch * positions + perm[q]];
  auto y = icmt_block(x, p);
  auto yp = icmt_block(xp, p);
  double worst = 0.0;
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t q = 0; q < positions; ++q)
      worst = std::max(worst, std::abs(yp[ch * positions + q] - y[ch * positions + perm[q]]));
  EXPECT_LE(worst, 1e-12);
}

// ---------------------------------------------------------------------------
// fusion and TMM

TEST(FusionBlock, ZeroCrossValueLeavesQuerySide) {
  ParamStore<double> store(10);
  auto p = make_fusion(store, "f", 4, 2);
  randomize(store, 6);
  zero(p.cross.w_v);
  auto x1 = random_tensor<double>({1, 4, 3, 3}, 15);
  auto x2 = random_tensor<double>({1, 4, 3, 3}, 16);
  FusionTrace<double> trace;
  fusion_block(x1, x2, p, &trace);
  EXPECT_EQ(max_abs_diff(trace.f, x2), 0.0);
}

TEST(FusionBlock, ZeroSelfValueAndExtractorReturnsKeySide) {
  ParamStore<double> store(11);
  auto p = make_fusion(store, "f", 4, 2);
  randomize(store, 7);
  zero(p.self.w_v);
  zero(p.extractor);
  auto x1 = random_tensor<double>({2, 4, 3, 5}, 17);
  auto x2 = random_tensor<double>({2, 4, 3, 5}, 18);
  EXPECT_EQ(max_abs_diff(fusion_block(x1, x2, p), x1), 0.0);
}

TEST(FusionBlock, MatchesStepByStepOracle) {
  const int c = 4, positions = 9;
  for (int heads : {1, 2}) {
    ParamStore<double> store(12);
    auto p = make_fusion(store, "f", c, heads);
    randomize(store, 8);
    auto x1 = random_tensor<double>({1, c, 3, 3}, 19);
    auto x2 = random_tensor<double>({1, c, 3, 3}, 20);
    int oh = 0, ow = 0;
    auto dw = [&](const std::vector<double>& m, const Tensor<double>& w) {
      return oracle::depthwise(m, vec(w), 1, c, 3, 3, 3, 3, 1, 1, oh, ow);
    };
    auto norm = [&](const std::vector<double>& m, const NormParams<double>& n) {
      return oracle::layer_norm(m, vec(n.gamma), vec(n.beta), c, positions);
    };
    // query from x2, key/value from x1
    auto n1 = norm(vec(x1), p.norm_x1);
    auto n2 = norm(vec(x2), p.norm_x2);
    auto cross = oracle::multi_head(dw(n2, p.cross.w_q), dw(n1, p.cross.w_k), dw(n1, p.cross.w_v), c,
                                    positions, heads);
    std::vector<double> f(cross.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = cross[i] + vec(x2)[i];
    auto nf = norm(f, p.norm_f);
    auto self = oracle::multi_head(dw(nf, p.self.w_q), dw(nf, p.self.w_k), dw(nf, p.self.w_v), c,
                                   positions, heads);
    auto ext = oracle::conv2d(norm(self, p.norm_out), vec(p.extractor.w), vec(p.extractor.b), 1, c,
                              3, 3, c, 3, 3, 1, 1, oh, ow);
    FusionTrace<double> trace;
    auto y = fusion_block(x1, x2, p, &trace);
    for (int i = 0; i < c * positions; ++i) {
      EXPECT_NEAR(trace.cross_att[i], cross[i], 1e-6);
      EXPECT_NEAR(trace.f[i], f[i], 1e-6);
      EXPECT_NEAR(y[i], ext[i] + x1[i], 1e-6);
    }
  }
}

TEST(FusionBlock, ShapeMismatch) {
  ParamStore<double> store(13);
  auto p = make_fusion(store, "f", 4, 2);
  EXPECT_THROW(fusion_block(Tensor<double>({1, 4, 3, 3}), Tensor<double>({1, 4, 3, 4}), p),
               DimensionError);
}

TEST(FusionBlock, GradCheck) {
  const std::vector<Shape> shapes = {{1, 4, 3, 3}, {2, 8, 4, 3}, {1, 8, 5, 5}};
  std::uint64_t seed = 40;
  for (const auto& shape : shapes) {
    ParamStore<double> store(++seed);
    auto p = make_fusion(store, "f", shape[1], 2);
    randomize(store, ++seed);
    auto x1 = random_tensor<double>(shape, ++seed);
    auto x2 = random_tensor<double>(shape, ++seed);
    auto probe = random_tensor<double>(shape, ++seed);
    auto inputs = all_params(store);
    inputs.push_back({"x1", x1});
    inputs.push_back({"x2", x2});
    auto r = grad_check<double>([&] { return sum(mul(fusion_block(x1, x2, p), probe)); }, inputs, kEps);
    EXPECT_LE(r.max_rel_error, 1e-5) << shape_string(shape) << " " << r.worst;
  }
}

TEST(TMM, MirrorSymmetry) {
  ParamStore<double> store(14);
  TMMParams<double> p{make_fusion(store, "b1", 8, 4), make_fusion(store, "b2", 8, 4)};
  randomize(store, 9);
  auto xa = random_tensor<double>({1, 8, 4, 4}, 21);
  auto xb = random_tensor<double>({1, 8, 4, 4}, 22);
  auto [ya, yb] = tmm_block(xa, xb, p);
  TMMParams<double> swapped{p.block2, p.block1};
  auto [za, zb] = tmm_block(xb, xa, swapped);
  EXPECT_EQ(max_abs_diff(ya, zb), 0.0);
  EXPECT_EQ(max_abs_diff(yb, za), 0.0);
}

TEST(TMM, ZeroValuesAndExtractorsAreIdentity) {
  ParamStore<double> store(15);
  TMMParams<double> p{make_fusion(store, "b1", 4, 2), make_fusion(store, "b2", 4, 2)};
  randomize(store, 10);
  for (auto* b : {&p.block1, &p.block2}) {
    zero(b->cross.w_v);
    zero(b->self.w_v);
    zero(b->extractor);
  }
  auto xa = random_tensor<double>({2, 4, 3, 3}, 23);
  auto xb = random_tensor<double>({2, 4, 3, 3}, 24);
  auto [ya, yb] = tmm_block(xa, xb, p);
  EXPECT_EQ(max_abs_diff(ya, xa), 0.0);
  EXPECT_EQ(max_abs_diff(yb, xb), 0.0);
}

TEST(TMM, EachOutputReachesBothInputs) {
  ParamStore<double> store(16);
  TMMParams<double> p{make_fusion(store, "b1", 4, 2), make_fusion(store, "b2", 4, 2)};
  randomize(store, 11);
  auto xa = random_tensor<double>({1, 4, 3, 3}, 25);
  auto xb = random_tensor<double>({1, 4, 3, 3}, 26);
  auto probe = random_tensor<double>({1, 4, 3, 3}, 27);
  for (int which : {0, 1}) {
    auto loss = [&] {
      auto [ya, yb] = tmm_block(xa, xb, p);
      return sum(mul(which == 0 ? ya : yb, probe));
    };
    auto r = grad_check<double>(loss, {{"xa", xa}, {"xb", xb}}, 1e-6);
    EXPECT_LE(r.max_rel_error, 1e-5) << r.worst;
    xa.clear_grad();
    xb.clear_grad();
    {
      Tape<double> tape;
      TapeScope<double> scope(tape);
      xa.set_requires_grad(true);
      xb.set_requires_grad(true);
      backward(loss());
    }
    auto norm = [](const Tensor<double>& t) {
      double s = 0.0;
      for (double g : t.grad()) s += g * g;
      return s;
    };
    EXPECT_GT(norm(xa), 1e-8);
    EXPECT_GT(norm(xb), 1e-8);
    xa.clear_grad();
    xb.clear_grad();
  }
}

// ---------------------------------------------------------------------------
// fusion variants

TEST(FuseVariant, WithoutIsIdentity) {
  ParamStore<double> store(17);
  auto p = make_fuse(store, "fuse", FuseKind::without, 4, 2);
  EXPECT_TRUE(store.params().empty());
  auto xa = random_tensor<double>({1, 4, 3, 3}, 28);
  auto xb = random_tensor<double>({1, 4, 3, 3}, 29);
  auto [ya, yb] = fuse_variant(xa, xb, p);
  EXPECT_EQ(max_abs_diff(ya, xa), 0.0);
  EXPECT_EQ(max_abs_diff(yb, xb), 0.0);
}

TEST(FuseVariant, AddWithZeroOtherPath) {
  ParamStore<double> store(18);
  auto p = make_fuse(store, "fuse", FuseKind::add, 4, 2);
  auto xa = random_tensor<double>({1, 4, 3, 3}, 30);
  auto [ya, yb] = fuse_variant(xa, Tensor<double>(xa.shape()), p);
  EXPECT_EQ(max_abs_diff(ya, xa), 0.0);
  EXPECT_EQ(max_abs_diff(yb, xa), 0.0);
}

TEST(FuseVariant, ConcatWithAveragingWeights) {
  ParamStore<double> store(19);
  const std::int64_t c = 4;
  auto p = make_fuse(store, "fuse", FuseKind::concat, c, 2);
  zero(p.concat);
  for (std::int64_t o = 0; o < c; ++o) {
    p.concat.w[o * 2 * c + o] = 0.5;
    p.concat.w[o * 2 * c + c + o] = 0.5;
  }
  auto xa = random_tensor<double>({2, c, 3, 3}, 31);
  auto xb = random_tensor<double>({2, c, 3, 3}, 32);
  auto [ya, yb] = fuse_variant(xa, xb, p);
  for (std::int64_t i = 0; i < xa.numel(); ++i) {
    EXPECT_NEAR(ya[i], (xa[i] + xb[i]) / 2, 1e-15);
    EXPECT_EQ(ya[i], yb[i]);
  }
}

TEST(FuseVariant, AttentionGate) {
  ParamStore<double> store(20);
  auto p = make_fuse(store, "fuse", FuseKind::attention_gate, 4, 2);
  randomize(store, 12);
  auto xa = random_tensor<double>({1, 4, 3, 3}, 33);
  auto xb = random_tensor<double>({1, 4, 3, 3}, 34);
  // gate in (0, 1): each output lies between own map and own + other
  auto [ya, yb] = fuse_variant(xa, xb, p);
  for (std::int64_t i = 0; i < xa.numel(); ++i) {
    const double t = (ya[i] - xa[i]) / xb[i];
    EXPECT_GT(t, 0.0);
    EXPECT_LT(t, 1.0);
  }
  // swapping the inputs and the gate weights swaps the outputs
  FuseParams<double> swapped = p;
  std::swap(swapped.gate_a, swapped.gate_b);
  auto [za, zb] = fuse_variant(xb, xa, swapped);
  EXPECT_EQ(max_abs_diff(ya, zb), 0.0);
  auto inputs = all_params(store);
  inputs.push_back({"xa", xa});
  inputs.push_back({"xb", xb});
  auto probe = random_tensor<double>(xa.shape(), 35);
  auto r = grad_check<double>(
      [&] {
        auto [a, b] = fuse_variant(xa, xb, p);
        return add(sum(mul(a, probe)), sum(mul(b, b)));
      },
      inputs, kEps);
  EXPECT_LE(r.max_rel_error, 1e-5) << r.worst;
}

TEST(FuseVariant, KindNames) {
  for (auto k : {FuseKind::without, FuseKind::add, FuseKind::concat, FuseKind::attention_gate,
                 FuseKind::tmm}) {
    EXPECT_EQ(parse_fuse_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_fuse_kind("gated"), ConfigError);
}

TEST(FuseVariant, TmmKindDelegates) {
  ParamStore<double> store(21);
  auto p = make_fuse(store, "fuse", FuseKind::tmm, 4, 2);
  randomize(store, 13);
  auto xa = random_tensor<double>({1, 4, 3, 3}, 36);
  auto xb = random_tensor<double>({1, 4, 3, 3}, 37);
  auto [ya, yb] = fuse_variant(xa, xb, p);
  auto [ta, tb] = tmm_block(xa, xb, p.tmm);
  EXPECT_EQ(max_abs_diff(ya, ta), 0.0);
  EXPECT_EQ(max_abs_diff(yb, tb), 0.0);
}

}  // namespace
}  // namespace transiam
