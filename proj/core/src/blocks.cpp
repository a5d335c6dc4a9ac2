#include "transiam/blocks.hpp"

#include <cmath>
#include <numeric>

#include "transiam/errors.hpp"

namespace transiam {

int norm_groups(std::int64_t channels) {
  return static_cast<int>(std::gcd<std::int64_t>(8, channels));
}

std::string to_string(FuseKind kind) {
  switch (kind) {
    case FuseKind::without: return "without";
    case FuseKind::add: return "add";
    case FuseKind::concat: return "concat";
    case FuseKind::attention_gate: return "attention_gate";
    case FuseKind::tmm: return "tmm";
  }
  return "?";
}

FuseKind parse_fuse_kind(const std::string& name) {
  for (auto k : {FuseKind::without, FuseKind::add, FuseKind::concat, FuseKind::attention_gate,
                 FuseKind::tmm}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown fusion kind '" + name +
                    "' (expected without, add, concat, attention_gate or tmm)");
}

namespace {

template <typename T>
void expect_channels(const FeatureMap<T>& x, std::int64_t c, const char* who) {
  expect_feature_map(x, who);
  if (x.dim(1) != c) {
    throw DimensionError(std::string(who) + ": input has " + std::to_string(x.dim(1)) +
                         " channels, parameters expect " + std::to_string(c));
  }
}

template <typename T>
void expect_same_shape(const FeatureMap<T>& a, const FeatureMap<T>& b, const char* who) {
  expect_feature_map(a, who);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(who) + ": path shapes differ, " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

template <typename T>
FeatureMap<T> ln(const FeatureMap<T>& x, const NormParams<T>& p) {
  return layer_norm(x, p.gamma, p.beta);
}

template <typename T>
FeatureMap<T> project(const FeatureMap<T>& x, const Tensor<T>& w, bool depthwise) {
  return depthwise ? depthwise_conv2d(x, w, 1, 1) : conv2d(x, w, Tensor<T>{}, 1, 0);
}

}  // namespace

// ---------------------------------------------------------------------------
// factories

template <typename T>
ConvParams<T> make_conv(ParamStore<T>& store, const std::string& name, std::int64_t in,
                        std::int64_t out, int k, int stride, int pad, bool bias) {
  ConvParams<T> p;
  p.w = store.kaiming(name + ".w", {out, in, k, k}, in * k * k);
  if (bias) p.b = store.constant(name + ".b", {out}, T{0});
  p.stride = stride;
  p.pad = pad;
  return p;
}

template <typename T>
NormParams<T> make_norm(ParamStore<T>& store, const std::string& name, std::int64_t channels) {
  return {store.constant(name + ".gamma", {channels}, T{1}),
          store.constant(name + ".beta", {channels}, T{0})};
}

template <typename T>
ConvBlockParams<T> make_conv_block(ParamStore<T>& store, const std::string& name, std::int64_t in,
                                   std::int64_t out) {
  ConvBlockParams<T> p;
  // biases would be cancelled by the group norm that follows
  p.conv1 = make_conv(store, name + ".conv1", in, out, 3, 1, 1, false);
  p.norm1 = make_norm(store, name + ".norm1", out);
  p.conv2 = make_conv(store, name + ".conv2", out, out, 3, 1, 1, false);
  p.norm2 = make_norm(store, name + ".norm2", out);
  return p;
}

template <typename T>
ConvParams<T> make_downsample(ParamStore<T>& store, const std::string& name, std::int64_t in,
                              std::int64_t out) {
  return make_conv(store, name, in, out, 3, 2, 1);
}

template <typename T>
ProjectionWeights<T> make_projection(ParamStore<T>& store, const std::string& name,
                                     std::int64_t channels, bool depthwise,
                                     const std::string& suffix) {
  ProjectionWeights<T> p;
  p.depthwise = depthwise;
  const Shape shape = depthwise ? Shape{channels, 1, 3, 3} : Shape{channels, channels, 1, 1};
  const std::int64_t fan_in = depthwise ? 9 : channels;
  p.w_q = store.kaiming(name + ".w_q" + suffix, shape, fan_in);
  p.w_k = store.kaiming(name + ".w_k" + suffix, shape, fan_in);
  p.w_v = store.kaiming(name + ".w_v" + suffix, shape, fan_in);
  return p;
}

template <typename T>
ICMTParams<T> make_icmt(ParamStore<T>& store, const std::string& name, std::int64_t channels,
                        int heads, bool use_conv_projection, bool use_conv_ffn) {
  if (heads < 1 || channels % heads != 0) {
    throw ConfigError(name + ": " + std::to_string(channels) + " channels do not split into " +
                      std::to_string(heads) + " heads");
  }
  ICMTParams<T> p;
  p.heads = heads;
  p.use_conv_projection = use_conv_projection;
  p.use_conv_ffn = use_conv_ffn;
  p.norm_attn = make_norm(store, name + ".norm_attn", channels);
  p.proj = make_projection(store, name + ".proj", channels, use_conv_projection);
  p.norm_ffn = make_norm(store, name + ".norm_ffn", channels);
  if (use_conv_ffn) {
    p.extractor = make_conv(store, name + ".extractor", channels, channels, 3, 1, 1);
  } else {
    p.mlp1 = make_conv(store, name + ".mlp1", channels, 4 * channels, 1, 1, 0);
    p.mlp2 = make_conv(store, name + ".mlp2", 4 * channels, channels, 1, 1, 0);
  }
  return p;
}

template <typename T>
FusionParams<T> make_fusion(ParamStore<T>& store, const std::string& name, std::int64_t channels,
                            int heads) {
  if (heads < 1 || channels % heads != 0) {
    throw ConfigError(name + ": " + std::to_string(channels) + " channels do not split into " +
                      std::to_string(heads) + " heads");
  }
  FusionParams<T> p;
  p.heads = heads;
  p.norm_x1 = make_norm(store, name + ".norm_x1", channels);
  p.norm_x2 = make_norm(store, name + ".norm_x2", channels);
  p.cross = make_projection(store, name + ".cross", channels, true, "1");
  p.norm_f = make_norm(store, name + ".norm_f", channels);
  p.self = make_projection(store, name + ".self", channels, true, "2");
  p.norm_out = make_norm(store, name + ".norm_out", channels);
  p.extractor = make_conv(store, name + ".extractor", channels, channels, 3, 1, 1);
  return p;
}

template <typename T>
FuseParams<T> make_fuse(ParamStore<T>& store, const std::string& name, FuseKind kind,
                        std::int64_t channels, int heads) {
  FuseParams<T> p;
  p.kind = kind;
  switch (kind) {
    case FuseKind::without:
    case FuseKind::add:
      break;
    case FuseKind::concat:
      p.concat = make_conv(store, name + ".concat", 2 * channels, channels, 1, 1, 0);
      break;
    case FuseKind::attention_gate:
      for (auto* g : {&p.gate_a, &p.gate_b}) {
        const std::string gn = name + (g == &p.gate_a ? ".gate_a" : ".gate_b");
        g->theta = make_conv(store, gn + ".theta", channels, channels, 1, 1, 0);
        g->phi = make_conv(store, gn + ".phi", channels, channels, 1, 1, 0, false);
        g->psi = make_conv(store, gn + ".psi", channels, 1, 1, 1, 0);
      }
      break;
    case FuseKind::tmm:
      p.tmm.block1 = make_fusion(store, name + ".block1", channels, heads);
      p.tmm.block2 = make_fusion(store, name + ".block2", channels, heads);
      break;
  }
  return p;
}

// ---------------------------------------------------------------------------
// blocks

template <typename T>
FeatureMap<T> apply_conv(const FeatureMap<T>& x, const ConvParams<T>& p) {
  return conv2d(x, p.w, p.b, p.stride, p.pad);
}

template <typename T>
FeatureMap<T> conv_block(const FeatureMap<T>& x, const ConvBlockParams<T>& p) {
  expect_channels(x, p.conv1.w.dim(1), "conv_block");
  const std::int64_t out = p.conv1.w.dim(0);
  const int groups = norm_groups(out);
  auto h = relu(group_norm(apply_conv(x, p.conv1), p.norm1.gamma, p.norm1.beta, groups));
  h = relu(group_norm(apply_conv(h, p.conv2), p.norm2.gamma, p.norm2.beta, groups));
  return x.dim(1) == out ? add(x, h) : h;
}

template <typename T>
FeatureMap<T> downsample(const FeatureMap<T>& x, const ConvParams<T>& p) {
  expect_channels(x, p.w.dim(1), "downsample");
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw DimensionError("downsample: spatial extents " + std::to_string(x.dim(2)) + "x" +
                         std::to_string(x.dim(3)) +
                         " must be even; pad or crop the input to a multiple of 8");
  }
  return apply_conv(x, p);
}

template <typename T>
AttentionContext<T> conv_projection(const FeatureMap<T>& x, const ProjectionWeights<T>& pw,
                                    int heads) {
  expect_channels(x, pw.depthwise ? pw.w_q.dim(0) : pw.w_q.dim(1), "conv_projection");
  const std::int64_t c = x.dim(1);
  if (heads < 1 || c % heads != 0) {
    throw DimensionError("attention: " + std::to_string(c) + " channels do not split into " +
                         std::to_string(heads) + " heads");
  }
  AttentionContext<T> ctx;
  ctx.heads = heads;
  ctx.d_k = c / heads;
  ctx.height = x.dim(2);
  ctx.width = x.dim(3);
  ctx.q = to_heads(project(x, pw.w_q, pw.depthwise), heads);
  ctx.k = to_heads(project(x, pw.w_k, pw.depthwise), heads);
  ctx.v = to_heads(project(x, pw.w_v, pw.depthwise), heads);
  return ctx;
}

template <typename T>
FeatureMap<T> attention(const AttentionContext<T>& ctx) {
  const T inv = T(1) / std::sqrt(static_cast<T>(ctx.d_k));
  auto scores = softmax(scale(bmm(ctx.q, ctx.k, true), inv), 2);
  return from_heads(bmm(scores, ctx.v), ctx.heads, ctx.height, ctx.width);
}

template <typename T>
FeatureMap<T> multi_head_self_attention(const AttentionContext<T>& ctx,
                                        const FeatureMap<T>& x_residual) {
  return add(attention(ctx), x_residual);
}

template <typename T>
FeatureMap<T> icmt_block(const FeatureMap<T>& x, const ICMTParams<T>& p) {
  auto att = multi_head_self_attention(conv_projection(ln(x, p.norm_attn), p.proj, p.heads), x);
  auto n = ln(att, p.norm_ffn);
  auto ext = p.use_conv_ffn ? apply_conv(n, p.extractor)
                            : apply_conv(relu(apply_conv(n, p.mlp1)), p.mlp2);
  return add(ext, att);
}

template <typename T>
FeatureMap<T> fusion_block(const FeatureMap<T>& x1, const FeatureMap<T>& x2,
                           const FusionParams<T>& p, FusionTrace<T>* trace) {
  expect_same_shape(x1, x2, "fusion_block");
  expect_channels(x1, p.cross.w_q.dim(0), "fusion_block");
  if (x1.dim(1) % p.heads != 0) {
    throw DimensionError("fusion_block: " + std::to_string(x1.dim(1)) +
                         " channels do not split into " + std::to_string(p.heads) + " heads");
  }
  const auto n1 = ln(x1, p.norm_x1);
  const auto n2 = ln(x2, p.norm_x2);
  AttentionContext<T> cross;
  cross.heads = p.heads;
  cross.d_k = x1.dim(1) / p.heads;
  cross.height = x1.dim(2);
  cross.width = x1.dim(3);
  cross.q = to_heads(depthwise_conv2d(n2, p.cross.w_q, 1, 1), p.heads);
  cross.k = to_heads(depthwise_conv2d(n1, p.cross.w_k, 1, 1), p.heads);
  cross.v = to_heads(depthwise_conv2d(n1, p.cross.w_v, 1, 1), p.heads);
  auto cross_att = attention(cross);
  auto f = add(cross_att, x2);
  auto self_att = attention(conv_projection(ln(f, p.norm_f), p.self, p.heads));
  auto y = add(apply_conv(ln(self_att, p.norm_out), p.extractor), x1);
  if (trace) *trace = {cross_att, f, self_att};
  return y;
}

template <typename T>
std::pair<FeatureMap<T>, FeatureMap<T>> tmm_block(const FeatureMap<T>& xa, const FeatureMap<T>& xb,
                                                  const TMMParams<T>& p) {
  expect_same_shape(xa, xb, "tmm_block");
  auto yb = fusion_block(xb, xa, p.block1);
  auto ya = fusion_block(xa, xb, p.block2);
  return {ya, yb};
}

namespace {

template <typename T>
FeatureMap<T> gate(const FeatureMap<T>& own, const FeatureMap<T>& other, const GateParams<T>& g) {
  auto a = relu(add(apply_conv(own, g.theta), apply_conv(other, g.phi)));
  return add(own, channel_broadcast_mul(other, sigmoid(apply_conv(a, g.psi))));
}

}  // namespace

template <typename T>
std::pair<FeatureMap<T>, FeatureMap<T>> fuse_variant(const FeatureMap<T>& xa,
                                                     const FeatureMap<T>& xb,
                                                     const FuseParams<T>& p) {
  expect_same_shape(xa, xb, "fuse_variant");
  switch (p.kind) {
    case FuseKind::without:
      return {xa, xb};
    case FuseKind::add: {
      auto s = add(xa, xb);
      return {s, s};
    }
    case FuseKind::concat: {
      auto s = apply_conv(concat_channels(xa, xb), p.concat);
      return {s, s};
    }
    case FuseKind::attention_gate:
      return {gate(xa, xb, p.gate_a), gate(xb, xa, p.gate_b)};
    case FuseKind::tmm:
      return tmm_block(xa, xb, p.tmm);
  }
  throw ConfigError("unknown fusion kind");
}

#define TRANSIAM_INSTANTIATE(T)                                                                   \
  template ConvParams<T> make_conv(ParamStore<T>&, const std::string&, std::int64_t,             \
                                   std::int64_t, int, int, int, bool);                           \
  template NormParams<T> make_norm(ParamStore<T>&, const std::string&, std::int64_t);            \
  template ConvBlockParams<T> make_conv_block(ParamStore<T>&, const std::string&, std::int64_t,  \
                                              std::int64_t);                                     \
  template ConvParams<T> make_downsample(ParamStore<T>&, const std::string&, std::int64_t,       \
                                         std::int64_t);                                          \
  template ProjectionWeights<T> make_projection(ParamStore<T>&, const std::string&, std::int64_t, \
                                                bool, const std::string&);                       \
  template ICMTParams<T> make_icmt(ParamStore<T>&, const std::string&, std::int64_t, int, bool,  \
                                   bool);                                                        \
  template FusionParams<T> make_fusion(ParamStore<T>&, const std::string&, std::int64_t, int);   \
  template FuseParams<T> make_fuse(ParamStore<T>&, const std::string&, FuseKind, std::int64_t,   \
                                   int);                                                         \
  template FeatureMap<T> apply_conv(const FeatureMap<T>&, const ConvParams<T>&);                 \
  template FeatureMap<T> conv_block(const FeatureMap<T>&, const ConvBlockParams<T>&);            \
  template FeatureMap<T> downsample(const FeatureMap<T>&, const ConvParams<T>&);                 \
  template AttentionContext<T> conv_projection(const FeatureMap<T>&, const ProjectionWeights<T>&, \
                                               int);                                             \
  template FeatureMap<T> attention(const AttentionContext<T>&);                                  \
  template FeatureMap<T> multi_head_self_attention(const AttentionContext<T>&,                   \
                                                   const FeatureMap<T>&);                        \
  template FeatureMap<T> icmt_block(const FeatureMap<T>&, const ICMTParams<T>&);                 \
  template FeatureMap<T> fusion_block(const FeatureMap<T>&, const FeatureMap<T>&,                \
                                      const FusionParams<T>&, FusionTrace<T>*);                  \
  template std::pair<FeatureMap<T>, FeatureMap<T>> tmm_block(                                    \
      const FeatureMap<T>&, const FeatureMap<T>&, const TMMParams<T>&);                          \
  template std::pair<FeatureMap<T>, FeatureMap<T>> fuse_variant(                                 \
      const FeatureMap<T>&, const FeatureMap<T>&, const FuseParams<T>&);

TRANSIAM_INSTANTIATE(float)
TRANSIAM_INSTANTIATE(double)
#undef TRANSIAM_INSTANTIATE

}  // namespace transiam
