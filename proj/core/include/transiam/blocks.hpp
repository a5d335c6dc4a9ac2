#pragma once

#include <string>
#include <utility>

#include "transiam/ops.hpp"
#include "transiam/params.hpp"

// Encoder, attention and fusion blocks. Blocks are pure functions of
// (inputs, params); parameter structs hold handles into a ParamStore.

namespace transiam {

template <typename T>
struct ConvParams {
  Tensor<T> w;
  Tensor<T> b;  // may be undefined
  int stride = 1;
  int pad = 0;
};

template <typename T>
struct NormParams {
  Tensor<T> gamma;
  Tensor<T> beta;
};

/// Group count for a group norm over `channels`: 8 when it divides, else the
/// largest common divisor.
int norm_groups(std::int64_t channels);

template <typename T>
struct ConvBlockParams {
  ConvParams<T> conv1, conv2;
  NormParams<T> norm1, norm2;
};

/// Depthwise 3x3 kernels [C, 1, 3, 3] in conv mode, position-wise [C, C, 1, 1]
/// maps in raw-transformer mode.
template <typename T>
struct ProjectionWeights {
  Tensor<T> w_q, w_k, w_v;
  bool depthwise = true;
};

template <typename T>
struct AttentionContext {
  Tensor<T> q, k, v;  // [N * heads, H * W, d_k]
  int heads = 1;
  std::int64_t d_k = 0;
  std::int64_t height = 0, width = 0;
};

template <typename T>
struct ICMTParams {
  ProjectionWeights<T> proj;
  NormParams<T> norm_attn, norm_ffn;
  ConvParams<T> extractor;  // 3x3, used when use_conv_ffn
  ConvParams<T> mlp1, mlp2; // 1x1 C -> 4C -> C, used otherwise
  int heads = 4;
  bool use_conv_projection = true;
  bool use_conv_ffn = true;
};

/// One direction of the mutual fusion: x2 queries x1, the result is refined
/// by self-attention and added back onto x1.
template <typename T>
struct FusionParams {
  ProjectionWeights<T> cross;  // w_q1 (applied to x2), w_k1, w_v1 (applied to x1)
  ProjectionWeights<T> self;   // w_q2, w_k2, w_v2
  NormParams<T> norm_x1, norm_x2, norm_f, norm_out;
  ConvParams<T> extractor;
  int heads = 4;
};

/// Intermediate maps of a fusion_block evaluation.
template <typename T>
struct FusionTrace {
  FeatureMap<T> cross_att, f, self_att;
};

template <typename T>
struct TMMParams {
  FusionParams<T> block1;  // fuses A into B
  FusionParams<T> block2;  // fuses B into A
};

template <typename T>
struct GateParams {
  ConvParams<T> theta, phi, psi;  // 1x1: C->C on own path, C->C on other path, C->1
};

enum class FuseKind { without, add, concat, attention_gate, tmm };

std::string to_string(FuseKind kind);
/// Throws ConfigError listing the accepted names.
FuseKind parse_fuse_kind(const std::string& name);

template <typename T>
struct FuseParams {
  FuseKind kind = FuseKind::without;
  TMMParams<T> tmm;
  ConvParams<T> concat;       // 1x1, 2C -> C
  GateParams<T> gate_a, gate_b;
};

// ---------------------------------------------------------------------------
// Parameter factories. Names are prefix + "." + field.

template <typename T>
ConvParams<T> make_conv(ParamStore<T>& store, const std::string& name, std::int64_t in,
                        std::int64_t out, int k, int stride, int pad, bool bias = true);
template <typename T>
NormParams<T> make_norm(ParamStore<T>& store, const std::string& name, std::int64_t channels);
template <typename T>
ConvBlockParams<T> make_conv_block(ParamStore<T>& store, const std::string& name, std::int64_t in,
                                   std::int64_t out);
template <typename T>
ConvParams<T> make_downsample(ParamStore<T>& store, const std::string& name, std::int64_t in,
                              std::int64_t out);
template <typename T>
ProjectionWeights<T> make_projection(ParamStore<T>& store, const std::string& name,
                                     std::int64_t channels, bool depthwise,
                                     const std::string& suffix = "");
template <typename T>
ICMTParams<T> make_icmt(ParamStore<T>& store, const std::string& name, std::int64_t channels,
                        int heads, bool use_conv_projection = true, bool use_conv_ffn = true);
template <typename T>
FusionParams<T> make_fusion(ParamStore<T>& store, const std::string& name, std::int64_t channels,
                            int heads);
template <typename T>
FuseParams<T> make_fuse(ParamStore<T>& store, const std::string& name, FuseKind kind,
                        std::int64_t channels, int heads);

// ---------------------------------------------------------------------------
// Blocks

template <typename T>
FeatureMap<T> apply_conv(const FeatureMap<T>& x, const ConvParams<T>& p);

/// conv3x3 -> group norm -> relu -> conv3x3 -> group norm -> relu, plus the
/// input when channel counts agree.
template <typename T>
FeatureMap<T> conv_block(const FeatureMap<T>& x, const ConvBlockParams<T>& p);

/// Stride-2 3x3 convolution. Odd spatial extents are rejected.
template <typename T>
FeatureMap<T> downsample(const FeatureMap<T>& x, const ConvParams<T>& p);

template <typename T>
AttentionContext<T> conv_projection(const FeatureMap<T>& x, const ProjectionWeights<T>& pw,
                                    int heads);

/// softmax(q k^T / sqrt(d_k)) v per head, heads concatenated on channels.
template <typename T>
FeatureMap<T> attention(const AttentionContext<T>& ctx);

/// attention(ctx) + x_residual.
template <typename T>
FeatureMap<T> multi_head_self_attention(const AttentionContext<T>& ctx,
                                        const FeatureMap<T>& x_residual);

template <typename T>
FeatureMap<T> icmt_block(const FeatureMap<T>& x, const ICMTParams<T>& p);

template <typename T>
FeatureMap<T> fusion_block(const FeatureMap<T>& x1, const FeatureMap<T>& x2,
                           const FusionParams<T>& p, FusionTrace<T>* trace = nullptr);

/// Returns (yA, yB).
template <typename T>
std::pair<FeatureMap<T>, FeatureMap<T>> tmm_block(const FeatureMap<T>& xa, const FeatureMap<T>& xb,
                                                  const TMMParams<T>& p);

template <typename T>
std::pair<FeatureMap<T>, FeatureMap<T>> fuse_variant(const FeatureMap<T>& xa,
                                                     const FeatureMap<T>& xb,
                                                     const FuseParams<T>& p);

}  // namespace transiam
