#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "transiam/blocks.hpp"

namespace transiam {

enum class PathMode { single, dual };

std::string to_string(PathMode mode);
PathMode parse_path_mode(const std::string& name);

struct ModelConfig {
  std::vector<std::int64_t> stages{32, 64, 128, 256};
  int conv_stages = 2;
  int icmt_stages = 2;
  int icmt_blocks_per_stage = 2;
  int heads = 4;
  int num_classes = 4;
  FuseKind fusion = FuseKind::tmm;
  PathMode paths = PathMode::dual;
  bool use_conv_projection = true;
  bool use_conv_ffn = true;
  /// Replace every ICMT block by a conv_block of equal width.
  bool icmt_as_conv = false;
  int input_channels_per_path = 2;

  /// Throws ConfigError describing the first inconsistency.
  void validate() const;
  int downsamples() const { return static_cast<int>(stages.size()) - 1; }
  /// Input extents must be multiples of this.
  std::int64_t required_multiple() const { return std::int64_t{1} << downsamples(); }

  std::map<std::string, std::string> to_keys() const;
  /// Applies the recognized keys of `kv` (prefix-free names as in to_keys)
  /// and returns the keys it did not recognize.
  std::vector<std::string> apply_keys(const std::map<std::string, std::string>& kv);
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

template <typename T>
struct EncoderStage {
  std::vector<ConvBlockParams<T>> convs;
  std::vector<ICMTParams<T>> icmts;
  std::optional<ConvParams<T>> down;
};

template <typename T>
struct Encoder {
  ConvBlockParams<T> stem;
  std::vector<EncoderStage<T>> stages;
};

template <typename T>
struct UpStage {
  ConvParams<T> up;  // transposed, w [in, out, 2, 2]
  NormParams<T> norm;
};

template <typename T>
struct Decoder {
  std::vector<UpStage<T>> ups;  // deepest first
  ConvParams<T> head;
};

template <typename T>
struct Model {
  ModelConfig cfg;
  ParamStore<T> store{0};
  Encoder<T> enc_a, enc_b;  // enc_b unused with a single path
  FuseParams<T> fuse;
  Decoder<T> dec_a, dec_b;
};

template <typename T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed);

/// Ablation overrides on top of a base config. Unset fields keep the base.
struct VariantOverrides {
  std::optional<FuseKind> fusion;
  std::optional<bool> use_conv_projection;
  std::optional<bool> use_conv_ffn;
  std::optional<bool> icmt_as_conv;
  std::optional<PathMode> paths;
};

/// Resolves overrides: a single path implies fusion=without, and asking for
/// any other fusion together with a single path is a ConfigError.
ModelConfig variant_config(ModelConfig base, const VariantOverrides& o);

template <typename T>
Model<T> build_variant(const ModelConfig& base, const VariantOverrides& o, std::uint64_t seed);

template <typename T>
struct HeadLogits {
  FeatureMap<T> a, b;  // b undefined with a single path
};

/// Per-head logits. inA is (T1, T1ce), inB is (Flair, T2). A single-path
/// model sees their channel concatenation.
template <typename T>
HeadLogits<T> forward_heads(const Model<T>& m, const FeatureMap<T>& in_a, const FeatureMap<T>& in_b);

/// Logits averaged over the two heads.
template <typename T>
FeatureMap<T> forward(const Model<T>& m, const FeatureMap<T>& in_a, const FeatureMap<T>& in_b);

/// Single-path entry point taking one 4-channel input.
template <typename T>
FeatureMap<T> forward(const Model<T>& m, const FeatureMap<T>& in);

template <typename T>
std::int64_t param_count(const Model<T>& m) {
  return m.store.scalar_count();
}

// ---------------------------------------------------------------------------
// Tensor sets on disk: <stem>.manifest ("name shape offset" per line, shape
// like 32x2x3x3, offset in bytes) and <stem>.payload (concatenated TSR1
// tensors in manifest order).

void save_tensors(const std::filesystem::path& dir, const std::vector<NamedParam<float>>& tensors,
                  const std::string& stem = "params");
/// Fills `into` in place. Names and shapes must match the manifest exactly.
void load_tensors(const std::filesystem::path& dir, const std::vector<NamedParam<float>>& into,
                  const std::string& stem = "params");

void save_config(const std::filesystem::path& file, const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> load_config(const std::filesystem::path& file);

}  // namespace transiam
