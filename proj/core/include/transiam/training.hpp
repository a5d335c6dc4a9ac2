#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transiam/data.hpp"
#include "transiam/model.hpp"

namespace transiam {

// ---------------------------------------------------------------------------
// losses
//
// Probabilities and targets share a shape with classes on axis 1: [N, K] rows
// or [B, K, H, W] maps. A "pixel" is one position across the K classes.

struct LossWeights {
  double alpha1 = 0.3;  // cross-entropy
  double alpha2 = 0.7;  // dice
  void validate() const;
};

template <typename T>
struct LossBundle {
  Tensor<T> joint, ce, dice;  // scalars, on the tape when recording
};

/// One-hot [B, K, H, W] from labels laid out as [B, H, W].
template <typename T>
Tensor<T> one_hot(std::span<const std::uint8_t> labels, std::int64_t batch, int classes, std::int64_t height,
                  std::int64_t width);

/// 1 - mean over foreground classes k >= 1 of
/// (2 sum p_k y_k + eps) / (sum p_k + sum y_k + eps), pooled over all pixels.
/// Probabilities outside [0, 1] are a DomainError.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const Tensor<T>& target, double eps = 1e-5);

/// Per-class binary cross-entropy summed over classes, averaged over pixels:
/// -(1/N) sum_n sum_k [y ln p + (1 - y) ln(1 - p)], with p clipped to
/// [1e-7, 1 - 1e-7]. The gradient is zero where clipping is active.
template <typename T>
Tensor<T> ce_loss(const Tensor<T>& probs, const Tensor<T>& target);

/// alpha1 * ce + alpha2 * dice from already computed terms.
template <typename T>
LossBundle<T> combine_losses(const Tensor<T>& ce, const Tensor<T>& dice, const LossWeights& w);

/// alpha1 * ce + alpha2 * dice. Rows of `probs` must sum to 1 within 1e-5.
template <typename T>
LossBundle<T> joint_loss(const Tensor<T>& probs, const Tensor<T>& target, const LossWeights& w);

// ---------------------------------------------------------------------------
// optimizer

struct SgdConfig {
  double lr = 0.03;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  void validate() const;
};

/// Classic momentum: g' = g + wd w; buf = momentum buf + g'; w -= lr buf.
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<NamedParam<T>> params, SgdConfig cfg);

  /// Every registered parameter needs a gradient; a missing one is a
  /// TapeError naming it.
  void step();
  void zero_grad();

  const SgdConfig& config() const { return cfg_; }
  /// Momentum buffers, named like their parameters.
  const std::vector<NamedParam<T>>& buffers() const { return buffers_; }

 private:
  std::vector<NamedParam<T>> params_;
  std::vector<NamedParam<T>> buffers_;
  SgdConfig cfg_;
};

// ---------------------------------------------------------------------------
// training

struct TrainConfig {
  ModelConfig model;
  std::int64_t epochs = 20;
  std::int64_t batch = 8;
  SgdConfig sgd;
  LossWeights weights;
  bool augment = true;
  double augment_probability = 0.5;
  std::uint64_t seed = 0;
  /// Stop once the training whole-tumor Dice (%) of a batch reaches this; 0 disables.
  double target_dice = 0.0;
  /// Stop after this many steps in total; 0 means no limit.
  std::int64_t max_steps = 0;
  /// Checkpoints kept on disk (oldest removed first); 0 keeps all.
  std::int64_t keep_checkpoints = 0;

  void validate() const;
  /// Every field, model keys included, as key = value pairs.
  std::map<std::string, std::string> to_keys() const;
  /// Unknown keys are a ConfigError naming them.
  void apply_keys(const std::map<std::string, std::string>& kv);
  static TrainConfig from_file(const std::filesystem::path& file);
};

struct StepRecord {
  std::int64_t step = 0;  // 1-based, over the whole run
  std::int64_t epoch = 0;  // 1-based
  double joint = 0, ce = 0, dice = 0;
  /// Whole-tumor Dice (%) of the batch's argmax prediction before the update.
  double batch_dice = 0;
};

/// Owns the model, the optimizer and the run position. Runs are pure
/// functions of (config, slices): batch order depends on (seed, epoch) and
/// each slice's augmentation on (seed, epoch, slice index).
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<Slice> slices);

  /// Loads a checkpoint written by an earlier run with the same config
  /// (stopping rules may differ); training continues where it left off.
  void resume(const std::filesystem::path& checkpoint);

  /// Trains until the epochs are done or a stop rule fires. With an output
  /// directory: appends to loss.csv, writes ckpt_epoch_<n> after every epoch
  /// and effective.cfg. `on_step` sees every step as it completes.
  std::vector<StepRecord> run(const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                              const std::function<void(const StepRecord&)>& on_step = {});

  void save_checkpoint(const std::filesystem::path& dir) const;

  const Model<float>& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  std::int64_t epochs_done() const { return epoch_; }
  std::int64_t steps_done() const { return step_; }
  bool stopped_early() const { return stopped_early_; }

 private:
  StepRecord train_step(const SliceBatch& batch);

  TrainConfig cfg_;
  std::vector<Slice> slices_;
  Model<float> model_;
  Sgd<float> sgd_;
  std::int64_t epoch_ = 0;   // completed epochs
  std::int64_t offset_ = 0;  // batches done in the epoch after that
  std::int64_t step_ = 0;
  bool stopped_early_ = false;
};

/// Header line of loss.csv.
inline constexpr const char* kLossCsvHeader = "step,epoch,L_joint,L_CE,L_dice";

/// Checkpoint directories ckpt_epoch_<n> under `dir`, by ascending n.
std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir);

/// Model (config and weights) stored in a checkpoint.
Model<float> load_checkpoint_model(const std::filesystem::path& checkpoint);

// ---------------------------------------------------------------------------
// prediction

/// Mean of per-model softmax probabilities, then argmax over classes with
/// ties going to the lower class index. Result is [B, H, W].
std::vector<std::uint8_t> average_argmax(const std::vector<Tensor<float>>& probs);

/// Every model must share one config (ConfigError otherwise).
std::vector<std::uint8_t> predict_averaged(const std::vector<const Model<float>*>& models,
                                           const FeatureMap<float>& in_a, const FeatureMap<float>& in_b);

/// Whole volume, one axial slice batch at a time. Returns labels shaped like v.
std::vector<std::uint8_t> predict_volume(const std::vector<const Model<float>*>& models, const VolumeSample& v,
                                         std::int64_t batch = 8);

/// Whole-tumor Dice (%) of the argmax of `logits` [B, K, H, W] against labels [B, H, W].
double whole_tumor_dice(const Tensor<float>& logits, std::span<const std::uint8_t> labels);

}  // namespace transiam
