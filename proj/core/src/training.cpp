#include "transiam/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>

#include "config_keys.hpp"
#include "transiam/errors.hpp"
#include "transiam/grad_check.hpp"
#include "transiam/ops.hpp"
#include "transiam/rng.hpp"

namespace transiam {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// losses

void LossWeights::validate() const {
  if (!(alpha1 >= 0.0) || !(alpha2 >= 0.0)) throw ConfigError("loss weights alpha1 and alpha2 must be >= 0");
}

namespace {

struct ClassLayout {
  std::int64_t outer = 0, classes = 0, inner = 0;
  std::int64_t pixels() const { return outer * inner; }
};

template <typename T>
ClassLayout class_layout(const Tensor<T>& probs, const Tensor<T>& target, const char* op) {
  if (probs.shape() != target.shape()) {
    throw DimensionError(std::string(op) + ": probabilities " + shape_string(probs.shape()) + " and target " +
                         shape_string(target.shape()) + " differ");
  }
  if (probs.rank() < 2) throw DimensionError(std::string(op) + ": need classes on axis 1, got " + shape_string(probs.shape()));
  ClassLayout l{probs.dim(0), probs.dim(1), 1};
  for (int i = 2; i < probs.rank(); ++i) l.inner *= probs.dim(i);
  return l;
}

}  // namespace

template <typename T>
Tensor<T> one_hot(std::span<const std::uint8_t> labels, std::int64_t batch, int classes, std::int64_t height,
                  std::int64_t width) {
  if (static_cast<std::int64_t>(labels.size()) != batch * height * width) {
    throw DimensionError("one_hot: " + std::to_string(labels.size()) + " labels for " + std::to_string(batch) + "x" +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  Tensor<T> out({batch, classes, height, width});
  const std::int64_t plane = height * width;
  T* o = out.data();
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t p = 0; p < plane; ++p) {
      const int l = labels[static_cast<std::size_t>(b * plane + p)];
      if (l >= classes) throw DomainError("one_hot: label " + std::to_string(l) + " with " + std::to_string(classes) + " classes");
      o[(b * classes + l) * plane + p] = T{1};
    }
  }
  return out;
}

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const Tensor<T>& target, double eps) {
  const auto L = class_layout(probs, target, "dice_loss");
  if (L.classes < 2) throw DimensionError("dice_loss: need a foreground class");
  for (T v : probs.values()) {
    if (!(v >= T{0} && v <= T{1})) throw DomainError("dice_loss: probability " + std::to_string(v) + " outside [0, 1]");
  }
  const T* p = probs.data();
  const T* y = target.data();
  std::vector<double> inter(static_cast<std::size_t>(L.classes), 0.0), denom(static_cast<std::size_t>(L.classes), 0.0);
  for (std::int64_t o = 0; o < L.outer; ++o) {
    for (std::int64_t k = 1; k < L.classes; ++k) {
      const std::int64_t base = (o * L.classes + k) * L.inner;
      double I = 0, S = 0;
      for (std::int64_t i = 0; i < L.inner; ++i) {
        I += double(p[base + i]) * double(y[base + i]);
        S += double(p[base + i]) + double(y[base + i]);
      }
      inter[static_cast<std::size_t>(k)] += I;
      denom[static_cast<std::size_t>(k)] += S;
    }
  }
  const double fg = static_cast<double>(L.classes - 1);
  double mean_d = 0;
  for (std::int64_t k = 1; k < L.classes; ++k) {
    mean_d += (2 * inter[static_cast<std::size_t>(k)] + eps) / (denom[static_cast<std::size_t>(k)] + eps);
  }
  mean_d /= fg;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(1.0 - mean_d));
  record_op<T>("dice_loss", {probs, target}, out,
               [L, inter, denom, eps, fg](Tensor<T>& o, std::vector<Tensor<T>>& in) {
                 if (!in[0].requires_grad()) return;
                 const double go = o.grad()[0];
                 const T* yv = in[1].data();
                 auto g = in[0].ensure_grad();
                 for (std::int64_t oo = 0; oo < L.outer; ++oo) {
                   for (std::int64_t k = 1; k < L.classes; ++k) {
                     const double S = denom[static_cast<std::size_t>(k)] + eps;
                     const double N = 2 * inter[static_cast<std::size_t>(k)] + eps;
                     const std::int64_t base = (oo * L.classes + k) * L.inner;
                     for (std::int64_t i = 0; i < L.inner; ++i) {
                       // d/dp of N / S with dN = 2y, dS = 1
                       const double dD = (2 * double(yv[base + i]) * S - N) / (S * S);
                       g[static_cast<std::size_t>(base + i)] += static_cast<T>(-go * dD / fg);
                     }
                   }
                 }
               });
  return out;
}

template <typename T>
Tensor<T> ce_loss(const Tensor<T>& probs, const Tensor<T>& target) {
  const auto L = class_layout(probs, target, "ce_loss");
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  const auto pv = probs.values();
  const auto yv = target.values();
  double total = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = std::clamp(double(pv[i]), lo, hi), y = yv[i];
    total += y * std::log(p) + (1 - y) * std::log(1 - p);
  }
  const double n = static_cast<double>(L.pixels());
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(-total / n));
  record_op<T>("ce_loss", {probs, target}, out, [n](Tensor<T>& o, std::vector<Tensor<T>>& in) {
    if (!in[0].requires_grad()) return;
    const double go = o.grad()[0];
    const auto p = in[0].values();
    const auto y = in[1].values();
    auto g = in[0].ensure_grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double pi = p[i];
      if (pi < lo || pi > hi) continue;  // clipped: flat
      const double yi = y[i];
      g[i] += static_cast<T>(-go * (yi / pi - (1 - yi) / (1 - pi)) / n);
    }
  });
  return out;
}

template <typename T>
LossBundle<T> joint_loss(const Tensor<T>& probs, const Tensor<T>& target, const LossWeights& w) {
  w.validate();
  const auto L = class_layout(probs, target, "joint_loss");
  const T* p = probs.data();
  for (std::int64_t o = 0; o < L.outer; ++o) {
    for (std::int64_t i = 0; i < L.inner; ++i) {
      double s = 0;
      for (std::int64_t k = 0; k < L.classes; ++k) s += p[(o * L.classes + k) * L.inner + i];
      if (std::abs(s - 1.0) > 1e-5) {
        throw DomainError("joint_loss: class probabilities sum to " + std::to_string(s) + " at pixel " +
                          std::to_string(o * L.inner + i));
      }
    }
  }
  return combine_losses(ce_loss(probs, target), dice_loss(probs, target), w);
}

template <typename T>
LossBundle<T> combine_losses(const Tensor<T>& ce, const Tensor<T>& dice, const LossWeights& w) {
  w.validate();
  LossBundle<T> b;
  b.ce = ce;
  b.dice = dice;
  b.joint = add(scale(ce, static_cast<T>(w.alpha1)), scale(dice, static_cast<T>(w.alpha2)));
  return b;
}

// ---------------------------------------------------------------------------
// optimizer

void SgdConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

template <typename T>
Sgd<T>::Sgd(std::vector<NamedParam<T>> params, SgdConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  for (const auto& p : params_) buffers_.push_back({p.name, Tensor<T>(p.tensor.shape())});
}

template <typename T>
void Sgd<T>::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) throw TapeError("sgd: parameter '" + p.name + "' has no gradient");
  }
  const T lr = static_cast<T>(cfg_.lr), mom = static_cast<T>(cfg_.momentum), wd = static_cast<T>(cfg_.weight_decay);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T> w = params_[i].tensor;
    auto wv = w.values();
    const auto g = w.grad();
    auto buf = buffers_[i].tensor.values();
    for (std::size_t j = 0; j < wv.size(); ++j) {
      const T gd = g[j] + wd * wv[j];
      buf[j] = mom * buf[j] + gd;
      wv[j] -= lr * buf[j];
    }
  }
}

template <typename T>
void Sgd<T>::zero_grad() {
  for (auto& p : params_) {
    Tensor<T> t = p.tensor;
    t.clear_grad();
  }
}

// ---------------------------------------------------------------------------
// config

void TrainConfig::validate() const {
  model.validate();
  sgd.validate();
  weights.validate();
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (!(augment_probability >= 0.0 && augment_probability <= 1.0)) {
    throw ConfigError("augment_probability must be in [0, 1]");
  }
  if (!(target_dice >= 0.0 && target_dice <= 100.0)) throw ConfigError("target_dice must be in [0, 100]");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (keep_checkpoints < 0) throw ConfigError("keep_checkpoints must be >= 0");
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::map<std::string, std::string> TrainConfig::to_keys() const {
  auto kv = model.to_keys();
  kv["epochs"] = std::to_string(epochs);
  kv["batch"] = std::to_string(batch);
  kv["lr"] = num(sgd.lr);
  kv["momentum"] = num(sgd.momentum);
  kv["weight_decay"] = num(sgd.weight_decay);
  kv["alpha1"] = num(weights.alpha1);
  kv["alpha2"] = num(weights.alpha2);
  kv["augment"] = augment ? "true" : "false";
  kv["augment_probability"] = num(augment_probability);
  kv["seed"] = std::to_string(seed);
  kv["target_dice"] = num(target_dice);
  kv["max_steps"] = std::to_string(max_steps);
  kv["keep_checkpoints"] = std::to_string(keep_checkpoints);
  return kv;
}

void TrainConfig::apply_keys(const std::map<std::string, std::string>& kv) {
  std::vector<std::string> unknown;
  for (const auto& k : model.apply_keys(kv)) {
    const auto& v = kv.at(k);
    if (k == "epochs") {
      epochs = keys::parse_i64(k, v);
    } else if (k == "batch") {
      batch = keys::parse_i64(k, v);
    } else if (k == "lr") {
      sgd.lr = keys::parse_double(k, v);
    } else if (k == "momentum") {
      sgd.momentum = keys::parse_double(k, v);
    } else if (k == "weight_decay") {
      sgd.weight_decay = keys::parse_double(k, v);
    } else if (k == "alpha1") {
      weights.alpha1 = keys::parse_double(k, v);
    } else if (k == "alpha2") {
      weights.alpha2 = keys::parse_double(k, v);
    } else if (k == "augment") {
      augment = keys::parse_bool(k, v);
    } else if (k == "augment_probability") {
      augment_probability = keys::parse_double(k, v);
    } else if (k == "seed") {
      seed = keys::parse_u64(k, v);
    } else if (k == "target_dice") {
      target_dice = keys::parse_double(k, v);
    } else if (k == "max_steps") {
      max_steps = keys::parse_i64(k, v);
    } else if (k == "keep_checkpoints") {
      keep_checkpoints = keys::parse_i64(k, v);
    } else {
      unknown.push_back(k);
    }
  }
  if (!unknown.empty()) {
    std::string names;
    for (const auto& u : unknown) names += (names.empty() ? "'" : ", '") + u + "'";
    throw ConfigError("unknown config key " + names);
  }
}

TrainConfig TrainConfig::from_file(const fs::path& file) {
  TrainConfig cfg;
  cfg.apply_keys(load_config(file));
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// training

double whole_tumor_dice(const Tensor<float>& logits, std::span<const std::uint8_t> labels) {
  if (logits.rank() != 4) throw DimensionError("whole_tumor_dice: logits must be [B, K, H, W]");
  const std::int64_t B = logits.dim(0), K = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  if (static_cast<std::int64_t>(labels.size()) != B * plane) throw DimensionError("whole_tumor_dice: label count");
  const float* x = logits.data();
  std::int64_t both = 0, pred = 0, gt = 0;
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t p = 0; p < plane; ++p) {
      std::int64_t best = 0;
      for (std::int64_t k = 1; k < K; ++k) {
        if (x[(b * K + k) * plane + p] > x[(b * K + best) * plane + p]) best = k;
      }
      const bool a = best != 0, g = labels[static_cast<std::size_t>(b * plane + p)] != 0;
      both += a && g;
      pred += a;
      gt += g;
    }
  }
  return pred + gt == 0 ? 100.0 : 200.0 * static_cast<double>(both) / static_cast<double>(pred + gt);
}

namespace {

FeatureMap<float> to_map(const Tensor<float>& t) { return t; }

// Keys that must agree between a checkpoint and the run resuming it; the
// stopping rules may change.
bool resume_relevant(const std::string& key) {
  return key != "epochs" && key != "max_steps" && key != "target_dice" && key != "keep_checkpoints";
}

void write_state(const fs::path& file, std::int64_t epoch, std::int64_t offset, std::int64_t step,
                 const TrainConfig& cfg) {
  auto kv = cfg.to_keys();
  kv["state.epochs_done"] = std::to_string(epoch);
  kv["state.batches_into_epoch"] = std::to_string(offset);
  kv["state.steps_done"] = std::to_string(step);
  save_config(file, kv);
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, std::vector<Slice> slices)
    : cfg_(std::move(cfg)),
      slices_(std::move(slices)),
      model_(build_model<float>((cfg_.validate(), cfg_.model), derive_seed(cfg_.seed, "init"))),
      sgd_(model_.store.params(), cfg_.sgd) {
  if (slices_.empty()) throw DomainError("train: no training slices");
}

StepRecord Trainer::train_step(const SliceBatch& batch) {
  sgd_.zero_grad();
  Tape<float> tape;
  StepRecord r;
  {
    TapeScope<float> scope(tape);
    const auto logits = forward(model_, to_map(batch.input_a), to_map(batch.input_b));
    r.batch_dice = whole_tumor_dice(logits, batch.target);
    const auto probs = softmax(logits, 1);
    const auto y = one_hot<float>(batch.target, logits.dim(0), cfg_.model.num_classes, logits.dim(2), logits.dim(3));
    const auto loss = joint_loss(probs, y, cfg_.weights);
    r.joint = loss.joint.item();
    r.ce = loss.ce.item();
    r.dice = loss.dice.item();
    if (!std::isfinite(r.joint)) {
      throw NumericalError("non-finite loss at step " + std::to_string(step_ + 1) + " (L_CE=" + num(r.ce) +
                           ", L_dice=" + num(r.dice) + ")");
    }
    backward(loss.joint);
  }
  sgd_.step();
  sgd_.zero_grad();
  return r;
}

std::vector<StepRecord> Trainer::run(const std::optional<fs::path>& out_dir,
                                     const std::function<void(const StepRecord&)>& on_step) {
  std::ofstream csv;
  if (out_dir) {
    fs::create_directories(*out_dir);
    save_config(*out_dir / "effective.cfg", cfg_.to_keys());
    const auto path = *out_dir / "loss.csv";
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    csv.open(path, std::ios::app);
    if (!csv) throw ConfigError("cannot write " + path.string());
    if (fresh) csv << kLossCsvHeader << '\n';
  }
  AugmentConfig aug;
  aug.probability = cfg_.augment_probability;
  const auto order_seed = derive_seed(cfg_.seed, "order");
  std::vector<StepRecord> records;
  bool stop = false;
  while (!stop && epoch_ < cfg_.epochs) {
    const std::int64_t e = epoch_ + 1;
    const auto batches = epoch_order(slices_.size(), static_cast<std::size_t>(cfg_.batch), order_seed, e);
    const auto aug_seed = derive_seed(cfg_.seed, "augment", static_cast<std::uint64_t>(e));
    for (; offset_ < static_cast<std::int64_t>(batches.size()); ++offset_) {
      if (cfg_.max_steps > 0 && step_ >= cfg_.max_steps) {
        stop = true;
        break;
      }
      const auto& idx = batches[static_cast<std::size_t>(offset_)];
      std::vector<Slice> picked;
      for (auto i : idx) {
        picked.push_back(cfg_.augment ? augment(slices_[i], derive_seed(aug_seed, "slice", i), aug) : slices_[i]);
      }
      std::vector<std::size_t> local(picked.size());
      for (std::size_t j = 0; j < local.size(); ++j) local[j] = j;
      StepRecord r = train_step(make_batch(picked, local));
      r.step = ++step_;
      r.epoch = e;
      if (csv.is_open()) {
        char line[160];
        std::snprintf(line, sizeof line, "%lld,%lld,%.9g,%.9g,%.9g\n", static_cast<long long>(r.step),
                      static_cast<long long>(r.epoch), r.joint, r.ce, r.dice);
        csv << line << std::flush;
      }
      if (on_step) on_step(r);
      records.push_back(r);
      if (cfg_.target_dice > 0 && r.batch_dice >= cfg_.target_dice) {
        stopped_early_ = true;
        stop = true;
        ++offset_;
        break;
      }
    }
    const bool complete = offset_ >= static_cast<std::int64_t>(batches.size());
    if (complete) {
      epoch_ = e;
      offset_ = 0;
    }
    if (out_dir && (complete || offset_ > 0)) {
      save_checkpoint(*out_dir / ("ckpt_epoch_" + std::to_string(e)));
      if (cfg_.keep_checkpoints > 0) {
        auto all = list_checkpoints(*out_dir);
        while (static_cast<std::int64_t>(all.size()) > cfg_.keep_checkpoints) {
          fs::remove_all(all.front());
          all.erase(all.begin());
        }
      }
    }
  }
  return records;
}

void Trainer::save_checkpoint(const fs::path& dir) const {
  fs::create_directories(dir);
  save_tensors(dir, model_.store.params(), "params");
  save_tensors(dir, sgd_.buffers(), "momentum");
  save_config(dir / "model.cfg", cfg_.model.to_keys());
  write_state(dir / "state.cfg", epoch_, offset_, step_, cfg_);
}

void Trainer::resume(const fs::path& checkpoint) {
  if (!fs::is_directory(checkpoint)) throw ConfigError("checkpoint " + checkpoint.string() + " not found");
  auto kv = load_config(checkpoint / "state.cfg");
  const auto mine = cfg_.to_keys();
  for (const auto& [k, v] : mine) {
    if (!resume_relevant(k)) continue;
    const auto it = kv.find(k);
    if (it == kv.end() || it->second != v) {
      throw ConfigError("checkpoint " + checkpoint.string() + " was written with " + k + " = " +
                        (it == kv.end() ? std::string("<missing>") : it->second) + ", this run has " + v);
    }
  }
  load_tensors(checkpoint, model_.store.params(), "params");
  load_tensors(checkpoint, sgd_.buffers(), "momentum");
  epoch_ = keys::parse_i64("state.epochs_done", kv.at("state.epochs_done"));
  offset_ = keys::parse_i64("state.batches_into_epoch", kv.at("state.batches_into_epoch"));
  step_ = keys::parse_i64("state.steps_done", kv.at("state.steps_done"));
}

std::vector<fs::path> list_checkpoints(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("checkpoint directory " + dir.string() + " not found");
  static const std::regex name(R"(ckpt_epoch_(\d+))");
  std::vector<std::pair<std::int64_t, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const auto leaf = entry.path().filename().string();
    if (entry.is_directory() && std::regex_match(leaf, m, name)) found.emplace_back(std::stoll(m[1]), entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

Model<float> load_checkpoint_model(const fs::path& checkpoint) {
  ModelConfig cfg;
  const auto unknown = cfg.apply_keys(load_config(checkpoint / "model.cfg"));
  if (!unknown.empty()) throw ConfigError(checkpoint.string() + ": unknown model key '" + unknown.front() + "'");
  cfg.validate();
  auto m = build_model<float>(cfg, 0);
  load_tensors(checkpoint, m.store.params(), "params");
  return m;
}

// ---------------------------------------------------------------------------
// prediction

std::vector<std::uint8_t> average_argmax(const std::vector<Tensor<float>>& probs) {
  if (probs.empty()) throw ConfigError("prediction needs at least one checkpoint");
  const auto& shape = probs[0].shape();
  if (shape.size() != 4) throw DimensionError("average_argmax: expected [B, K, H, W]");
  for (const auto& p : probs) {
    if (p.shape() != shape) throw DimensionError("average_argmax: probability maps differ in shape");
  }
  const std::int64_t B = shape[0], K = shape[1], plane = shape[2] * shape[3];
  std::vector<double> avg(static_cast<std::size_t>(B * K * plane), 0.0);
  for (const auto& p : probs) {
    const auto v = p.values();
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += v[i];
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(B * plane));
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t q = 0; q < plane; ++q) {
      std::int64_t best = 0;
      for (std::int64_t k = 1; k < K; ++k) {
        // strict: ties stay with the lower index
        if (avg[static_cast<std::size_t>((b * K + k) * plane + q)] > avg[static_cast<std::size_t>((b * K + best) * plane + q)]) {
          best = k;
        }
      }
      out[static_cast<std::size_t>(b * plane + q)] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

std::vector<std::uint8_t> predict_averaged(const std::vector<const Model<float>*>& models,
                                           const FeatureMap<float>& in_a, const FeatureMap<float>& in_b) {
  if (models.empty()) throw ConfigError("prediction needs at least one checkpoint");
  for (const auto* m : models) {
    if (!(m->cfg == models[0]->cfg)) throw ConfigError("checkpoints disagree on the model config");
  }
  NoGradScope<float> no_grad;
  std::vector<Tensor<float>> probs;
  for (const auto* m : models) probs.push_back(softmax(forward(*m, in_a, in_b), 1));
  return average_argmax(probs);
}

std::vector<std::uint8_t> predict_volume(const std::vector<const Model<float>*>& models, const VolumeSample& v,
                                         std::int64_t batch) {
  if (batch < 1) throw ConfigError("batch must be >= 1");
  std::vector<std::uint8_t> labels;
  labels.reserve(v.labels.size());
  for (std::int64_t z0 = 0; z0 < v.size.depth; z0 += batch) {
    std::vector<Slice> slices;
    for (std::int64_t z = z0; z < std::min(v.size.depth, z0 + batch); ++z) slices.push_back(axial_slice(v, z));
    std::vector<std::size_t> idx(slices.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto b = make_batch(slices, idx);
    const auto out = predict_averaged(models, b.input_a, b.input_b);
    labels.insert(labels.end(), out.begin(), out.end());
  }
  return labels;
}

#define TRANSIAM_INSTANTIATE(T)                                                                              \
  template Tensor<T> one_hot<T>(std::span<const std::uint8_t>, std::int64_t, int, std::int64_t, std::int64_t); \
  template Tensor<T> dice_loss<T>(const Tensor<T>&, const Tensor<T>&, double);                              \
  template Tensor<T> ce_loss<T>(const Tensor<T>&, const Tensor<T>&);                                        \
  template LossBundle<T> joint_loss<T>(const Tensor<T>&, const Tensor<T>&, const LossWeights&);             \
  template LossBundle<T> combine_losses<T>(const Tensor<T>&, const Tensor<T>&, const LossWeights&);         \
  template class Sgd<T>;

TRANSIAM_INSTANTIATE(float)
TRANSIAM_INSTANTIATE(double)
#undef TRANSIAM_INSTANTIATE

}  // namespace transiam
