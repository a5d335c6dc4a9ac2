#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "transiam/tensor.hpp"

namespace transiam {

/// Ordered record of primitive applications for reverse-mode differentiation.
///
/// Entries are appended in execution order, so every input precedes its
/// consumer. One tape covers one training step; it is confined to the thread
/// that owns it.
template <typename T>
class Tape {
 public:
  /// Reads out.grad() and accumulates into the grads of the inputs that require them.
  using BackwardFn = std::function<void(Tensor<T>& out, std::vector<Tensor<T>>& inputs)>;

  struct Entry {
    std::string op;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::int64_t record(std::string_view op, std::vector<Tensor<T>> inputs, Tensor<T>& output,
                      BackwardFn fn) {
    const auto id = static_cast<std::int64_t>(entries_.size());
    auto& impl = output.impl();
    impl.requires_grad = true;
    impl.node_id = id;
    impl.tape = this;
    entries_.push_back(Entry{std::string(op), std::move(inputs), output, std::move(fn)});
    return id;
  }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward in reverse order.
  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) {
      throw TapeError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
    }
    if (loss.tape() != this || !loss.node_id()) {
      throw TapeError("backward called on a tensor that was not produced on this tape");
    }
    Tensor<T> seed = loss;
    seed.ensure_grad()[0] += T{1};
    for (std::int64_t i = *loss.node_id(); i >= 0; --i) {
      Entry& e = entries_[static_cast<std::size_t>(i)];
      if (!e.output.has_grad()) continue;
      e.backward(e.output, e.inputs);
    }
  }

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }

  void clear() { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

template <typename T>
Tape<T>*& active_tape_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

/// Tape that operations on this thread currently record onto, or nullptr.
template <typename T>
Tape<T>* active_tape() {
  return active_tape_slot<T>();
}

/// Installs a tape as the recording target for the current scope.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(active_tape_slot<T>()) { active_tape_slot<T>() = &tape; }
  ~TapeScope() { active_tape_slot<T>() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Records `out` on the active tape when any input requires grad. Without an
/// active tape, or with only constant inputs, nothing is recorded.
template <typename T>
void record_op(std::string_view op, std::vector<Tensor<T>> inputs, Tensor<T>& out,
               typename Tape<T>::BackwardFn fn) {
  Tape<T>* tape = active_tape<T>();
  if (tape == nullptr) return;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return;
  tape->record(op, std::move(inputs), out, std::move(fn));
}

/// Backward pass on the tape that produced `loss`.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.tape() == nullptr) {
    throw TapeError("backward called on a tensor that is not on any tape");
  }
  const_cast<Tape<T>*>(loss.tape())->backward(loss);
}

}  // namespace transiam
