#pragma once

#include <cstdint>
#include <memory>
#include <new>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "transiam/errors.hpp"

namespace transiam {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
class Tape;

namespace detail {

// 64-byte aligned storage keeps vectorized kernels on the same code path for
// a given shape, so results are bit-identical from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using Storage = std::vector<T, AlignedAllocator<T>>;

template <typename T>
struct TensorImpl {
  Shape shape;
  Storage<T> values;
  Storage<T> grad;  // empty means absent
  bool requires_grad = false;
  std::int64_t node_id = -1;
  const Tape<T>* tape = nullptr;
};

}  // namespace detail

/// Dense row-major array with an optional gradient accumulator.
///
/// Tensor is a shared handle: copies alias the same storage, the way
/// parameters are shared between a model and the tape that records
/// operations on them. Use clone() or detach() for an independent copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    validate_shape(shape);
    impl_->values.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    validate_shape(shape);
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
      throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                           std::to_string(shape_numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->values.assign(values.begin(), values.end());
  }

  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  int rank() const { return static_cast<int>(impl().shape.size()); }
  std::int64_t dim(int axis) const {
    const int r = rank();
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
      throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                           shape_string(shape()));
    }
    return impl().shape[static_cast<std::size_t>(a)];
  }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl().values.size()); }

  std::span<T> values() { return impl().values; }
  std::span<const T> values() const { return impl().values; }
  T* data() { return impl().values.data(); }
  const T* data() const { return impl().values.data(); }
  T operator[](std::int64_t i) const { return impl().values[static_cast<std::size_t>(i)]; }
  T& operator[](std::int64_t i) { return impl().values[static_cast<std::size_t>(i)]; }

  T item() const {
    if (numel() != 1) {
      throw DimensionError("item() needs a single element, shape is " + shape_string(shape()));
    }
    return impl().values.front();
  }

  bool requires_grad() const { return impl().requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl().requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !impl().grad.empty(); }
  std::span<T> grad() { return impl().grad; }
  std::span<const T> grad() const { return impl().grad; }

  /// Gradient buffer, allocated as zeros on first use.
  std::span<T> ensure_grad() {
    auto& g = impl().grad;
    if (g.empty()) g.assign(impl().values.size(), T{0});
    return g;
  }
  void clear_grad() {
    impl().grad.clear();
    impl().grad.shrink_to_fit();
  }

  std::optional<std::int64_t> node_id() const {
    if (impl().node_id < 0) return std::nullopt;
    return impl().node_id;
  }
  const Tape<T>* tape() const { return impl().tape; }

  /// Independent copy of the values, not linked to any tape and not requiring grad.
  Tensor detach() const {
    Tensor out;
    out.impl_ = std::make_shared<detail::TensorImpl<T>>();
    out.impl_->shape = shape();
    out.impl_->values = impl().values;
    return out;
  }

  /// Independent copy that keeps the requires_grad flag (a fresh leaf).
  Tensor clone() const {
    Tensor out = detach();
    out.set_requires_grad(requires_grad());
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> v(impl().values.begin(), impl().values.end());
    return Tensor<U>(shape(), std::move(v));
  }

  bool is_same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend class Tape<T>;

  static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
    for (auto e : shape) {
      if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    }
  }

  detail::TensorImpl<T>& impl() {
    if (!impl_) throw DimensionError("use of an undefined tensor");
    return *impl_;
  }
  const detail::TensorImpl<T>& impl() const {
    if (!impl_) throw DimensionError("use of an undefined tensor");
    return *impl_;
  }

  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

/// Batch x channel x height x width activation. Same storage as Tensor;
/// operations that require rank 4 check it at entry.
template <typename T>
using FeatureMap = Tensor<T>;

/// Throws DimensionError unless x is rank 4.
template <typename T>
void expect_feature_map(const Tensor<T>& x, const char* who) {
  if (x.rank() != 4) {
    throw DimensionError(std::string(who) + " expects a (batch, channel, height, width) map, got " +
                         shape_string(x.shape()));
  }
}

}  // namespace transiam
