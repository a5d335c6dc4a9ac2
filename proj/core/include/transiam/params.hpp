#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "transiam/rng.hpp"
#include "transiam/tensor.hpp"

namespace transiam {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

/// Flat registry of trainable tensors under unique hierarchical names
/// ("enc_a.stage2.icmt0.proj.w_q"). Registration order is creation order,
/// which fixes the initialization draw sequence for a seed.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

  /// Kaiming-uniform for relu networks: U(-b, b) with b = sqrt(6 / fan_in).
  Tensor<T> kaiming(const std::string& name, Shape shape, std::int64_t fan_in);
  Tensor<T> constant(const std::string& name, Shape shape, T value);

  const std::vector<NamedParam<T>>& params() const { return params_; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  /// Throws ConfigError for unknown names.
  Tensor<T> at(const std::string& name) const;

  /// Total scalar count across all parameters.
  std::int64_t scalar_count() const;
  void zero_grad();

 private:
  Tensor<T> add(const std::string& name, Tensor<T> t);

  Rng rng_;
  std::vector<NamedParam<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace transiam
