#include "transiam/params.hpp"

#include <cmath>

namespace transiam {

template <typename T>
Tensor<T> ParamStore<T>::kaiming(const std::string& name, Shape shape, std::int64_t fan_in) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (T& v : t.values()) v = static_cast<T>(rng_.uniform(-bound, bound));
  return add(name, t);
}

template <typename T>
Tensor<T> ParamStore<T>::constant(const std::string& name, Shape shape, T value) {
  return add(name, Tensor<T>(std::move(shape), value));
}

template <typename T>
Tensor<T> ParamStore<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return params_[it->second].tensor;
}

template <typename T>
std::int64_t ParamStore<T>::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) {
    Tensor<T> t = p.tensor;
    t.clear_grad();
  }
}

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Tensor<T> t) {
  if (index_.count(name) != 0) throw ConfigError("duplicate parameter name '" + name + "'");
  t.set_requires_grad(true);
  index_.emplace(name, params_.size());
  params_.push_back({name, t});
  return t;
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace transiam
