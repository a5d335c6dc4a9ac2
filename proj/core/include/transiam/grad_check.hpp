#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "transiam/tape.hpp"
#include "transiam/tensor.hpp"

namespace transiam {

/// Disables recording for the current scope.
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : previous_(active_tape_slot<T>()) { active_tape_slot<T>() = nullptr; }
  ~NoGradScope() { active_tape_slot<T>() = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double analytic, double numeric);

template <typename T>
struct GradCheckInput {
  std::string name;
  Tensor<T> tensor;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;          // "name[index]" of the worst element
  std::int64_t elements = 0;  // finite-difference probes taken
  /// Worst relative error per input, in input order.
  std::vector<std::pair<std::string, double>> per_input;
};

enum class Stencil {
  three_point,  // (f(x + eps) - f(x - eps)) / (2 eps), error O(eps^2)
  // Fourth-order central difference, error O(eps^4), taken only from points
  // where every relu is in the same state as at the base point. The step
  // shrinks 4x while that fails; if no step is clean on both sides, a
  // second-order one-sided difference toward a clean side is used.
  five_point,
};

/// Compares tape gradients against central differences
/// (f(x + eps) - f(x - eps)) / (2 eps) for the elements of every input.
/// `loss` must build a scalar from the current values of the inputs.
/// With max_per_input > 0, that many elements per input are probed, picked
/// deterministically from `seed`; otherwise every element is.
/// The five-point stencil tolerates a larger eps, which matters when tiny
/// gradients would otherwise drown in the roundoff of a deep forward pass.
/// It re-runs `loss` several times per element, so `loss` must be a pure
/// function of the inputs.
/// Run at 64-bit for meaningful tolerances; the 32-bit instantiation exists
/// for coarse checks of the training precision.
template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& loss,
                           std::vector<GradCheckInput<T>> inputs, double eps,
                           std::int64_t max_per_input = -1, std::uint64_t seed = 0,
                           Stencil stencil = Stencil::three_point);

/// Single-input form: worst relative error of d f(x) / dx.
template <typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x, double eps);

}  // namespace transiam
