#include "transiam/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "transiam/ops.hpp"

#include "transiam/rng.hpp"

namespace transiam {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

// Derivative at the base point from evaluations that all share its relu
// pattern, i.e. lie on the same smooth piece. The step starts at eps and
// shrinks 4x at a time. Five-point central when both sides are clean,
// second-order one-sided toward the clean side otherwise.
template <typename At, typename Span>
double kink_free_derivative(At& at, Span& span, KinkWatch& watch, std::uint64_t base_fingerprint,
                            double base_value, double eps) {
  auto probe = [&](double h, bool& clean) {
    watch.reset();
    const double f = at(h);
    clean = watch.fingerprint() == base_fingerprint;
    return f;
  };
  double central = 0.0;
  std::optional<double> one_sided;
  for (double h = eps; h >= eps * 1e-3; h /= 4) {
    bool p1c, m1c, p2c, m2c;
    const double p1 = probe(h, p1c), m1 = probe(-h, m1c);
    const double p2 = probe(2 * h, p2c), m2 = probe(-2 * h, m2c);
    const double narrow = (p1 - m1) / span(h);
    // Richardson combination of the h and 2h central differences
    central = (4 * narrow - (p2 - m2) / span(2 * h)) / 3;
    if (p1c && m1c && p2c && m2c) return central;
    // kept from the smallest step where one side is clean
    if (p1c && p2c) {
      one_sided = (-3 * base_value + 4 * p1 - p2) / span(h);
    } else if (m1c && m2c) {
      one_sided = (3 * base_value - 4 * m1 + m2) / span(h);
    }
  }
  return one_sided.value_or(central);
}

}  // namespace

template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& loss,
                           std::vector<GradCheckInput<T>> inputs, double eps,
                           std::int64_t max_per_input, std::uint64_t seed, Stencil stencil) {
  if (!(eps > 0.0)) throw DomainError("grad_check: eps must be positive");
  for (auto& in : inputs) {
    in.tensor.clear_grad();
    in.tensor.set_requires_grad(true);
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape<T> tape;
    TapeScope<T> scope(tape);
    Tensor<T> l = loss();
    backward(l);
    for (auto& in : inputs) {
      if (in.tensor.has_grad()) {
        analytic.emplace_back(in.tensor.grad().begin(), in.tensor.grad().end());
      } else {
        analytic.emplace_back(static_cast<std::size_t>(in.tensor.numel()), 0.0);
      }
    }
  }

  NoGradScope<T> no_grad;
  std::optional<KinkWatch> watch;
  std::uint64_t base_fingerprint = 0;
  double base_value = 0.0;
  if (stencil == Stencil::five_point) {
    watch.emplace();
    base_value = static_cast<double>(loss().item());
    base_fingerprint = watch->fingerprint();
  }
  GradCheckResult result;
  Rng rng(seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<T>& x = inputs[k].tensor;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(x.numel()));
    std::iota(idx.begin(), idx.end(), 0);
    if (max_per_input > 0 && x.numel() > max_per_input) {
      // partial Fisher-Yates
      for (std::int64_t i = 0; i < max_per_input; ++i) {
        const auto j = i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(x.numel() - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
      }
      idx.resize(static_cast<std::size_t>(max_per_input));
    }
    double worst = 0.0;
    for (auto i : idx) {
      const T v = x[i];
      auto at = [&](double h) {
        x[i] = static_cast<T>(v + h);
        const double f = static_cast<double>(loss().item());
        x[i] = v;
        return f;
      };
      // actual step after rounding to T
      auto span = [&](double h) {
        return static_cast<double>(static_cast<T>(v + h)) - static_cast<double>(static_cast<T>(v - h));
      };
      double numeric = 0.0;
      if (stencil == Stencil::three_point) {
        numeric = (at(eps) - at(-eps)) / span(eps);
      } else {
        numeric = kink_free_derivative(at, span, *watch, base_fingerprint, base_value, eps);
      }
      const double err = relative_error(analytic[k][static_cast<std::size_t>(i)], numeric);
      ++result.elements;
      worst = std::max(worst, err);
      if (result.worst.empty() || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = inputs[k].name + "[" + std::to_string(i) + "]";
      }
    }
    result.per_input.emplace_back(inputs[k].name, worst);
  }
  for (auto& in : inputs) in.tensor.clear_grad();
  return result;
}

template <typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x, double eps) {
  return grad_check<T>([&] { return f(x); }, {{"x", x}}, eps).max_rel_error;
}

#define TRANSIAM_INSTANTIATE(T)                                                                  \
  template GradCheckResult grad_check<T>(const std::function<Tensor<T>()>&,                     \
                                         std::vector<GradCheckInput<T>>, double, std::int64_t,  \
                                         std::uint64_t, Stencil);                               \
  template double grad_check<T>(const std::function<Tensor<T>(const Tensor<T>&)>&, Tensor<T>,  \
                                double);

TRANSIAM_INSTANTIATE(float)
TRANSIAM_INSTANTIATE(double)
#undef TRANSIAM_INSTANTIATE

}  // namespace transiam
