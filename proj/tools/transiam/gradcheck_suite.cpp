#include <chrono>

#include "app.hpp"
#include "transiam/blocks.hpp"
#include "transiam/errors.hpp"
#include "transiam/grad_check.hpp"
#include "transiam/ops.hpp"
#include "transiam/rng.hpp"

namespace transiam::app {

Scope parse_scope(const std::string& name) {
  if (name == "primitives") return Scope::primitives;
  if (name == "blocks") return Scope::blocks;
  if (name == "model") return Scope::model;
  throw ConfigError("unknown scope '" + name + "' (expected primitives, blocks or model)");
}

std::string to_string(Scope s) {
  switch (s) {
    case Scope::primitives: return "primitives";
    case Scope::blocks: return "blocks";
    case Scope::model: return "model";
  }
  return "?";
}

namespace {

using D = double;
using Clock = std::chrono::steady_clock;

// fourth-order stencil: truncation near 1e-12, rounding well below the threshold
constexpr double kEps = 1e-3;

Tensor<D> random(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(derive_seed(seed, "gradcheck"));
  Tensor<D> t(shape, 0.0);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

std::string shape_text(const Shape& s) {
  std::string out;
  for (auto d : s) out += (out.empty() ? "" : "x") + std::to_string(d);
  return out;
}

void perturb(ParamStore<D>& store, std::uint64_t seed) {
  // norm gains sit near 1, everything else uniform in +-0.6
  for (auto& p : store.params()) {
    auto r = random(p.tensor.shape(), ++seed, -0.6, 0.6);
    auto t = p.tensor;
    const bool gain = p.name.find("gamma") != std::string::npos;
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = gain ? 1.0 + r[i] / 2 : r[i];
  }
}

std::vector<GradCheckInput<D>> inputs_of(ParamStore<D>& store) {
  std::vector<GradCheckInput<D>> in;
  for (auto& p : store.params()) in.push_back({p.name, p.tensor});
  return in;
}

class Runner {
 public:
  explicit Runner(const std::function<void(const SuiteResult&)>& cb) : cb_(cb) {}

  void check(const std::string& name, const std::function<Tensor<D>()>& loss, std::vector<GradCheckInput<D>> in,
             double eps = kEps, std::int64_t per_input = -1, Stencil stencil = Stencil::five_point) {
    const auto t0 = Clock::now();
    const auto r = grad_check<D>(loss, std::move(in), eps, per_input, 5, stencil);
    SuiteResult s{name, r.elements, r.max_rel_error, r.worst,
                  std::chrono::duration<double>(Clock::now() - t0).count(), r.per_input};
    if (cb_) cb_(s);
    results_.push_back(std::move(s));
  }

  std::vector<SuiteResult> take() { return std::move(results_); }

 private:
  const std::function<void(const SuiteResult&)>& cb_;
  std::vector<SuiteResult> results_;
};

void primitives(Runner& run) {
  const std::vector<Shape> shapes = {{1, 4, 3, 4}, {2, 6, 4, 7}, {1, 8, 5, 6}};
  std::uint64_t seed = 100;
  for (const auto& fm : shapes) {
    const auto n = fm[0], c = fm[1], h = fm[2], w = fm[3];
    const auto tag = " [" + shape_text(fm) + "]";
    auto x = random(fm, ++seed), y = random(fm, ++seed), probe = random(fm, ++seed);
    auto k = random({c, c, 3, 3}, ++seed, -0.5, 0.5), b = random({c}, ++seed);
    auto dk = random({c, 1, 3, 3}, ++seed), tk = random({c, c, 2, 2}, ++seed);
    auto gamma = random({c}, ++seed, 0.5, 1.5), g1 = random({n, 1, h, w}, ++seed);
    auto a2 = random({h, w}, ++seed), b2 = random({w, 3}, ++seed);
    auto xr = x.detach();
    for (auto& v : xr.values()) v = v >= 0 ? v + 0.05 : v - 0.05;  // away from the kink
    auto dot = [&](const Tensor<D>& out) { return sum(mul(out, probe)); };

    run.check("matmul" + tag, [&] { auto m = matmul(a2, b2); return sum(mul(m, m)); }, {{"a", a2}, {"b", b2}});
    run.check("bmm" + tag, [&] {
      auto q = to_heads(x, 2), kk = to_heads(y, 2);
      auto o = bmm(bmm(q, kk, true), kk);
      return sum(mul(o, o));
    }, {{"x", x}, {"y", y}});
    run.check("conv2d" + tag, [&] { return dot(conv2d(x, k, b, 1, 1)); }, {{"x", x}, {"k", k}, {"b", b}});
    run.check("conv2d_stride2" + tag, [&] { return sum(conv2d(x, k, b, 2, 1)); }, {{"x", x}, {"k", k}});
    run.check("depthwise_conv2d" + tag, [&] { return dot(depthwise_conv2d(x, dk, 1, 1)); }, {{"x", x}, {"dk", dk}});
    run.check("conv_transpose2d" + tag, [&] {
      auto u = conv_transpose2d(x, tk, b, 2);
      return sum(mul(u, u));
    }, {{"x", x}, {"tk", tk}, {"b", b}});
    run.check("softmax" + tag, [&] { return dot(softmax(x, 1)); }, {{"x", x}});
    run.check("relu" + tag, [&] { return dot(relu(xr)); }, {{"x", xr}});
    run.check("sigmoid" + tag, [&] { return dot(sigmoid(x)); }, {{"x", x}});
    run.check("mul" + tag, [&] { return dot(mul(x, y)); }, {{"x", x}, {"y", y}});
    run.check("add_sub_scale" + tag, [&] { return dot(sub(add(x, y), scale(y, 3.0))); }, {{"x", x}, {"y", y}});
    run.check("layer_norm" + tag, [&] { return dot(layer_norm(x, gamma, b)); }, {{"x", x}, {"g", gamma}, {"b", b}});
    run.check("group_norm" + tag, [&] { return dot(group_norm(x, gamma, b, 2)); }, {{"x", x}, {"g", gamma}, {"b", b}});
    run.check("channel_broadcast_mul" + tag, [&] { return dot(channel_broadcast_mul(x, g1)); }, {{"x", x}, {"g", g1}});
    run.check("concat_channels" + tag, [&] {
      auto cat = concat_channels(x, y);
      return sum(mul(cat, cat));
    }, {{"x", x}, {"y", y}});
    run.check("heads" + tag, [&] { return dot(from_heads(to_heads(x, 2), 2, h, w)); }, {{"x", x}});
    run.check("nchw_to_rows" + tag, [&] { return sum(mul(nchw_to_rows(x), nchw_to_rows(probe))); }, {{"x", x}});
    run.check("reshape_mean" + tag, [&] {
      const Shape flat{n * c, h * w};
      return mean(mul(reshape(x, flat), reshape(probe, flat)));
    }, {{"x", x}});

    // losses on softmax outputs, so probabilities stay inside (0, 1)
    const Shape maps{n, 4, h, w};
    auto logits = random(maps, ++seed, -2.0, 2.0);
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(n * h * w));
    Rng lr(derive_seed(seed, "labels"));
    for (auto& l : labels) l = static_cast<std::uint8_t>(lr.below(4));
    const auto target = one_hot<D>(labels, n, 4, h, w);
    run.check("dice_loss" + tag, [&] { return dice_loss(softmax(logits, 1), target); }, {{"logits", logits}});
    run.check("ce_loss" + tag, [&] { return ce_loss(softmax(logits, 1), target); }, {{"logits", logits}});
    run.check("joint_loss" + tag, [&] { return joint_loss(softmax(logits, 1), target, LossWeights{}).joint; },
              {{"logits", logits}});
  }
}

void blocks(Runner& run) {
  std::uint64_t seed = 200;
  for (const auto& [in, out, shape] : std::vector<std::tuple<int, int, Shape>>{
           {2, 8, {1, 2, 5, 5}}, {8, 8, {2, 8, 4, 4}}, {4, 16, {1, 4, 6, 3}}}) {
    ParamStore<D> store(++seed);
    auto p = make_conv_block(store, "conv_block", in, out);
    perturb(store, ++seed);
    auto x = random(shape, ++seed), probe = random({shape[0], out, shape[2], shape[3]}, ++seed);
    auto inputs = inputs_of(store);
    inputs.push_back({"x", x});
    run.check("conv_block [" + shape_text(shape) + " -> " + std::to_string(out) + "]",
              [&] { return sum(mul(conv_block(x, p), probe)); }, inputs);
  }
  {
    ParamStore<D> store(++seed);
    auto p = make_downsample(store, "down", 4, 8);
    perturb(store, ++seed);
    auto x = random({1, 4, 6, 6}, ++seed), probe = random({1, 8, 3, 3}, ++seed);
    auto inputs = inputs_of(store);
    inputs.push_back({"x", x});
    run.check("downsample [1x4x6x6]", [&] { return sum(mul(downsample(x, p), probe)); }, inputs);
  }
  for (const auto& shape : std::vector<Shape>{{1, 8, 6, 6}, {2, 8, 3, 5}, {1, 16, 4, 4}}) {
    for (bool proj : {true, false}) {
      for (bool ffn : {true, false}) {
        ParamStore<D> store(++seed);
        auto p = make_icmt(store, "icmt", shape[1], 4, proj, ffn);
        perturb(store, ++seed);
        auto x = random(shape, ++seed), probe = random(shape, ++seed);
        auto inputs = inputs_of(store);
        inputs.push_back({"x", x});
        run.check("icmt [" + shape_text(shape) + (proj ? " conv-proj" : " linear-proj") + (ffn ? " conv-ffn" : " mlp") +
                      "]",
                  [&] { return sum(mul(icmt_block(x, p), probe)); }, inputs);
      }
    }
  }
  for (const auto& shape : std::vector<Shape>{{1, 4, 3, 3}, {2, 8, 4, 3}, {1, 8, 5, 5}}) {
    ParamStore<D> store(++seed);
    auto p = make_fusion(store, "fusion", shape[1], 2);
    perturb(store, ++seed);
    auto x1 = random(shape, ++seed), x2 = random(shape, ++seed), probe = random(shape, ++seed);
    auto inputs = inputs_of(store);
    inputs.push_back({"x1", x1});
    inputs.push_back({"x2", x2});
    run.check("fusion_block [" + shape_text(shape) + "]", [&] { return sum(mul(fusion_block(x1, x2, p), probe)); },
              inputs);
  }
  for (auto kind : {FuseKind::add, FuseKind::concat, FuseKind::attention_gate, FuseKind::tmm}) {
    const Shape shape{1, 8, 4, 4};
    ParamStore<D> store(++seed);
    auto p = make_fuse(store, "fuse", kind, 8, 2);
    perturb(store, ++seed);
    auto xa = random(shape, ++seed), xb = random(shape, ++seed);
    auto pa = random(shape, ++seed), pb = random(shape, ++seed);
    auto inputs = inputs_of(store);
    inputs.push_back({"xa", xa});
    inputs.push_back({"xb", xb});
    const std::string name = kind == FuseKind::tmm ? "tmm_block" : "fuse_" + to_string(kind);
    run.check(name + " [" + shape_text(shape) + "]", [&] {
      auto [ya, yb] = fuse_variant(xa, xb, p);
      return add(sum(mul(ya, pa)), sum(mul(yb, pb)));
    }, inputs);
  }
}

void model(Runner& run) {
  auto m = build_model<D>(ModelConfig{}, 12);
  auto a = random({1, 2, 16, 16}, 1), b = random({1, 2, 16, 16}, 2);
  auto weights = random({1, 4, 16, 16}, 3);
  std::vector<GradCheckInput<D>> inputs;
  for (const auto& p : m.store.params()) inputs.push_back({p.name, p.tensor});
  inputs.push_back({"input_a", a});
  inputs.push_back({"input_b", b});
  // two probes per tensor; a wide kink-aware stencil keeps cancellation in
  // the deep stages below truncation error
  run.check("model [default, 1x2x16x16]", [&] { return sum(mul(forward(m, a, b), weights)); }, inputs, 1e-2, 2,
            Stencil::five_point);
}

}  // namespace

std::vector<SuiteResult> gradcheck_suite(Scope s, const std::function<void(const SuiteResult&)>& on_case) {
  Runner run(on_case);
  switch (s) {
    case Scope::primitives: primitives(run); break;
    case Scope::blocks: blocks(run); break;
    case Scope::model: model(run); break;
  }
  return run.take();
}

}  // namespace transiam::app
