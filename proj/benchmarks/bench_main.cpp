#include <benchmark/benchmark.h>

#include "transiam/blocks.hpp"
#include "transiam/data.hpp"
#include "transiam/metrics.hpp"
#include "transiam/model.hpp"
#include "transiam/ops.hpp"
#include "transiam/rng.hpp"
#include "transiam/tape.hpp"
#include "transiam/training.hpp"

using namespace transiam;

namespace {

Tensor<float> random(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(shape, 0.0f);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

// args: channels, extent
void bm_conv2d(benchmark::State& state) {
  const auto c = state.range(0), hw = state.range(1);
  auto x = random({8, c, hw, hw}, 1), w = random({c, c, 3, 3}, 2), b = random({c}, 3);
  for (auto _ : state) {
    auto y = conv2d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 8 * c * c * 9 * hw * hw);
}
BENCHMARK(bm_conv2d)->Args({32, 64})->Args({64, 32})->Args({128, 16})->Unit(benchmark::kMillisecond);

void bm_depthwise(benchmark::State& state) {
  const auto c = state.range(0), hw = state.range(1);
  auto x = random({8, c, hw, hw}, 1), w = random({c, 1, 3, 3}, 2);
  for (auto _ : state) {
    auto y = depthwise_conv2d(x, w, 1, 1);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(bm_depthwise)->Args({128, 16})->Args({256, 8})->Unit(benchmark::kMicrosecond);

void bm_icmt_forward(benchmark::State& state) {
  const auto c = state.range(0), hw = state.range(1);
  ParamStore<float> store(4);
  auto p = make_icmt(store, "icmt", c, 4);
  auto x = random({8, c, hw, hw}, 5);
  for (auto _ : state) {
    auto y = icmt_block(x, p);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(bm_icmt_forward)->Args({128, 16})->Args({256, 8})->Unit(benchmark::kMillisecond);

void bm_tmm_forward(benchmark::State& state) {
  ParamStore<float> store(6);
  TMMParams<float> p{make_fusion(store, "b1", 256, 4), make_fusion(store, "b2", 256, 4)};
  auto xa = random({8, 256, 8, 8}, 7), xb = random({8, 256, 8, 8}, 8);
  for (auto _ : state) {
    auto [ya, yb] = tmm_block(xa, xb, p);
    benchmark::DoNotOptimize(ya.data());
    benchmark::DoNotOptimize(yb.data());
  }
}
BENCHMARK(bm_tmm_forward)->Unit(benchmark::kMillisecond);

void bm_model_forward(benchmark::State& state) {
  const auto hw = state.range(0);
  auto m = build_model<float>(ModelConfig{}, 9);
  auto a = random({1, 2, hw, hw}, 10), b = random({1, 2, hw, hw}, 11);
  for (auto _ : state) {
    auto y = forward(m, a, b);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(bm_model_forward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

// One SGD step of the default model on a batch of 8 64x64 slices.
void bm_train_step(benchmark::State& state) {
  std::vector<Slice> slices;
  for (int i = 0; slices.size() < 8; ++i) {
    for (auto& s : select_slices({generate_phantom(static_cast<std::uint64_t>(i), {16, 64, 64})}, {}, 0)) {
      if (slices.size() < 8) slices.push_back(s);
    }
  }
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
  const auto batch = make_batch(slices, idx);
  const auto target = one_hot<float>(batch.target, 8, 4, 64, 64);
  auto m = build_model<float>(ModelConfig{}, 14);
  Sgd<float> sgd(m.store.params(), SgdConfig{});
  for (auto _ : state) {
    sgd.zero_grad();
    {
      Tape<float> tape;
      TapeScope<float> scope(tape);
      const auto loss = joint_loss(softmax(forward(m, batch.input_a, batch.input_b), 1), target, LossWeights{});
      backward(loss.joint);
    }
    sgd.step();
  }
}
BENCHMARK(bm_train_step)->Unit(benchmark::kMillisecond)->Iterations(3);

void bm_hd95(benchmark::State& state) {
  const auto n = state.range(0);
  const Extents3 size{n, n, n};
  auto v = generate_phantom(12, size);
  auto gt = whole_tumor(v.labels);
  auto pred = gt;
  // shift the prediction one voxel along x
  for (std::size_t i = pred.size() - 1; i > 0; --i) pred[i] = pred[i - 1];
  for (auto _ : state) benchmark::DoNotOptimize(hd95(pred, gt, size));
}
BENCHMARK(bm_hd95)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void bm_phantom(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto v = generate_phantom(++seed, {16, 64, 64});
    benchmark::DoNotOptimize(v.labels.data());
  }
}
BENCHMARK(bm_phantom)->Unit(benchmark::kMillisecond);

void bm_augment(benchmark::State& state) {
  const auto s = axial_slice(generate_phantom(13, {16, 64, 64}), 8);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto out = augment(s, ++seed);
    benchmark::DoNotOptimize(out.labels.data());
  }
}
BENCHMARK(bm_augment)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
