#include <benchmark/benchmark.h>

#include <camaudit/cam.hpp>
#include <camaudit/layers.hpp>
#include <camaudit/model.hpp>
#include <camaudit/rng.hpp>
#include <camaudit/train.hpp>

using namespace camaudit;

namespace {

Tensor noise(std::vector<std::size_t> shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform();
  return t;
}

void BM_Conv2d(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  ConvFilterBank bank(channels, channels, 3, 1);
  bank.init_gaussian(rng, 0.1);
  const Tensor x = noise({channels, 28, 28}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, bank));
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(16)->Arg(32);

void BM_MiniVggForward(benchmark::State& state) {
  const Model m = build_mini_masked_vgg({});
  const Tensor x = noise({1, 56, 56}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, x));
}
BENCHMARK(BM_MiniVggForward);

void BM_MiniVggBackward(benchmark::State& state) {
  const Model m = build_mini_masked_vgg({});
  const ForwardTrace t = forward(m, noise({1, 56, 56}, 4));
  const auto ce = cross_entropy_with_softmax(t.logits(), 3);
  for (auto _ : state) benchmark::DoNotOptimize(grad_params(t, m, ce.gradient));
}
BENCHMARK(BM_MiniVggBackward);

void BM_Explain(benchmark::State& state) {
  const auto method = static_cast<CamMethod>(state.range(0));
  const Model m = build_mini_masked_vgg({});
  const ForwardTrace t = forward(m, noise({1, 56, 56}, 5));
  state.SetLabel(std::string(method_name(method)));
  for (auto _ : state) benchmark::DoNotOptimize(explain(method, t, m));
}
BENCHMARK(BM_Explain)->DenseRange(0, 7)->Unit(benchmark::kMillisecond);

void BM_ClosedFormAlpha(benchmark::State& state) {
  ModelMConfig c;
  c.filters = static_cast<std::size_t>(state.range(0));
  c.dense_widths = {1};
  c.band_rows = 6;
  const Model m = build_model_m(c);
  const ForwardTrace t = forward(m, noise({1, 28, 28}, 6));
  for (auto _ : state) benchmark::DoNotOptimize(closed_form_alpha(t, m, 0));
}
BENCHMARK(BM_ClosedFormAlpha)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
