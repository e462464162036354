#include <benchmark/benchmark.h>

#include <vector>

#include "fusilade/dataio.hpp"
#include "fusilade/histology.hpp"
#include "fusilade/metrics.hpp"
#include "fusilade/model.hpp"
#include "fusilade/nn.hpp"
#include "fusilade/rng.hpp"
#include "fusilade/train.hpp"

using namespace fusilade;

namespace {

Tensor2 noise(std::size_t r, std::size_t c, Rng& rng) {
  Tensor2 t(r, c);
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

void BM_DenseForward(benchmark::State& state) {
  const auto in = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto x = noise(16, in, rng);
  const auto p = nn::glorot_uniform(in, 512, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::dense_forward(x, p));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_DenseForward)->Arg(50)->Arg(2048);

void BM_DenseBackward(benchmark::State& state) {
  Rng rng(2);
  const auto x = noise(16, 2048, rng);
  auto p = nn::glorot_uniform(2048, 512, rng);
  const auto g = noise(16, 512, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::dense_backward(x, p, g));
}
BENCHMARK(BM_DenseBackward);

// One gene token attending over P patch embeddings.
void BM_AttentionForward(benchmark::State& state) {
  const auto patches = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const auto q = noise(1, 128, rng);
  const auto ctx = noise(patches, 128, rng);
  const auto p = nn::make_attention(128, 128, 4, 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::attention_forward(q, ctx, p));
}
BENCHMARK(BM_AttentionForward)->Arg(16)->Arg(35)->Arg(256);

void BM_AttentionBackward(benchmark::State& state) {
  Rng rng(4);
  const auto q = noise(1, 128, rng);
  const auto ctx = noise(35, 128, rng);
  auto p = nn::make_attention(128, 128, 4, 32, rng);
  nn::AttentionTape tape;
  const auto out = nn::attention_forward(q, ctx, p, &tape);
  const auto g = noise(out.rows(), out.cols(), rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::attention_backward(tape, p, g));
}
BENCHMARK(BM_AttentionBackward);

void BM_PrAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  std::vector<int> y(n);
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(rng.below(2));
    p[i] = 0.3 * y[i] + 0.7 * rng.uniform();
  }
  y[0] = 1;
  for (auto _ : state) benchmark::DoNotOptimize(metrics::pr_auc(y, p));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_PrAuc)->Arg(200)->Arg(10000)->Arg(1000000);

void BM_Otsu(benchmark::State& state) {
  Rng rng(6);
  histology::GrayHistogram h{};
  for (auto& c : h) c = rng.below(5000);
  for (auto _ : state) benchmark::DoNotOptimize(histology::otsu_threshold(h));
}
BENCHMARK(BM_Otsu);

void BM_ExtractPatches(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(7);
  histology::RasterImage img(n, n);
  for (auto& b : img.data) b = static_cast<std::uint8_t>(rng.below(256));
  for (auto _ : state) benchmark::DoNotOptimize(histology::extract_patches(img));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(img.data.size()));
}
BENCHMARK(BM_ExtractPatches)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond);

// One epoch over the default 200-patient synthetic cohort at desk dimensions.
void BM_TrainEpoch(benchmark::State& state) {
  const auto strategy = static_cast<model::Strategy>(state.range(0));
  const auto cohort = io::to_cohort(io::generate_synthetic(io::SynthOptions{}));
  train::Split split;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    split.views.push_back({cohort.genes.patient_ids[i], cohort.genes.values.row(i), &cohort.patches[i]});
    split.labels.push_back(cohort.labels[i]);
  }
  model::ModelDims dims;
  dims.gene_dim = cohort.genes.genes();
  dims.feature_dim = cohort.patches.front().cols();
  dims.hidden = 64;
  dims.embed = 32;
  dims.heads = 4;
  dims.head_dim = 8;
  train::TrainConfig cfg;
  cfg.learning_rate = 3e-4;
  cfg.max_epochs = 1;
  for (auto _ : state) {
    state.PauseTiming();
    auto m = model::make_model(strategy, dims, 1);
    state.ResumeTiming();
    benchmark::DoNotOptimize(train::train_model(m, split, {}, cfg));
  }
  state.SetLabel(std::string(model::to_string(strategy)));
}
BENCHMARK(BM_TrainEpoch)
    ->Arg(static_cast<int>(model::Strategy::concat))
    ->Arg(static_cast<int>(model::Strategy::cross_attention))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
