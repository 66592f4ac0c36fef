#include <benchmark/benchmark.h>

#include "ppm/models.hpp"
#include "ppm/nn/layers.hpp"
#include "ppm/nn/ops.hpp"
#include "ppm/rng.hpp"

using namespace ppm;
using namespace ppm::nn;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

std::vector<std::pair<int, int>> chain(int n) {
  std::vector<std::pair<int, int>> e;
  for (int k = 0; k + 1 < n; ++k) e.emplace_back(k, k + 1);
  return e;
}

}  // namespace

static void BM_GcnLayerForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  const auto edges = chain(n);
  std::vector<double> w(edges.size());
  for (auto& x : w) x = rng.uniform();
  const SparseOperator a = normalized_adjacency(n, edges, w);
  LayerConfig cfg;
  cfg.kind = LayerKind::kGcnConv;
  cfg.units = 64;
  GcnLayer layer(32, cfg, rng, "g");
  const Tensor x = Tensor::constant(random_matrix(n, 32, rng));
  for (auto _ : state) {
    Rng drop(0);
    benchmark::DoNotOptimize(layer.forward(x, a, false, drop).value().data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_GcnLayerForward)->Arg(16)->Arg(256)->Arg(4096);

static void BM_LstmForwardBackward(benchmark::State& state) {
  const Eigen::Index steps = state.range(0);
  const Eigen::Index batch = 32;
  Rng rng(2);
  LayerConfig cfg;
  cfg.kind = LayerKind::kLstm;
  cfg.units = 64;
  LstmLayer layer(16, cfg, rng, "l");
  const SequenceBatch seq{steps, batch, std::vector<std::uint8_t>(static_cast<std::size_t>(steps * batch), 1)};
  const Matrix xin = random_matrix(steps * batch, 16, rng);
  for (auto _ : state) {
    Rng drop(0);
    Tensor x = Tensor::constant(xin);
    Tensor y = sum_all(last_step(layer.forward(x, seq, true, drop), seq));
    y.backward();
    benchmark::DoNotOptimize(y.item());
  }
  state.SetItemsProcessed(state.iterations() * steps * batch);
}
BENCHMARK(BM_LstmForwardBackward)->Arg(8)->Arg(32);

static void BM_ModelTrainStep(benchmark::State& state) {
  const bool gcn = state.range(0) == 0;
  ModelConfig c;
  c.family = gcn ? Family::kGcn : Family::kLstm;
  LayerConfig enc;
  enc.kind = gcn ? LayerKind::kGcnConv : LayerKind::kLstm;
  enc.units = 32;
  LayerConfig dense;
  dense.units = 16;
  c.node_layers = {enc};
  c.case_layers = {dense};
  c.head_layers = {dense};
  const InputDims dims{24, 0, 4, 3};
  Model model(c, dims, 3);
  Rng rng(4);
  std::vector<CaseGraph> graphs;
  std::vector<CaseSequence> seqs;
  std::vector<std::size_t> targets;
  for (int i = 0; i < 32; ++i) {
    const int n = static_cast<int>(rng.uniform_int(4, 9));
    targets.push_back(static_cast<std::size_t>(i % 3));
    if (gcn) {
      CaseGraph g;
      g.node_matrix = random_matrix(n, 24, rng);
      g.edge_index.resize(2, n - 1);
      g.edge_weight.resize(n - 1);
      for (int k = 0; k + 1 < n; ++k) {
        g.edge_index(0, k) = k;
        g.edge_index(1, k) = k + 1;
        g.edge_weight(k) = rng.uniform();
      }
      g.case_vector = random_matrix(4, 1, rng).col(0);
      graphs.push_back(std::move(g));
    } else {
      CaseSequence s;
      s.seq_matrix = Matrix::Zero(9, 25);
      s.seq_matrix.topRows(n) = random_matrix(n, 25, rng);
      s.mask.assign(9, 0);
      std::fill(s.mask.begin(), s.mask.begin() + n, 1);
      s.case_vector = random_matrix(4, 1, rng).col(0);
      seqs.push_back(std::move(s));
    }
  }
  for (auto _ : state) {
    Tensor logits = gcn ? model.forward(std::span<const CaseGraph>(graphs), true)
                        : model.forward(std::span<const CaseSequence>(seqs), true);
    Tensor l = loss(logits, targets, LossKind::kCrossEntropy);
    l.backward();
    for (auto& p : model.parameters()) p.tensor.zero_grad();
    benchmark::DoNotOptimize(l.item());
  }
}
BENCHMARK(BM_ModelTrainStep)->Arg(0)->Arg(1);
