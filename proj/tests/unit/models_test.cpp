#include <gtest/gtest.h>

#include "ppm/error.hpp"
#include "ppm/models.hpp"
#include "ppm_test/support.hpp"

using namespace ppm;
using ppm_test::layer;
using ppm_test::small_config;
using nn::LayerKind;

namespace {

void zero_all(Model& m) {
  for (auto& p : m.parameters()) {
    nn::Tensor t = p.tensor;
    t.mutable_value().setZero();
  }
}

}  // namespace

TEST(ModelConfig, LstmParameterCountClosedForm) {
  ModelConfig c;
  c.family = Family::kLstm;
  c.node_layers = {layer(LayerKind::kLstm, 7), layer(LayerKind::kLstm, 5)};
  c.case_layers = {layer(LayerKind::kDense, 4)};
  c.head_layers = {layer(LayerKind::kDense, 6)};
  const InputDims dims{9, 0, 3, 4};
  Model m(c, dims, 1);
  const std::int64_t d = dims.node_dim + 1;
  const std::int64_t expected = 4 * (d * 7 + 7 * 7 + 7) + 4 * (7 * 5 + 5 * 5 + 5)  // lstm layers
                                + (3 * 4 + 4)                                     // case dense
                                + ((5 + 4) * 6 + 6)                               // head
                                + (6 * 4 + 4);                                    // output
  EXPECT_EQ(m.parameter_count(), expected);
  EXPECT_EQ(nn::LstmLayer::cell_parameter_count(d, 7), 4 * (d * 7 + 49 + 7));
}

TEST(ModelConfig, DurationAwareBranchesMirror) {
  ModelConfig c = small_config(Family::kGcn, true, 6);
  Model m(c, InputDims{6, 6, 2, 3}, 2);
  const auto state = m.state();
  EXPECT_EQ(state.at("node.0.w").rows(), state.at("pseudo.0.w").rows());
  EXPECT_EQ(state.at("node.0.w").cols(), state.at("pseudo.0.w").cols());
}

TEST(ModelConfig, RangeChecks) {
  ModelConfig c = small_config(Family::kGcn, false);
  c.node_layers.assign(6, layer(LayerKind::kGcnConv, 8));
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(Family::kLstm, false);
  c.node_layers.assign(4, layer(LayerKind::kLstm, 8));
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(Family::kLstm, false);
  c.batch_size = 20;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(Family::kLstm, false);
  c.node_layers[0].kind = LayerKind::kGcnConv;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(Family::kLstm, false);
  c.post_fusion_layers = {layer(LayerKind::kLstm, 4)};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, JsonRoundTripAndVariantName) {
  ModelConfig c = small_config(Family::kGcn, true);
  c.node_layers[1].skip_connection = true;
  c.node_layers[0].dropout = 0.2;
  c.node_layers[0].batch_norm = true;
  c.optim.learning_rate = 0.01;
  c.loss = nn::LossKind::kMultiMargin;
  const ModelConfig back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(c.variant_name(), "D-GCN");
  EXPECT_EQ(small_config(Family::kLstm, false).variant_name(), "B-LSTM");
}

TEST(Model, DurationAwareWithoutPseudoChannelIsConfigError) {
  EXPECT_THROW(Model(small_config(Family::kLstm, true), InputDims{3, 0, 2, 2}, 0), ConfigError);
  Model m(small_config(Family::kGcn, true), InputDims{3, 2, 2, 2}, 0);
  ppm::Rng rng(1);
  std::vector<CaseGraph> batch{ppm_test::random_graph(3, 3, 0, 2, 2, rng)};
  EXPECT_THROW(m.forward(std::span<const CaseGraph>(batch), false), ConfigError);
}

TEST(Model, ZeroParametersGiveZeroLogits) {
  ppm::Rng rng(3);
  for (auto family : {Family::kGcn, Family::kLstm}) {
    for (bool da : {false, true}) {
      const InputDims dims{3, da ? 2 : 0, 2, 3};
      Model m(small_config(family, da), dims, 5);
      zero_all(m);
      nn::Tensor logits;
      if (family == Family::kGcn) {
        std::vector<CaseGraph> b{ppm_test::random_graph(4, 3, dims.pseudo_dim, 2, 3, rng)};
        logits = m.forward(std::span<const CaseGraph>(b), false);
      } else {
        std::vector<CaseSequence> b{ppm_test::random_sequence(3, 5, 3, dims.pseudo_dim, 2, 3, rng)};
        logits = m.forward(std::span<const CaseSequence>(b), false);
      }
      EXPECT_TRUE(logits.value().isZero());
    }
  }
}

TEST(Model, SingleNodeGraphPoolsTrivially) {
  ppm::Rng rng(4);
  ModelConfig c = small_config(Family::kGcn, false);
  for (auto pool : {nn::PoolMethod::kMean, nn::PoolMethod::kAdd, nn::PoolMethod::kMax}) {
    c.pooling = pool;
    Model m(c, InputDims{3, 0, 2, 3}, 9);
    std::vector<CaseGraph> b{ppm_test::random_graph(1, 3, 0, 2, 3, rng)};
    const TraceRepresentation t = m.forward_trace(std::span<const CaseGraph>(b));
    const Matrix again = m.forward_trace(std::span<const CaseGraph>(b)).z;
    EXPECT_EQ(t.z, again);
    EXPECT_EQ(t.fused.cols(), t.z.cols() + t.v_d.cols());
  }
  // pool choice is irrelevant for one node
  c.pooling = nn::PoolMethod::kMean;
  Model mean(c, InputDims{3, 0, 2, 3}, 9);
  c.pooling = nn::PoolMethod::kMax;
  Model max(c, InputDims{3, 0, 2, 3}, 9);
  std::vector<CaseGraph> b{ppm_test::random_graph(1, 3, 0, 2, 3, rng)};
  EXPECT_EQ(mean.forward(std::span<const CaseGraph>(b), false).value(),
            max.forward(std::span<const CaseGraph>(b), false).value());
}

TEST(Model, MixedBatchIsContractError) {
  ppm::Rng rng(5);
  Model m(small_config(Family::kLstm, false), InputDims{3, 0, 2, 3}, 1);
  const CaseGraph g = ppm_test::random_graph(3, 3, 0, 2, 3, rng);
  const CaseSequence s = ppm_test::random_sequence(2, 4, 3, 0, 2, 3, rng);
  const std::vector<RepRef> mixed{&g, &s};
  EXPECT_THROW(m.forward(std::span<const RepRef>(mixed), false), ContractError);
  std::vector<CaseGraph> graphs{g};
  EXPECT_THROW(m.forward(std::span<const CaseGraph>(graphs), false), ContractError);
}

TEST(Model, SameSeedSameInit) {
  const InputDims dims{3, 2, 2, 3};
  Model a(small_config(Family::kLstm, true), dims, 77);
  Model b(small_config(Family::kLstm, true), dims, 77);
  Model c(small_config(Family::kLstm, true), dims, 78);
  EXPECT_EQ(a.save(), b.save());
  EXPECT_NE(a.save(), c.save());
}

TEST(Model, SaveLoadRoundTrip) {
  ppm::Rng rng(6);
  ModelConfig cfg = small_config(Family::kGcn, true);
  cfg.node_layers[0].batch_norm = true;
  Model m(cfg, InputDims{3, 2, 2, 3}, 12);
  std::vector<CaseGraph> b;
  for (int i = 0; i < 4; ++i) b.push_back(ppm_test::random_graph(3 + i, 3, 2, 2, 3, rng));
  m.forward(std::span<const CaseGraph>(b), true);  // moves running statistics
  const auto loaded = Model::load(m.save());
  EXPECT_EQ(loaded->forward(std::span<const CaseGraph>(b), false).value(),
            m.forward(std::span<const CaseGraph>(b), false).value());
}

TEST(ModelProperty, MaskingInvarianceAllVariants) {
  for (auto family : {Family::kGcn, Family::kLstm}) {
    for (bool da : {false, true}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        EXPECT_LE(ppm_test::masking_invariance_error(family, da, seed), 1e-9)
            << to_string(family) << " da=" << da << " seed=" << seed;
      }
    }
  }
}
