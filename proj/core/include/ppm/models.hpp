#pragma once

#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ppm/nn/checkpoint.hpp"
#include "ppm/nn/layers.hpp"
#include "ppm/nn/optim.hpp"
#include "ppm/repr.hpp"

namespace ppm {

enum class Family { kGcn, kLstm };
std::string to_string(Family f);
Family family_from_string(const std::string& s);

/// Declarative architecture. A non-empty pseudo_layers list makes the model
/// duration-aware (D-variant); its outputs are concatenated with the node
/// branch and passed through post_fusion_layers.
struct ModelConfig {
  Family family = Family::kLstm;
  std::vector<nn::LayerConfig> node_layers;
  std::vector<nn::LayerConfig> pseudo_layers;
  std::vector<nn::LayerConfig> post_fusion_layers;
  nn::PoolMethod pooling = nn::PoolMethod::kMean;  // gcn only
  std::vector<nn::LayerConfig> case_layers;        // dense over v_G; empty feeds v_G as is
  std::vector<nn::LayerConfig> head_layers;        // dense over the fused vector
  nn::OptimSpec optim;
  int batch_size = 32;
  nn::LossKind loss = nn::LossKind::kCrossEntropy;

  bool duration_aware() const { return !pseudo_layers.empty(); }
  /// "B-LSTM", "D-GCN", ...
  std::string variant_name() const;
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  static ModelConfig load(const std::string& path);
};

struct InputDims {
  Eigen::Index node_dim = 0;    // d_N (sequences add one gap column on top)
  Eigen::Index pseudo_dim = 0;  // bin count
  Eigen::Index case_dim = 0;    // d_G
  std::size_t num_classes = 0;

  nlohmann::json to_json() const;
  static InputDims from_json(const nlohmann::json& j);
};

/// Values of the intermediate vectors for one batch.
struct TraceRepresentation {
  Matrix z;      // trace-level vector per case
  Matrix v_d;    // encoded case vector
  Matrix fused;  // [z, v_d]
  Matrix logits;
};

using RepRef = std::variant<const CaseGraph*, const CaseSequence*>;

class Model {
 public:
  Model(ModelConfig config, InputDims dims, std::uint64_t seed);

  /// Logits (batch x classes). Dropout and batch-norm statistics are active when `training`.
  nn::Tensor forward(std::span<const CaseGraph> batch, bool training);
  nn::Tensor forward(std::span<const CaseSequence> batch, bool training);
  nn::Tensor forward(std::span<const CaseGraph* const> batch, bool training);
  nn::Tensor forward(std::span<const CaseSequence* const> batch, bool training);
  /// Rejects batches that mix graphs and sequences.
  nn::Tensor forward(std::span<const RepRef> batch, bool training);

  TraceRepresentation forward_trace(std::span<const CaseGraph> batch);
  TraceRepresentation forward_trace(std::span<const CaseSequence> batch);

  const ModelConfig& config() const { return config_; }
  const InputDims& dims() const { return dims_; }
  std::vector<nn::ParamRef> parameters() const;
  std::int64_t parameter_count() const;

  /// Parameters and batch-norm running statistics by name.
  nn::TensorMap state() const;
  void load_state(const nn::TensorMap& state);
  nlohmann::json save() const;
  static std::unique_ptr<Model> load(const nlohmann::json& j);

 private:
  struct Outputs {
    nn::Tensor z, v_d, fused, logits;
  };
  Outputs run_graphs(std::span<const CaseGraph* const> batch, bool training);
  Outputs run_sequences(std::span<const CaseSequence* const> batch, bool training);
  Outputs finish(const nn::Tensor& z, const Matrix& case_matrix, bool training);
  std::vector<nn::PostStage*> post_stages();

  ModelConfig config_;
  InputDims dims_;
  std::uint64_t seed_;
  Rng dropout_rng_;
  std::vector<nn::GcnLayer> gcn_node_, gcn_pseudo_, gcn_fusion_;
  std::vector<nn::LstmLayer> lstm_node_, lstm_pseudo_, lstm_fusion_;
  std::vector<nn::DenseLayer> case_, head_;
  std::unique_ptr<nn::DenseLayer> out_;
};

}  // namespace ppm
