#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppm/nn/ops.hpp"
#include "ppm/nn/tensor.hpp"
#include "ppm/rng.hpp"

namespace ppm::nn {

enum class LayerKind { kDense, kGcnConv, kLstm };
std::string to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

/// Hyperparameters of one encoder layer. Dropout and batch norm are optional
/// stages applied after the layer's affine part.
struct LayerConfig {
  LayerKind kind = LayerKind::kDense;
  int units = 32;
  Activation activation = Activation::kRelu;
  std::optional<double> dropout;  // rate in [0, 1)
  bool batch_norm = false;
  double bn_momentum = 0.99;
  double bn_eps = 1e-3;
  double l2 = 0.0;
  bool skip_connection = false;  // gcn_conv only

  void validate() const;
  nlohmann::json to_json() const;
  static LayerConfig from_json(const nlohmann::json& j, LayerKind default_kind);
};

/// A trainable tensor plus the regularization it takes part in.
struct ParamRef {
  std::string name;
  Tensor tensor;
  bool is_weight = false;  // penalties apply to weight matrices only
  double l2 = 0.0;
};

/// Glorot-uniform matrix.
Matrix glorot(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

/// Shared tail of every layer: optional batch norm, activation, optional dropout.
class PostStage {
 public:
  PostStage() = default;
  PostStage(const LayerConfig& cfg, Eigen::Index width, const std::string& prefix);

  Tensor apply(const Tensor& x, bool training, Rng& rng, std::span<const std::uint8_t> row_mask = {},
               bool activate_output = true);
  void collect(std::vector<ParamRef>& out) const;
  /// Running statistics are state, not parameters; exposed for checkpoints.
  BatchNormState* bn_state() { return cfg_.batch_norm ? &state_ : nullptr; }
  const std::string& prefix() const { return prefix_; }

 private:
  LayerConfig cfg_;
  std::string prefix_;
  Tensor gamma_;
  Tensor beta_;
  BatchNormState state_;
};

class DenseLayer {
 public:
  DenseLayer(Eigen::Index in_dim, const LayerConfig& cfg, Rng& init, const std::string& name);
  Tensor forward(const Tensor& x, bool training, Rng& rng);
  Eigen::Index out_dim() const { return cfg_.units; }
  void collect(std::vector<ParamRef>& out) const;
  PostStage& post() { return post_; }

 private:
  LayerConfig cfg_;
  std::string name_;
  Tensor w_;
  Tensor b_;
  PostStage post_;
};

/// Edge-weighted graph convolution: post(A_hat X W + b), plus the input (or a
/// learned projection of it) when skip_connection is set.
class GcnLayer {
 public:
  GcnLayer(Eigen::Index in_dim, const LayerConfig& cfg, Rng& init, const std::string& name);
  Tensor forward(const Tensor& x, const SparseOperator& a_hat, bool training, Rng& rng);
  Eigen::Index out_dim() const { return cfg_.units; }
  void collect(std::vector<ParamRef>& out) const;
  PostStage& post() { return post_; }

 private:
  LayerConfig cfg_;
  std::string name_;
  Tensor w_;
  Tensor b_;
  Tensor proj_;  // defined when the skip needs a width change
  PostStage post_;
};

/// Time-major packed batch: row t * batch + b holds step t of sequence b.
struct SequenceBatch {
  Eigen::Index steps = 0;
  Eigen::Index batch = 0;
  std::vector<std::uint8_t> mask;  // steps * batch, same packing
};

/// Fused LSTM over a packed batch. Gate order i, f, g, o. Masked steps carry
/// the previous (h, c) through unchanged. Returns all hidden states, packed.
Tensor lstm_sequence(const Tensor& x, const Tensor& wx, const Tensor& wh, const Tensor& b, const SequenceBatch& seq);

class LstmLayer {
 public:
  LstmLayer(Eigen::Index in_dim, const LayerConfig& cfg, Rng& init, const std::string& name);
  /// Packed hidden states after batch norm and dropout (no output activation).
  Tensor forward(const Tensor& x, const SequenceBatch& seq, bool training, Rng& rng);
  Eigen::Index out_dim() const { return cfg_.units; }
  void collect(std::vector<ParamRef>& out) const;
  PostStage& post() { return post_; }
  /// Closed-form count 4 (d u + u^2 + u), excluding batch norm.
  static std::int64_t cell_parameter_count(Eigen::Index in_dim, Eigen::Index units);

 private:
  LayerConfig cfg_;
  std::string name_;
  Tensor wx_;
  Tensor wh_;
  Tensor b_;
  PostStage post_;
};

/// Rows of the final step of a packed sequence (batch x width).
Tensor last_step(const Tensor& packed, const SequenceBatch& seq);

}  // namespace ppm::nn
