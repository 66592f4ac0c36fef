#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppm/nn/tensor.hpp"
#include "ppm/rng.hpp"

namespace ppm::nn {

enum class Activation { kIdentity, kRelu, kLeakyRelu, kElu, kTanh, kSoftplus, kGelu, kSigmoid };

std::string to_string(Activation a);
/// Accepts relu, leaky_relu, elu, tanh, softplus, gelu, sigmoid, identity.
Activation activation_from_string(const std::string& s);

// Elementwise and linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// a (n x c) + b (1 x c) broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& b);
/// Row i of `a` multiplied by the constant w[i].
Tensor scale_rows(const Tensor& a, const Vector& w);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index count);
Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count);

/// LeakyReLU slope 0.01, ELU alpha 1, GELU tanh approximation
/// 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor activate(const Tensor& a, Activation kind);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

/// Inverted dropout: kept entries are scaled by 1/(1-rate). Identity when not training.
Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training);

/// Constant sparse matrix, stored as (row, col, value) triplets; duplicates add.
struct SparseOperator {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<int> row_index;
  std::vector<int> col_index;
  std::vector<double> values;

  Matrix to_dense() const;
};

/// y = S x; gradient S^T dy.
Tensor propagate(const Tensor& x, const SparseOperator& s);

/// D^-1/2 (A_w + I) D^-1/2 for a weighted graph whose edges act in both
/// directions. Self loops carry weight 1; D is the weighted degree.
/// Throws ValidityError for a negative weight and NumericError for a
/// zero-degree node (possible only without self loops).
SparseOperator normalized_adjacency(Eigen::Index num_nodes, std::span<const std::pair<int, int>> edges,
                                    std::span<const double> weights, bool add_self_loops = true);

enum class PoolMethod { kMean, kAdd, kMax };
std::string to_string(PoolMethod p);
PoolMethod pool_from_string(const std::string& s);

/// Aggregates consecutive row segments; `offsets` has one more entry than segments.
/// Throws ValidityError for an empty segment.
Tensor segment_pool(const Tensor& x, std::span<const Eigen::Index> offsets, PoolMethod method);

struct BatchNormState {
  Matrix running_mean;  // 1 x c
  Matrix running_var;   // 1 x c
};

/// Training: normalizes with the statistics of the rows where `row_mask` is
/// set (all rows when empty) and updates
/// running = momentum * running + (1 - momentum) * batch.
/// Evaluation: fixed affine map using the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, double momentum,
                  double eps, bool training, std::span<const std::uint8_t> row_mask = {});

enum class LossKind { kCrossEntropy, kMultiMargin };
std::string to_string(LossKind k);
LossKind loss_from_string(const std::string& s);

/// Mean over the batch of -log softmax(logits)[target] or of
/// (1/K) sum_{j != t} max(0, 1 - x_t + x_j). Throws NumericError on non-finite logits.
Tensor loss(const Tensor& logits, std::span<const std::size_t> targets, LossKind kind);
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);
Tensor multi_margin(const Tensor& logits, std::span<const std::size_t> targets);

}  // namespace ppm::nn
