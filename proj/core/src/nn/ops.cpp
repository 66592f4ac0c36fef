#include "ppm/nn/ops.hpp"

#include <cmath>
#include <numbers>

#include "ppm/error.hpp"

namespace ppm::nn {
namespace {

bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }
const Matrix& pval(const Node& self, std::size_t i) { return self.parents[i]->value; }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()) + ")");
  }
}

constexpr double kLeakySlope = 0.01;
const double kGeluC = std::sqrt(2.0 / std::numbers::pi);
constexpr double kGeluA = 0.044715;

double act_fwd(double x, Activation k) {
  switch (k) {
    case Activation::kIdentity:
      return x;
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kLeakyRelu:
      return x > 0.0 ? x : kLeakySlope * x;
    case Activation::kElu:
      return x > 0.0 ? x : std::expm1(x);
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kSoftplus:
      return x > 30.0 ? x : std::log1p(std::exp(x));
    case Activation::kGelu:
      return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
    case Activation::kSigmoid:
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return x;
}

// Derivative expressed through the input x (and output y where cheaper).
double act_grad(double x, double y, Activation k) {
  switch (k) {
    case Activation::kIdentity:
      return 1.0;
    case Activation::kRelu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::kLeakyRelu:
      return x > 0.0 ? 1.0 : kLeakySlope;
    case Activation::kElu:
      return x > 0.0 ? 1.0 : y + 1.0;
    case Activation::kTanh:
      return 1.0 - y * y;
    case Activation::kSoftplus:
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    case Activation::kGelu: {
      const double u = kGeluC * (x + kGeluA * x * x * x);
      const double t = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    }
    case Activation::kSigmoid:
      return y * (1.0 - y);
  }
  return 1.0;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kRelu:
      return "relu";
    case Activation::kLeakyRelu:
      return "leaky_relu";
    case Activation::kElu:
      return "elu";
    case Activation::kTanh:
      return "tanh";
    case Activation::kSoftplus:
      return "softplus";
    case Activation::kGelu:
      return "gelu";
    case Activation::kSigmoid:
      return "sigmoid";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  for (auto a : {Activation::kIdentity, Activation::kRelu, Activation::kLeakyRelu, Activation::kElu,
                 Activation::kTanh, Activation::kSoftplus, Activation::kGelu, Activation::kSigmoid}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown activation '" + s + "'");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ContractError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                        std::to_string(b.rows()) + ")");
  }
  Matrix v = a.value() * b.value();
  return make_result(std::move(v), {a, b}, [](Node& self) {
    if (wants(self, 0)) self.parents[0]->accumulate_expr(self.grad * pval(self, 1).transpose());
    if (wants(self, 1)) self.parents[1]->accumulate_expr(pval(self, 0).transpose() * self.grad);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (wants(self, 1)) self.parents[1]->accumulate(self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return make_result(a.value() - b.value(), {a, b}, [](Node& self) {
    if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (wants(self, 1)) self.parents[1]->accumulate_expr(-self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  return make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    if (wants(self, 0)) self.parents[0]->accumulate_expr(self.grad.cwiseProduct(pval(self, 1)));
    if (wants(self, 1)) self.parents[1]->accumulate_expr(self.grad.cwiseProduct(pval(self, 0)));
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_result(a.value() * s, {a}, [s](Node& self) { self.parents[0]->accumulate_expr(self.grad * s); });
}

Tensor add_row(const Tensor& a, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != a.cols()) throw ContractError("add_row: bias must be 1 x cols");
  Matrix v = a.value();
  v.rowwise() += b.value().row(0);
  return make_result(std::move(v), {a, b}, [](Node& self) {
    if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (wants(self, 1)) self.parents[1]->accumulate_expr(self.grad.colwise().sum());
  });
}

Tensor scale_rows(const Tensor& a, const Vector& w) {
  if (w.size() != a.rows()) throw ContractError("scale_rows: weight count differs from row count");
  Matrix v = w.asDiagonal() * a.value();
  return make_result(std::move(v), {a}, [w](Node& self) { self.parents[0]->accumulate_expr(w.asDiagonal() * self.grad); });
}

Tensor sum_all(const Tensor& a) {
  return make_result(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
    const auto& p = pval(self, 0);
    self.parents[0]->accumulate_expr(Matrix::Constant(p.rows(), p.cols(), self.grad(0, 0)));
  });
}

Tensor mean_all(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum_all(a), 1.0 / n);
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ContractError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix v(rows, cols);
  std::vector<Eigen::Index> starts;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    starts.push_back(at);
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_result(std::move(v), {parts.begin(), parts.end()}, [starts](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (wants(self, i)) {
        self.parents[i]->accumulate_expr(self.grad.middleCols(starts[i], self.parents[i]->value.cols()));
      }
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ContractError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix v(rows, cols);
  std::vector<Eigen::Index> starts;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    starts.push_back(at);
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_result(std::move(v), {parts.begin(), parts.end()}, [starts](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (wants(self, i)) {
        self.parents[i]->accumulate_expr(self.grad.middleRows(starts[i], self.parents[i]->value.rows()));
      }
    }
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) throw ContractError("slice_cols: out of range");
  return make_result(a.value().middleCols(begin, count), {a}, [begin, count](Node& self) {
    auto& p = *self.parents[0];
    if (p.grad.size() == 0) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    p.grad.middleCols(begin, count) += self.grad;
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) throw ContractError("slice_rows: out of range");
  return make_result(a.value().middleRows(begin, count), {a}, [begin, count](Node& self) {
    auto& p = *self.parents[0];
    if (p.grad.size() == 0) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    p.grad.middleRows(begin, count) += self.grad;
  });
}

Tensor activate(const Tensor& a, Activation kind) {
  if (kind == Activation::kIdentity) return a;
  Matrix v = a.value().unaryExpr([kind](double x) { return act_fwd(x, kind); });
  return make_result(std::move(v), {a}, [kind](Node& self) {
    const auto& x = pval(self, 0);
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      g.data()[i] = self.grad.data()[i] * act_grad(x.data()[i], self.value.data()[i], kind);
    }
    self.parents[0]->accumulate(g);
  });
}

Tensor sigmoid(const Tensor& a) { return activate(a, Activation::kSigmoid); }
Tensor tanh(const Tensor& a) { return activate(a, Activation::kTanh); }

Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return a;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  Matrix v = a.value().cwiseProduct(mask);
  return make_result(std::move(v), {a}, [mask = std::move(mask)](Node& self) {
    self.parents[0]->accumulate_expr(self.grad.cwiseProduct(mask));
  });
}

Matrix SparseOperator::to_dense() const {
  Matrix d = Matrix::Zero(rows, cols);
  for (std::size_t k = 0; k < values.size(); ++k) d(row_index[k], col_index[k]) += values[k];
  return d;
}

Tensor propagate(const Tensor& x, const SparseOperator& s) {
  if (x.rows() != s.cols) throw ContractError("propagate: operator/input size mismatch");
  Matrix v = Matrix::Zero(s.rows, x.cols());
  const Matrix& xv = x.value();
  for (std::size_t k = 0; k < s.values.size(); ++k) v.row(s.row_index[k]) += s.values[k] * xv.row(s.col_index[k]);
  return make_result(std::move(v), {x}, [op = std::make_shared<const SparseOperator>(s)](Node& self) {
    Matrix g = Matrix::Zero(op->cols, self.grad.cols());
    for (std::size_t k = 0; k < op->values.size(); ++k) {
      g.row(op->col_index[k]) += op->values[k] * self.grad.row(op->row_index[k]);
    }
    self.parents[0]->accumulate(g);
  });
}

SparseOperator normalized_adjacency(Eigen::Index num_nodes, std::span<const std::pair<int, int>> edges,
                                    std::span<const double> weights, bool add_self_loops) {
  if (edges.size() != weights.size()) throw ContractError("normalized_adjacency: edge/weight count mismatch");
  std::vector<double> degree(static_cast<std::size_t>(num_nodes), add_self_loops ? 1.0 : 0.0);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto [u, v] = edges[k];
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes) throw ContractError("normalized_adjacency: node out of range");
    if (!(weights[k] >= 0.0)) throw ValidityError("normalized_adjacency: edge weights must be non-negative");
    degree[static_cast<std::size_t>(u)] += weights[k];
    if (u != v) degree[static_cast<std::size_t>(v)] += weights[k];
  }
  std::vector<double> inv_sqrt(degree.size());
  for (std::size_t i = 0; i < degree.size(); ++i) {
    if (!(degree[i] > 0.0)) {
      throw NumericError("normalized_adjacency: node " + std::to_string(i) + " has zero degree");
    }
    inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);
  }
  SparseOperator s;
  s.rows = s.cols = num_nodes;
  auto push = [&](int r, int c, double w) {
    s.row_index.push_back(r);
    s.col_index.push_back(c);
    s.values.push_back(w * inv_sqrt[static_cast<std::size_t>(r)] * inv_sqrt[static_cast<std::size_t>(c)]);
  };
  if (add_self_loops) {
    for (int i = 0; i < static_cast<int>(num_nodes); ++i) push(i, i, 1.0);
  }
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto [u, v] = edges[k];
    push(v, u, weights[k]);
    if (u != v) push(u, v, weights[k]);
  }
  return s;
}

std::string to_string(PoolMethod p) {
  switch (p) {
    case PoolMethod::kMean:
      return "mean";
    case PoolMethod::kAdd:
      return "add";
    case PoolMethod::kMax:
      return "max";
  }
  return "?";
}

PoolMethod pool_from_string(const std::string& s) {
  if (s == "mean") return PoolMethod::kMean;
  if (s == "add") return PoolMethod::kAdd;
  if (s == "max") return PoolMethod::kMax;
  throw ConfigError("unknown pooling method '" + s + "'");
}

Tensor segment_pool(const Tensor& x, std::span<const Eigen::Index> offsets, PoolMethod method) {
  if (offsets.size() < 2) throw ValidityError("segment_pool: no segments");
  const auto n_seg = static_cast<Eigen::Index>(offsets.size() - 1);
  const Matrix& xv = x.value();
  if (offsets.back() != x.rows()) throw ContractError("segment_pool: offsets do not cover the input");
  Matrix v(n_seg, x.cols());
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> argmax;
  if (method == PoolMethod::kMax) argmax.resize(n_seg, x.cols());
  for (Eigen::Index s = 0; s < n_seg; ++s) {
    const Eigen::Index b = offsets[static_cast<std::size_t>(s)];
    const Eigen::Index e = offsets[static_cast<std::size_t>(s) + 1];
    if (e <= b) throw ValidityError("segment_pool: empty segment (graph without nodes)");
    switch (method) {
      case PoolMethod::kAdd:
        v.row(s) = xv.middleRows(b, e - b).colwise().sum();
        break;
      case PoolMethod::kMean:
        v.row(s) = xv.middleRows(b, e - b).colwise().mean();
        break;
      case PoolMethod::kMax:
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
          Eigen::Index best = b;
          for (Eigen::Index r = b + 1; r < e; ++r) {
            if (xv(r, c) > xv(best, c)) best = r;
          }
          argmax(s, c) = best;
          v(s, c) = xv(best, c);
        }
        break;
    }
  }
  std::vector<Eigen::Index> offs(offsets.begin(), offsets.end());
  return make_result(std::move(v), {x}, [offs = std::move(offs), method, argmax = std::move(argmax)](Node& self) {
    auto& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      const Eigen::Index b = offs[s];
      const Eigen::Index e = offs[s + 1];
      switch (method) {
        case PoolMethod::kAdd:
          g.middleRows(b, e - b).rowwise() += self.grad.row(si);
          break;
        case PoolMethod::kMean:
          g.middleRows(b, e - b).rowwise() += self.grad.row(si) / static_cast<double>(e - b);
          break;
        case PoolMethod::kMax:
          for (Eigen::Index c = 0; c < g.cols(); ++c) g(argmax(si, c), c) += self.grad(si, c);
          break;
      }
    }
    p.accumulate(g);
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, double momentum,
                  double eps, bool training, std::span<const std::uint8_t> row_mask) {
  const Eigen::Index n = x.rows();
  const Eigen::Index c = x.cols();
  if (gamma.cols() != c || beta.cols() != c) throw ContractError("batch_norm: parameter width mismatch");
  if (!row_mask.empty() && static_cast<Eigen::Index>(row_mask.size()) != n) {
    throw ContractError("batch_norm: mask length mismatch");
  }
  if (state.running_mean.size() == 0) {
    state.running_mean = Matrix::Zero(1, c);
    state.running_var = Matrix::Ones(1, c);
  }
  const Matrix& xv = x.value();

  if (!training) {
    const Matrix inv = (state.running_var.array() + eps).rsqrt().matrix();
    Matrix v = (xv.rowwise() - state.running_mean.row(0)).array().rowwise() * (inv.row(0).array() * gamma.value().row(0).array());
    v.rowwise() += beta.value().row(0);
    Matrix xhat = (xv.rowwise() - state.running_mean.row(0)).array().rowwise() * inv.row(0).array();
    return make_result(std::move(v), {x, gamma, beta}, [inv, xhat = std::move(xhat)](Node& self) {
      if (wants(self, 0)) {
        self.parents[0]->accumulate_expr(
            (self.grad.array().rowwise() * (inv.row(0).array() * pval(self, 1).row(0).array())).matrix());
      }
      if (wants(self, 1)) self.parents[1]->accumulate_expr(self.grad.cwiseProduct(xhat).colwise().sum());
      if (wants(self, 2)) self.parents[2]->accumulate_expr(self.grad.colwise().sum());
    });
  }

  Vector w = Vector::Ones(n);
  if (!row_mask.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) w(i) = row_mask[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  }
  const double m = w.sum();
  if (m <= 0.0) throw ValidityError("batch_norm: no rows to normalize over");
  const Matrix mean = (w.transpose() * xv) / m;
  const Matrix centered = xv.rowwise() - mean.row(0);
  const Matrix var = (w.transpose() * centered.cwiseProduct(centered)) / m;
  const Matrix inv = (var.array() + eps).rsqrt().matrix();
  Matrix xhat = centered.array().rowwise() * inv.row(0).array();
  Matrix v = xhat.array().rowwise() * gamma.value().row(0).array();
  v.rowwise() += beta.value().row(0);

  state.running_mean = momentum * state.running_mean + (1.0 - momentum) * mean;
  state.running_var = momentum * state.running_var + (1.0 - momentum) * var;

  return make_result(std::move(v), {x, gamma, beta}, [w, m, inv, xhat = std::move(xhat)](Node& self) {
    const Matrix& dy = self.grad;
    if (wants(self, 0)) {
      // y = gamma * xhat + beta, xhat = (x - mu) * inv, mu and var over the weighted rows.
      const Matrix dxhat = dy.array().rowwise() * pval(self, 1).row(0).array();
      const Matrix sum_dxhat = dxhat.colwise().sum();
      const Matrix sum_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().sum();
      Matrix dx = dxhat;
      dx -= (w * sum_dxhat) / m;
      dx.array() -= (xhat.array().colwise() * w.array()).rowwise() * (sum_dxhat_xhat.row(0).array() / m);
      dx = dx.array().rowwise() * inv.row(0).array();
      self.parents[0]->accumulate(dx);
    }
    if (wants(self, 1)) self.parents[1]->accumulate_expr(dy.cwiseProduct(xhat).colwise().sum());
    if (wants(self, 2)) self.parents[2]->accumulate_expr(dy.colwise().sum());
  });
}

std::string to_string(LossKind k) { return k == LossKind::kCrossEntropy ? "cross_entropy" : "multi_margin"; }

LossKind loss_from_string(const std::string& s) {
  if (s == "cross_entropy") return LossKind::kCrossEntropy;
  if (s == "multi_margin") return LossKind::kMultiMargin;
  throw ConfigError("unknown loss '" + s + "'");
}

namespace {

void check_targets(const Tensor& logits, std::span<const std::size_t> targets) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
    throw ContractError("loss: target count differs from batch size");
  }
  for (auto t : targets) {
    if (static_cast<Eigen::Index>(t) >= logits.cols()) throw ContractError("loss: target class out of range");
  }
  if (!logits.value().allFinite()) throw NumericError("loss: non-finite logits");
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  check_targets(logits, targets);
  const Matrix& z = logits.value();
  const Eigen::Index n = z.rows();
  Matrix probs(z.rows(), z.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = z.row(i).maxCoeff();
    const auto e = (z.row(i).array() - mx).exp();
    const double s = e.sum();
    probs.row(i) = e / s;
    total += -(z(i, static_cast<Eigen::Index>(targets[static_cast<std::size_t>(i)])) - mx - std::log(s));
  }
  std::vector<std::size_t> t(targets.begin(), targets.end());
  return make_result(Matrix::Constant(1, 1, total / static_cast<double>(n)), {logits},
                     [probs = std::move(probs), t = std::move(t)](Node& self) {
                       Matrix g = probs;
                       for (std::size_t i = 0; i < t.size(); ++i) g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t[i])) -= 1.0;
                       g *= self.grad(0, 0) / static_cast<double>(t.size());
                       self.parents[0]->accumulate(g);
                     });
}

Tensor multi_margin(const Tensor& logits, std::span<const std::size_t> targets) {
  check_targets(logits, targets);
  const Matrix& z = logits.value();
  const Eigen::Index n = z.rows();
  const Eigen::Index k = z.cols();
  Matrix dz = Matrix::Zero(n, k);  // d(total)/dz before batch averaging
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto t = static_cast<Eigen::Index>(targets[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < k; ++j) {
      if (j == t) continue;
      const double margin = 1.0 - z(i, t) + z(i, j);
      if (margin > 0.0) {
        total += margin / static_cast<double>(k);
        dz(i, j) += 1.0 / static_cast<double>(k);
        dz(i, t) -= 1.0 / static_cast<double>(k);
      }
    }
  }
  return make_result(Matrix::Constant(1, 1, total / static_cast<double>(n)), {logits},
                     [dz = std::move(dz), n](Node& self) {
                       self.parents[0]->accumulate_expr(dz * (self.grad(0, 0) / static_cast<double>(n)));
                     });
}

Tensor loss(const Tensor& logits, std::span<const std::size_t> targets, LossKind kind) {
  return kind == LossKind::kCrossEntropy ? cross_entropy(logits, targets) : multi_margin(logits, targets);
}

}  // namespace ppm::nn
