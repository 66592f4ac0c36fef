#include "ppm/nn/layers.hpp"

#include <cmath>

#include "ppm/error.hpp"

namespace ppm::nn {

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kDense:
      return "dense";
    case LayerKind::kGcnConv:
      return "gcn_conv";
    case LayerKind::kLstm:
      return "lstm";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "dense") return LayerKind::kDense;
  if (s == "gcn_conv") return LayerKind::kGcnConv;
  if (s == "lstm") return LayerKind::kLstm;
  throw ConfigError("unknown layer kind '" + s + "'");
}

void LayerConfig::validate() const {
  if (units < 1) throw ConfigError("layer units must be >= 1");
  if (dropout && (*dropout < 0.0 || *dropout >= 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  if (batch_norm) {
    if (!(bn_eps > 0.0)) throw ConfigError("batch norm eps must be > 0");
    if (bn_momentum < 0.0 || bn_momentum >= 1.0) throw ConfigError("batch norm momentum must lie in [0, 1)");
  }
  if (l2 < 0.0) throw ConfigError("l2 coefficient must be >= 0");
  if (skip_connection && kind != LayerKind::kGcnConv) throw ConfigError("skip_connection applies to gcn_conv layers only");
}

nlohmann::json LayerConfig::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}, {"units", units}, {"activation", to_string(activation)}};
  j["dropout"] = dropout ? nlohmann::json(*dropout) : nlohmann::json(nullptr);
  j["batch_norm"] = batch_norm ? nlohmann::json{{"momentum", bn_momentum}, {"eps", bn_eps}} : nlohmann::json(nullptr);
  j["l2"] = l2;
  if (kind == LayerKind::kGcnConv) j["skip_connection"] = skip_connection;
  return j;
}

LayerConfig LayerConfig::from_json(const nlohmann::json& j, LayerKind default_kind) {
  LayerConfig c;
  c.kind = j.contains("kind") ? layer_kind_from_string(j.at("kind").get<std::string>()) : default_kind;
  c.units = j.at("units").get<int>();
  if (j.contains("activation")) c.activation = activation_from_string(j.at("activation").get<std::string>());
  if (j.contains("dropout") && !j.at("dropout").is_null()) c.dropout = j.at("dropout").get<double>();
  if (j.contains("batch_norm") && !j.at("batch_norm").is_null()) {
    const auto& bn = j.at("batch_norm");
    if (bn.is_boolean()) {
      c.batch_norm = bn.get<bool>();
    } else {
      c.batch_norm = true;
      c.bn_momentum = bn.value("momentum", 0.99);
      c.bn_eps = bn.value("eps", 1e-3);
    }
  }
  c.l2 = j.value("l2", 0.0);
  c.skip_connection = j.value("skip_connection", false);
  c.validate();
  return c;
}

Matrix glorot(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  return m;
}

PostStage::PostStage(const LayerConfig& cfg, Eigen::Index width, const std::string& prefix)
    : cfg_(cfg), prefix_(prefix) {
  if (cfg_.batch_norm) {
    gamma_ = Tensor::parameter(Matrix::Ones(1, width));
    beta_ = Tensor::parameter(Matrix::Zero(1, width));
    state_.running_mean = Matrix::Zero(1, width);
    state_.running_var = Matrix::Ones(1, width);
  }
}

Tensor PostStage::apply(const Tensor& x, bool training, Rng& rng, std::span<const std::uint8_t> row_mask,
                        bool activate_output) {
  Tensor y = x;
  if (cfg_.batch_norm) y = batch_norm(y, gamma_, beta_, state_, cfg_.bn_momentum, cfg_.bn_eps, training, row_mask);
  if (activate_output) y = activate(y, cfg_.activation);
  if (cfg_.dropout) y = dropout(y, *cfg_.dropout, rng, training);
  return y;
}

void PostStage::collect(std::vector<ParamRef>& out) const {
  if (!cfg_.batch_norm) return;
  out.push_back({prefix_ + ".bn_gamma", gamma_, false, 0.0});
  out.push_back({prefix_ + ".bn_beta", beta_, false, 0.0});
}

DenseLayer::DenseLayer(Eigen::Index in_dim, const LayerConfig& cfg, Rng& init, const std::string& name)
    : cfg_(cfg), name_(name), post_(cfg, cfg.units, name) {
  cfg_.validate();
  w_ = Tensor::parameter(glorot(in_dim, cfg.units, init));
  b_ = Tensor::parameter(Matrix::Zero(1, cfg.units));
}

Tensor DenseLayer::forward(const Tensor& x, bool training, Rng& rng) {
  return post_.apply(add_row(matmul(x, w_), b_), training, rng);
}

void DenseLayer::collect(std::vector<ParamRef>& out) const {
  out.push_back({name_ + ".w", w_, true, cfg_.l2});
  out.push_back({name_ + ".b", b_, false, 0.0});
  post_.collect(out);
}

GcnLayer::GcnLayer(Eigen::Index in_dim, const LayerConfig& cfg, Rng& init, const std::string& name)
    : cfg_(cfg), name_(name), post_(cfg, cfg.units, name) {
  cfg_.validate();
  w_ = Tensor::parameter(glorot(in_dim, cfg.units, init));
  b_ = Tensor::parameter(Matrix::Zero(1, cfg.units));
  if (cfg_.skip_connection && in_dim != cfg.units) proj_ = Tensor::parameter(glorot(in_dim, cfg.units, init));
}

Tensor GcnLayer::forward(const Tensor& x, const SparseOperator& a_hat, bool training, Rng& rng) {
  Tensor y = post_.apply(add_row(propagate(matmul(x, w_), a_hat), b_), training, rng);
  if (cfg_.skip_connection) y = add(y, proj_.defined() ? matmul(x, proj_) : x);
  return y;
}

void GcnLayer::collect(std::vector<ParamRef>& out) const {
  out.push_back({name_ + ".w", w_, true, cfg_.l2});
  out.push_back({name_ + ".b", b_, false, 0.0});
  if (proj_.defined()) out.push_back({name_ + ".skip_proj", proj_, true, cfg_.l2});
  post_.collect(out);
}

namespace {

double sigm(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

Tensor lstm_sequence(const Tensor& x, const Tensor& wx, const Tensor& wh, const Tensor& b, const SequenceBatch& seq) {
  const Eigen::Index T = seq.steps;
  const Eigen::Index B = seq.batch;
  const Eigen::Index u = wh.rows();
  if (x.rows() != T * B) throw ContractError("lstm: packed input rows != steps * batch");
  if (wx.rows() != x.cols() || wx.cols() != 4 * u || wh.cols() != 4 * u || b.cols() != 4 * u) {
    throw ContractError("lstm: parameter shapes do not match input width / units");
  }
  if (static_cast<Eigen::Index>(seq.mask.size()) != T * B) throw ContractError("lstm: mask size mismatch");
  for (Eigen::Index bi = 0; bi < B; ++bi) {
    if (T == 0 || !seq.mask[static_cast<std::size_t>(bi)]) throw ValidityError("lstm: sequence with no unmasked steps");
  }

  // Cached per-step activations for the backward sweep, all T*B x u (gates T*B x 4u).
  auto gates = std::make_shared<Matrix>(T * B, 4 * u);
  auto cells = std::make_shared<Matrix>(T * B, u);  // c_t after masking
  auto tanh_c = std::make_shared<Matrix>(T * B, u); // tanh of the unmasked new cell
  Matrix hs(T * B, u);

  const Matrix xw = x.value() * wx.value();
  Matrix h = Matrix::Zero(B, u);
  Matrix c = Matrix::Zero(B, u);
  for (Eigen::Index t = 0; t < T; ++t) {
    Matrix z = xw.middleRows(t * B, B) + h * wh.value();
    z.rowwise() += b.value().row(0);
    for (Eigen::Index r = 0; r < B; ++r) {
      const Eigen::Index row = t * B + r;
      const bool on = seq.mask[static_cast<std::size_t>(row)] != 0;
      for (Eigen::Index k = 0; k < u; ++k) {
        const double ig = sigm(z(r, k));
        const double fg = sigm(z(r, u + k));
        const double gg = std::tanh(z(r, 2 * u + k));
        const double og = sigm(z(r, 3 * u + k));
        (*gates)(row, k) = ig;
        (*gates)(row, u + k) = fg;
        (*gates)(row, 2 * u + k) = gg;
        (*gates)(row, 3 * u + k) = og;
        const double c_new = fg * c(r, k) + ig * gg;
        const double tc = std::tanh(c_new);
        (*tanh_c)(row, k) = tc;
        if (on) {
          c(r, k) = c_new;
          h(r, k) = og * tc;
        }
      }
    }
    cells->middleRows(t * B, B) = c;
    hs.middleRows(t * B, B) = h;
  }

  std::vector<std::uint8_t> mask = seq.mask;
  return make_result(hs, {x, wx, wh, b}, [=, mask = std::move(mask)](Node& self) {
    const Matrix& xv = self.parents[0]->value;
    const Matrix& wxv = self.parents[1]->value;
    const Matrix& whv = self.parents[2]->value;
    Matrix dwx = Matrix::Zero(wxv.rows(), wxv.cols());
    Matrix dwh = Matrix::Zero(whv.rows(), whv.cols());
    Matrix db = Matrix::Zero(1, 4 * u);
    Matrix dx = Matrix::Zero(xv.rows(), xv.cols());
    Matrix dh = Matrix::Zero(B, u);
    Matrix dc = Matrix::Zero(B, u);
    Matrix dz(B, 4 * u);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      dh += self.grad.middleRows(t * B, B);
      dz.setZero();
      Matrix dh_prev = Matrix::Zero(B, u);
      Matrix dc_prev = Matrix::Zero(B, u);
      for (Eigen::Index r = 0; r < B; ++r) {
        const Eigen::Index row = t * B + r;
        if (!mask[static_cast<std::size_t>(row)]) {
          dh_prev.row(r) = dh.row(r);
          dc_prev.row(r) = dc.row(r);
          continue;
        }
        for (Eigen::Index k = 0; k < u; ++k) {
          const double ig = (*gates)(row, k);
          const double fg = (*gates)(row, u + k);
          const double gg = (*gates)(row, 2 * u + k);
          const double og = (*gates)(row, 3 * u + k);
          const double tc = (*tanh_c)(row, k);
          const double c_prev = t > 0 ? (*cells)(row - B, k) : 0.0;
          const double dcn = dc(r, k) + dh(r, k) * og * (1.0 - tc * tc);
          dz(r, k) = dcn * gg * ig * (1.0 - ig);
          dz(r, u + k) = dcn * c_prev * fg * (1.0 - fg);
          dz(r, 2 * u + k) = dcn * ig * (1.0 - gg * gg);
          dz(r, 3 * u + k) = dh(r, k) * tc * og * (1.0 - og);
          dc_prev(r, k) = dcn * fg;
        }
      }
      dwx.noalias() += xv.middleRows(t * B, B).transpose() * dz;
      dx.middleRows(t * B, B).noalias() = dz * wxv.transpose();
      if (t > 0) dwh.noalias() += self.value.middleRows((t - 1) * B, B).transpose() * dz;
      db += dz.colwise().sum();
      dh_prev.noalias() += dz * whv.transpose();
      dh = std::move(dh_prev);
      dc = std::move(dc_prev);
    }
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(dx);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(dwx);
    if (self.parents[2]->requires_grad) self.parents[2]->accumulate(dwh);
    if (self.parents[3]->requires_grad) self.parents[3]->accumulate(db);
  });
}

Tensor last_step(const Tensor& packed, const SequenceBatch& seq) {
  return slice_rows(packed, (seq.steps - 1) * seq.batch, seq.batch);
}

LstmLayer::LstmLayer(Eigen::Index in_dim, const LayerConfig& cfg, Rng& init, const std::string& name)
    : cfg_(cfg), name_(name), post_(cfg, cfg.units, name) {
  cfg_.validate();
  const Eigen::Index u = cfg.units;
  wx_ = Tensor::parameter(glorot(in_dim, 4 * u, init));
  wh_ = Tensor::parameter(glorot(u, 4 * u, init));
  Matrix bias = Matrix::Zero(1, 4 * u);
  bias.middleCols(u, u).setOnes();  // forget gate starts open
  b_ = Tensor::parameter(std::move(bias));
}

Tensor LstmLayer::forward(const Tensor& x, const SequenceBatch& seq, bool training, Rng& rng) {
  return post_.apply(lstm_sequence(x, wx_, wh_, b_, seq), training, rng, seq.mask, false);
}

void LstmLayer::collect(std::vector<ParamRef>& out) const {
  out.push_back({name_ + ".wx", wx_, true, cfg_.l2});
  out.push_back({name_ + ".wh", wh_, true, cfg_.l2});
  out.push_back({name_ + ".b", b_, false, 0.0});
  post_.collect(out);
}

std::int64_t LstmLayer::cell_parameter_count(Eigen::Index in_dim, Eigen::Index units) {
  return 4 * (in_dim * units + units * units + units);
}

}  // namespace ppm::nn
