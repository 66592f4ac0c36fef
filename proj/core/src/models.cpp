#include "ppm/models.hpp"

#include <algorithm>
#include <fstream>

#include "ppm/error.hpp"

namespace ppm {

using nn::LayerConfig;
using nn::LayerKind;
using nn::Tensor;

std::string to_string(Family f) { return f == Family::kGcn ? "gcn" : "lstm"; }

Family family_from_string(const std::string& s) {
  if (s == "gcn") return Family::kGcn;
  if (s == "lstm") return Family::kLstm;
  throw ConfigError("unknown model family '" + s + "'");
}

std::string ModelConfig::variant_name() const {
  return std::string(duration_aware() ? "D-" : "B-") + (family == Family::kGcn ? "GCN" : "LSTM");
}

namespace {

void check_list(const std::vector<LayerConfig>& layers, LayerKind kind, std::size_t lo, std::size_t hi,
                const std::string& what) {
  if (layers.size() < lo || layers.size() > hi) {
    throw ConfigError(what + ": " + std::to_string(layers.size()) + " layers, allowed " + std::to_string(lo) + "-" +
                      std::to_string(hi));
  }
  for (const auto& l : layers) {
    if (l.kind != kind) throw ConfigError(what + ": expected " + nn::to_string(kind) + " layers");
    l.validate();
  }
}

nlohmann::json list_json(const std::vector<LayerConfig>& layers) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& l : layers) a.push_back(l.to_json());
  return a;
}

std::vector<LayerConfig> list_from(const nlohmann::json& j, const char* key, LayerKind kind) {
  std::vector<LayerConfig> out;
  if (!j.contains(key)) return out;
  for (const auto& e : j.at(key)) out.push_back(LayerConfig::from_json(e, kind));
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  const LayerKind enc = family == Family::kGcn ? LayerKind::kGcnConv : LayerKind::kLstm;
  const std::size_t max_enc = family == Family::kGcn ? 5 : 3;
  check_list(node_layers, enc, 1, max_enc, "node_layers");
  check_list(pseudo_layers, enc, 0, max_enc, "pseudo_layers");
  check_list(post_fusion_layers, enc, 0, max_enc, "post_fusion_layers");
  if (!duration_aware() && !post_fusion_layers.empty()) {
    throw ConfigError("post_fusion_layers require a duration-aware (pseudo branch) model");
  }
  check_list(case_layers, LayerKind::kDense, 0, 3, "case_layers");
  check_list(head_layers, LayerKind::kDense, 1, 3, "head_layers");
  static constexpr int kBatchSizes[] = {16, 32, 64, 128, 512};
  if (std::find(std::begin(kBatchSizes), std::end(kBatchSizes), batch_size) == std::end(kBatchSizes)) {
    throw ConfigError("batch_size must be one of 16, 32, 64, 128, 512");
  }
  optim.validate();
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j{{"family", to_string(family)},
                   {"duration_aware", duration_aware()},
                   {"node_layers", list_json(node_layers)},
                   {"pseudo_layers", list_json(pseudo_layers)},
                   {"post_fusion_layers", list_json(post_fusion_layers)},
                   {"case_layers", list_json(case_layers)},
                   {"head_layers", list_json(head_layers)},
                   {"optim", optim.to_json()},
                   {"batch_size", batch_size},
                   {"loss", nn::to_string(loss)}};
  if (family == Family::kGcn) j["pooling"] = nn::to_string(pooling);
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.family = family_from_string(j.at("family").get<std::string>());
    const LayerKind enc = c.family == Family::kGcn ? LayerKind::kGcnConv : LayerKind::kLstm;
    c.node_layers = list_from(j, "node_layers", enc);
    c.pseudo_layers = list_from(j, "pseudo_layers", enc);
    c.post_fusion_layers = list_from(j, "post_fusion_layers", enc);
    c.case_layers = list_from(j, "case_layers", LayerKind::kDense);
    c.head_layers = list_from(j, "head_layers", LayerKind::kDense);
    if (j.contains("pooling")) c.pooling = nn::pool_from_string(j.at("pooling").get<std::string>());
    if (j.contains("optim")) c.optim = nn::OptimSpec::from_json(j.at("optim"));
    c.batch_size = j.value("batch_size", 32);
    if (j.contains("loss")) c.loss = nn::loss_from_string(j.at("loss").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  if (j.contains("duration_aware") && j.at("duration_aware").get<bool>() != c.duration_aware()) {
    throw ConfigError("model config: duration_aware must match the presence of pseudo_layers");
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model config " + path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json InputDims::to_json() const {
  return {{"node_dim", node_dim}, {"pseudo_dim", pseudo_dim}, {"case_dim", case_dim}, {"num_classes", num_classes}};
}

InputDims InputDims::from_json(const nlohmann::json& j) {
  return {j.at("node_dim").get<Eigen::Index>(), j.at("pseudo_dim").get<Eigen::Index>(),
          j.at("case_dim").get<Eigen::Index>(), j.at("num_classes").get<std::size_t>()};
}

Model::Model(ModelConfig config, InputDims dims, std::uint64_t seed)
    : config_(std::move(config)), dims_(dims), seed_(seed), dropout_rng_(derive_seed(seed, 2, 0)) {
  config_.validate();
  if (dims_.num_classes < 1) throw ConfigError("model needs at least one class");
  if (config_.duration_aware() && dims_.pseudo_dim < 1) {
    throw ConfigError("duration-aware model needs a pseudo-embedding channel (bin count >= 1)");
  }
  Rng init(derive_seed(seed, 1, 0));
  Eigen::Index node_out = 0;
  Eigen::Index pseudo_out = 0;
  Eigen::Index z_dim = 0;
  if (config_.family == Family::kGcn) {
    Eigen::Index in = dims_.node_dim;
    for (std::size_t i = 0; i < config_.node_layers.size(); ++i) {
      gcn_node_.emplace_back(in, config_.node_layers[i], init, "node." + std::to_string(i));
      in = gcn_node_.back().out_dim();
    }
    node_out = in;
    in = dims_.pseudo_dim;
    for (std::size_t i = 0; i < config_.pseudo_layers.size(); ++i) {
      gcn_pseudo_.emplace_back(in, config_.pseudo_layers[i], init, "pseudo." + std::to_string(i));
      in = gcn_pseudo_.back().out_dim();
    }
    pseudo_out = config_.duration_aware() ? in : 0;
    in = node_out + pseudo_out;
    for (std::size_t i = 0; i < config_.post_fusion_layers.size(); ++i) {
      gcn_fusion_.emplace_back(in, config_.post_fusion_layers[i], init, "fusion." + std::to_string(i));
      in = gcn_fusion_.back().out_dim();
    }
    z_dim = in;
  } else {
    Eigen::Index in = dims_.node_dim + 1;
    for (std::size_t i = 0; i < config_.node_layers.size(); ++i) {
      lstm_node_.emplace_back(in, config_.node_layers[i], init, "node." + std::to_string(i));
      in = lstm_node_.back().out_dim();
    }
    node_out = in;
    in = dims_.pseudo_dim;
    for (std::size_t i = 0; i < config_.pseudo_layers.size(); ++i) {
      lstm_pseudo_.emplace_back(in, config_.pseudo_layers[i], init, "pseudo." + std::to_string(i));
      in = lstm_pseudo_.back().out_dim();
    }
    pseudo_out = config_.duration_aware() ? in : 0;
    in = node_out + pseudo_out;
    for (std::size_t i = 0; i < config_.post_fusion_layers.size(); ++i) {
      lstm_fusion_.emplace_back(in, config_.post_fusion_layers[i], init, "fusion." + std::to_string(i));
      in = lstm_fusion_.back().out_dim();
    }
    z_dim = in;
  }
  Eigen::Index in = dims_.case_dim;
  for (std::size_t i = 0; i < config_.case_layers.size(); ++i) {
    case_.emplace_back(in, config_.case_layers[i], init, "case." + std::to_string(i));
    in = case_.back().out_dim();
  }
  in += z_dim;
  for (std::size_t i = 0; i < config_.head_layers.size(); ++i) {
    head_.emplace_back(in, config_.head_layers[i], init, "head." + std::to_string(i));
    in = head_.back().out_dim();
  }
  LayerConfig out;
  out.units = static_cast<int>(dims_.num_classes);
  out.activation = nn::Activation::kIdentity;
  out_ = std::make_unique<nn::DenseLayer>(in, out, init, "out");
}

namespace {

void check_case_dim(const Vector& v, const InputDims& d, const std::string& id) {
  if (v.size() != d.case_dim) throw ContractError("case " + id + ": case vector width differs from model input");
}

}  // namespace

Model::Outputs Model::finish(const Tensor& z, const Matrix& case_matrix, bool training) {
  Tensor v = Tensor::constant(case_matrix);
  for (auto& l : case_) v = l.forward(v, training, dropout_rng_);
  std::vector<Tensor> parts{z, v};
  Tensor fused = nn::concat_cols(parts);
  Tensor h = fused;
  for (auto& l : head_) h = l.forward(h, training, dropout_rng_);
  Tensor logits = out_->forward(h, training, dropout_rng_);
  return {z, v, fused, logits};
}

Model::Outputs Model::run_graphs(std::span<const CaseGraph* const> batch, bool training) {
  if (config_.family != Family::kGcn) throw ContractError("graph batch given to an LSTM model");
  if (batch.empty()) throw ContractError("empty batch");
  const bool dual = config_.duration_aware();
  Eigen::Index n_total = 0;
  std::vector<Eigen::Index> offsets{0};
  for (const auto* g : batch) {
    if (g->node_matrix.cols() != dims_.node_dim) throw ContractError("case " + g->case_id + ": node width differs from model input");
    if (dual && (!g->pseudo_matrix || g->pseudo_matrix->cols() != dims_.pseudo_dim)) {
      throw ConfigError("case " + g->case_id + ": duration-aware model needs the pseudo channel");
    }
    check_case_dim(g->case_vector, dims_, g->case_id);
    n_total += g->node_matrix.rows();
    offsets.push_back(n_total);
  }
  Matrix x(n_total, dims_.node_dim);
  Matrix p(dual ? n_total : 0, dims_.pseudo_dim);
  Matrix c(static_cast<Eigen::Index>(batch.size()), dims_.case_dim);
  std::vector<std::pair<int, int>> edges;
  std::vector<double> weights;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto* g = batch[b];
    const Eigen::Index at = offsets[b];
    x.middleRows(at, g->node_matrix.rows()) = g->node_matrix;
    if (dual) p.middleRows(at, g->node_matrix.rows()) = *g->pseudo_matrix;
    c.row(static_cast<Eigen::Index>(b)) = g->case_vector.transpose();
    for (Eigen::Index k = 0; k < g->edge_index.cols(); ++k) {
      edges.emplace_back(static_cast<int>(at) + g->edge_index(0, k), static_cast<int>(at) + g->edge_index(1, k));
      weights.push_back(g->edge_weight(k));
    }
  }
  const nn::SparseOperator a_hat = nn::normalized_adjacency(n_total, edges, weights, true);
  Tensor h = Tensor::constant(std::move(x));
  for (auto& l : gcn_node_) h = l.forward(h, a_hat, training, dropout_rng_);
  if (dual) {
    Tensor q = Tensor::constant(std::move(p));
    for (auto& l : gcn_pseudo_) q = l.forward(q, a_hat, training, dropout_rng_);
    std::vector<Tensor> parts{h, q};
    h = nn::concat_cols(parts);
    for (auto& l : gcn_fusion_) h = l.forward(h, a_hat, training, dropout_rng_);
  }
  Tensor z = nn::segment_pool(h, offsets, config_.pooling);
  return finish(z, c, training);
}

Model::Outputs Model::run_sequences(std::span<const CaseSequence* const> batch, bool training) {
  if (config_.family != Family::kLstm) throw ContractError("sequence batch given to a GCN model");
  if (batch.empty()) throw ContractError("empty batch");
  const bool dual = config_.duration_aware();
  nn::SequenceBatch sb;
  sb.batch = static_cast<Eigen::Index>(batch.size());
  for (const auto* s : batch) {
    if (s->seq_matrix.cols() != dims_.node_dim + 1) throw ContractError("case " + s->case_id + ": sequence width differs from model input");
    if (dual && (!s->pseudo_seq || s->pseudo_seq->cols() != dims_.pseudo_dim)) {
      throw ConfigError("case " + s->case_id + ": duration-aware model needs the pseudo channel");
    }
    check_case_dim(s->case_vector, dims_, s->case_id);
    sb.steps = std::max(sb.steps, static_cast<Eigen::Index>(s->length()));
  }
  const Eigen::Index B = sb.batch;
  // Steps past the longest case in the batch are padding for every row and are dropped.
  Matrix x = Matrix::Zero(sb.steps * B, dims_.node_dim + 1);
  Matrix p = Matrix::Zero(dual ? sb.steps * B : 0, dims_.pseudo_dim);
  Matrix c(B, dims_.case_dim);
  sb.mask.assign(static_cast<std::size_t>(sb.steps * B), 0);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto* s = batch[static_cast<std::size_t>(b)];
    c.row(b) = s->case_vector.transpose();
    for (Eigen::Index t = 0; t < sb.steps; ++t) {
      x.row(t * B + b) = s->seq_matrix.row(t);
      if (dual) p.row(t * B + b) = s->pseudo_seq->row(t);
      sb.mask[static_cast<std::size_t>(t * B + b)] = s->mask[static_cast<std::size_t>(t)];
    }
  }
  Tensor h = Tensor::constant(std::move(x));
  for (auto& l : lstm_node_) h = l.forward(h, sb, training, dropout_rng_);
  Tensor z;
  if (dual) {
    Tensor q = Tensor::constant(std::move(p));
    for (auto& l : lstm_pseudo_) q = l.forward(q, sb, training, dropout_rng_);
    if (lstm_fusion_.empty()) {
      std::vector<Tensor> parts{nn::last_step(h, sb), nn::last_step(q, sb)};
      z = nn::concat_cols(parts);
    } else {
      std::vector<Tensor> parts{h, q};
      h = nn::concat_cols(parts);
      for (auto& l : lstm_fusion_) h = l.forward(h, sb, training, dropout_rng_);
      z = nn::last_step(h, sb);
    }
  } else {
    z = nn::last_step(h, sb);
  }
  return finish(z, c, training);
}

Tensor Model::forward(std::span<const CaseGraph> batch, bool training) {
  std::vector<const CaseGraph*> ptrs;
  for (const auto& g : batch) ptrs.push_back(&g);
  return run_graphs(ptrs, training).logits;
}

Tensor Model::forward(std::span<const CaseSequence> batch, bool training) {
  std::vector<const CaseSequence*> ptrs;
  for (const auto& s : batch) ptrs.push_back(&s);
  return run_sequences(ptrs, training).logits;
}

Tensor Model::forward(std::span<const CaseGraph* const> batch, bool training) {
  return run_graphs(batch, training).logits;
}

Tensor Model::forward(std::span<const CaseSequence* const> batch, bool training) {
  return run_sequences(batch, training).logits;
}

Tensor Model::forward(std::span<const RepRef> batch, bool training) {
  std::vector<const CaseGraph*> graphs;
  std::vector<const CaseSequence*> seqs;
  for (const auto& r : batch) {
    if (const auto* g = std::get_if<const CaseGraph*>(&r)) {
      graphs.push_back(*g);
    } else {
      seqs.push_back(std::get<const CaseSequence*>(r));
    }
  }
  if (!graphs.empty() && !seqs.empty()) throw ContractError("batch mixes graph and sequence representations");
  return graphs.empty() ? run_sequences(seqs, training).logits : run_graphs(graphs, training).logits;
}

namespace {

TraceRepresentation values_of(const nn::Tensor& z, const nn::Tensor& v, const nn::Tensor& f, const nn::Tensor& l) {
  return {z.value(), v.value(), f.value(), l.value()};
}

}  // namespace

TraceRepresentation Model::forward_trace(std::span<const CaseGraph> batch) {
  std::vector<const CaseGraph*> ptrs;
  for (const auto& g : batch) ptrs.push_back(&g);
  const auto o = run_graphs(ptrs, false);
  return values_of(o.z, o.v_d, o.fused, o.logits);
}

TraceRepresentation Model::forward_trace(std::span<const CaseSequence> batch) {
  std::vector<const CaseSequence*> ptrs;
  for (const auto& s : batch) ptrs.push_back(&s);
  const auto o = run_sequences(ptrs, false);
  return values_of(o.z, o.v_d, o.fused, o.logits);
}

std::vector<nn::ParamRef> Model::parameters() const {
  std::vector<nn::ParamRef> out;
  for (const auto& l : gcn_node_) l.collect(out);
  for (const auto& l : gcn_pseudo_) l.collect(out);
  for (const auto& l : gcn_fusion_) l.collect(out);
  for (const auto& l : lstm_node_) l.collect(out);
  for (const auto& l : lstm_pseudo_) l.collect(out);
  for (const auto& l : lstm_fusion_) l.collect(out);
  for (const auto& l : case_) l.collect(out);
  for (const auto& l : head_) l.collect(out);
  out_->collect(out);
  return out;
}

std::int64_t Model::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.value().size();
  return n;
}

std::vector<nn::PostStage*> Model::post_stages() {
  std::vector<nn::PostStage*> out;
  for (auto& l : gcn_node_) out.push_back(&l.post());
  for (auto& l : gcn_pseudo_) out.push_back(&l.post());
  for (auto& l : gcn_fusion_) out.push_back(&l.post());
  for (auto& l : lstm_node_) out.push_back(&l.post());
  for (auto& l : lstm_pseudo_) out.push_back(&l.post());
  for (auto& l : lstm_fusion_) out.push_back(&l.post());
  for (auto& l : case_) out.push_back(&l.post());
  for (auto& l : head_) out.push_back(&l.post());
  out.push_back(&out_->post());
  return out;
}

nn::TensorMap Model::state() const {
  nn::TensorMap m;
  for (const auto& p : parameters()) m.emplace(p.name, p.tensor.value());
  for (auto* st : const_cast<Model*>(this)->post_stages()) {
    if (auto* bn = st->bn_state()) {
      m.emplace(st->prefix() + ".bn_running_mean", bn->running_mean);
      m.emplace(st->prefix() + ".bn_running_var", bn->running_var);
    }
  }
  return m;
}

void Model::load_state(const nn::TensorMap& state) {
  auto take = [&](const std::string& name, Matrix& dst) {
    const auto it = state.find(name);
    if (it == state.end()) throw ParseError("checkpoint lacks tensor " + name);
    if (it->second.rows() != dst.rows() || it->second.cols() != dst.cols()) {
      throw ParseError("checkpoint tensor " + name + " has the wrong shape");
    }
    dst = it->second;
  };
  for (auto& p : parameters()) take(p.name, p.tensor.mutable_value());
  for (auto* st : post_stages()) {
    if (auto* bn = st->bn_state()) {
      take(st->prefix() + ".bn_running_mean", bn->running_mean);
      take(st->prefix() + ".bn_running_var", bn->running_var);
    }
  }
}

nlohmann::json Model::save() const {
  return {{"config", config_.to_json()},
          {"dims", dims_.to_json()},
          {"seed", seed_},
          {"checkpoint", nn::encode_checkpoint(state())}};
}

std::unique_ptr<Model> Model::load(const nlohmann::json& j) {
  auto m = std::make_unique<Model>(ModelConfig::from_json(j.at("config")), InputDims::from_json(j.at("dims")),
                                   j.at("seed").get<std::uint64_t>());
  m->load_state(nn::decode_checkpoint(j.at("checkpoint")));
  return m;
}

}  // namespace ppm
