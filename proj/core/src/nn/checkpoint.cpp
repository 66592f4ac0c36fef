#include "ppm/nn/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "ppm/error.hpp"
#include "ppm/hashing.hpp"

namespace ppm::nn {
namespace {

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
}

}  // namespace

nlohmann::json encode_tensor(const Matrix& m) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(m.size()) * 8);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const std::uint64_t v = to_little(std::bit_cast<std::uint64_t>(m.data()[i]));
    std::memcpy(bytes.data() + 8 * i, &v, 8);
  }
  return {{"shape", {m.rows(), m.cols()}}, {"dtype", "float64"}, {"data", base64_encode(bytes)}};
}

Matrix decode_tensor(const nlohmann::json& j) {
  if (j.value("dtype", std::string()) != "float64") throw ParseError("checkpoint: unsupported dtype");
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0) throw ParseError("checkpoint: tensors must be 2-D");
  const auto bytes = base64_decode(j.at("data").get<std::string>());
  Matrix m(shape[0], shape[1]);
  if (bytes.size() != static_cast<std::size_t>(m.size()) * 8) throw ParseError("checkpoint: data length does not match shape");
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t v = 0;
    std::memcpy(&v, bytes.data() + 8 * i, 8);
    m.data()[i] = std::bit_cast<double>(to_little(v));
  }
  return m;
}

nlohmann::json encode_checkpoint(const TensorMap& tensors, const nlohmann::json& meta) {
  nlohmann::json t = nlohmann::json::object();
  for (const auto& [name, m] : tensors) t[name] = encode_tensor(m);
  return {{"format", "ppm-checkpoint-v1"}, {"meta", meta}, {"tensors", t}};
}

TensorMap decode_checkpoint(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "ppm-checkpoint-v1") throw ParseError("checkpoint: unknown container format");
  TensorMap out;
  for (const auto& [name, t] : j.at("tensors").items()) out.emplace(name, decode_tensor(t));
  return out;
}

}  // namespace ppm::nn
