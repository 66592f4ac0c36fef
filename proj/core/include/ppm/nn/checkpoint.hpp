#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <string>

#include "ppm/matrix.hpp"

namespace ppm::nn {

/// Named tensors in a JSON container. Each entry is
/// {"shape": [rows, cols], "dtype": "float64", "data": base64 of little-endian row-major doubles}.
using TensorMap = std::map<std::string, Matrix>;

nlohmann::json encode_tensor(const Matrix& m);
Matrix decode_tensor(const nlohmann::json& j);

nlohmann::json encode_checkpoint(const TensorMap& tensors, const nlohmann::json& meta = nlohmann::json::object());
TensorMap decode_checkpoint(const nlohmann::json& j);

}  // namespace ppm::nn
