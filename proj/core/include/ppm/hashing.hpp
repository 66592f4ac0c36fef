#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ppm {

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::string& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace ppm
