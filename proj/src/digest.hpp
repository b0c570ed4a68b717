#pragma once

#include <cstdint>
#include <string>

namespace qamw {

std::string sha256_hex(const std::uint8_t* data, std::size_t len);
std::uint32_t crc32_of(const std::uint8_t* data, std::size_t len);

}  // namespace qamw
