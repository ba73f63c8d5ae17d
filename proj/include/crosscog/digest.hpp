#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

namespace crosscog {

std::array<unsigned char, 32> sha256(const void* data, std::size_t size);

std::string sha256_hex(std::string_view data);

/// Hex digest of a file's contents. Throws IoError if unreadable.
std::string file_sha256_hex(const std::string& path);

std::string to_hex(const std::array<unsigned char, 32>& bytes);

}  // namespace crosscog
