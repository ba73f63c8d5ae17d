#include "crosscog/digest.hpp"

#include <fstream>
#include <vector>

#include <openssl/evp.h>

#include "crosscog/errors.hpp"

namespace crosscog {

std::array<unsigned char, 32> sha256(const void* data, std::size_t size) {
  std::array<unsigned char, 32> out{};
  unsigned int out_len = 0;
  EVP_Digest(data, size, out.data(), &out_len, EVP_sha256(), nullptr);
  return out;
}

std::string to_hex(const std::array<unsigned char, 32>& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string hex;
  hex.reserve(64);
  for (unsigned char b : bytes) {
    hex.push_back(digits[b >> 4]);
    hex.push_back(digits[b & 0xF]);
  }
  return hex;
}

std::string sha256_hex(std::string_view data) {
  return to_hex(sha256(data.data(), data.size()));
}

std::string file_sha256_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, 32> out{};
  unsigned int out_len = 0;
  EVP_DigestFinal_ex(ctx, out.data(), &out_len);
  EVP_MD_CTX_free(ctx);
  return to_hex(out);
}

}  // namespace crosscog
