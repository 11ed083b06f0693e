#include "pocadapt/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <stdexcept>

namespace pocadapt {

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    std::string hex;
    hex.reserve(2 * len);
    static const char* alphabet = "0123456789abcdef";
    for (unsigned int i = 0; i < len; ++i) {
        hex.push_back(alphabet[digest[i] >> 4]);
        hex.push_back(alphabet[digest[i] & 0xf]);
    }
    return hex;
}

}  // namespace pocadapt
