#include "fsw/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace fsw {

namespace {

std::array<unsigned char, 32> sha256_raw(std::string_view data) {
    std::array<unsigned char, 32> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len,
                   EVP_sha256(), nullptr) != 1 ||
        len != digest.size()) {
        throw std::runtime_error("sha256: digest computation failed");
    }
    return digest;
}

} // namespace

std::string sha256_hex(std::string_view data) {
    static const char* hex = "0123456789abcdef";
    const auto digest = sha256_raw(data);
    std::string out;
    out.reserve(64);
    for (unsigned char b : digest) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 0xf]);
    }
    return out;
}

uint64_t sha256_prefix64(std::string_view data) {
    const auto digest = sha256_raw(data);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v = (v << 8) | digest[static_cast<size_t>(i)];
    }
    return v;
}

} // namespace fsw
