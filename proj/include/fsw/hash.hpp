#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace fsw {

/// Hex-encoded SHA-256 digest. Used for cache keys and report fingerprints.
std::string sha256_hex(std::string_view data);

/// First 8 bytes of SHA-256 as a u64, for seeding per-call mock streams.
uint64_t sha256_prefix64(std::string_view data);

} // namespace fsw
