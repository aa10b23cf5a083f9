#pragma once

#include <string>
#include <string_view>

namespace primes {

/// Name recorded in manifests so replays know how identities were computed.
inline constexpr std::string_view kDigestAlgorithm = "sha256";

/// Lower-case hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

} // namespace primes
