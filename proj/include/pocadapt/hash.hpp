#pragma once

#include <string>
#include <string_view>

namespace pocadapt {

// Hex-encoded SHA-256; used for snapshot probes and content-addressed plan ids.
std::string sha256_hex(std::string_view data);

}  // namespace pocadapt
