#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pagetext {

// Decodes UTF-8 into Unicode scalar values. Invalid byte sequences decode as
// one U+FFFD per offending byte, so decoding is total.
std::vector<uint32_t> utf8_decode(std::string_view s);

// Encodes a single scalar value (<= U+10FFFF) as UTF-8 and appends it.
void utf8_append(std::string& out, uint32_t cp);

std::string utf8_encode(const std::vector<uint32_t>& cps);

}  // namespace pagetext
