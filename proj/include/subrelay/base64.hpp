#pragma once

#include <string>
#include <string_view>

namespace subrelay {

std::string base64_encode(std::string_view bytes);
// Throws DomainError on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace subrelay
