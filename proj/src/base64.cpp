#include "subrelay/base64.hpp"

#include <sodium.h>

#include <vector>

#include "subrelay/errors.hpp"

namespace subrelay {

std::string base64_encode(std::string_view bytes) {
    constexpr int variant = sodium_base64_VARIANT_ORIGINAL;
    std::string out(sodium_base64_encoded_len(bytes.size(), variant), '\0');
    sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                      variant);
    out.resize(out.size() - 1);  // trailing NUL
    return out;
}

std::string base64_decode(std::string_view text) {
    std::vector<unsigned char> buf(text.size() / 4 * 3 + 3);
    std::size_t len = 0;
    const char* end = nullptr;
    if (sodium_base642bin(buf.data(), buf.size(), text.data(), text.size(), nullptr, &len, &end,
                          sodium_base64_VARIANT_ORIGINAL) != 0 ||
        end != text.data() + text.size()) {
        throw DomainError("malformed base64");
    }
    return std::string(reinterpret_cast<const char*>(buf.data()), len);
}

}  // namespace subrelay
