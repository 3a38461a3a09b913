#include "subrelay/protocol.hpp"

namespace subrelay::protocol {

using nlohmann::json;

std::string to_text(const Frame& frame) {
    nlohmann::ordered_json j;
    j["type"] = frame.type;
    j["session_id"] = frame.session_id;
    j["seq"] = frame.seq;
    j["payload"] = frame.payload;
    return j.dump();
}

Frame parse_frame(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string(code::bad_frame), std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ProtocolError(std::string(code::bad_frame), "frame must be a JSON object");

    Frame f;
    const auto type = j.find("type");
    if (type == j.end() || !type->is_string() || type->get_ref<const std::string&>().empty()) {
        throw ProtocolError(std::string(code::bad_frame), "frame needs a non-empty string type");
    }
    f.type = type->get<std::string>();

    if (const auto sid = j.find("session_id"); sid != j.end()) {
        if (!sid->is_string()) throw ProtocolError(std::string(code::bad_frame), "session_id must be a string");
        f.session_id = sid->get<std::string>();
    }
    const auto seq = j.find("seq");
    if (seq == j.end() || !seq->is_number_unsigned()) {
        throw ProtocolError(std::string(code::bad_frame), "seq must be a non-negative integer");
    }
    f.seq = seq->get<std::uint64_t>();
    if (const auto payload = j.find("payload"); payload != j.end()) {
        if (!payload->is_object()) throw ProtocolError(std::string(code::bad_frame), "payload must be an object");
        f.payload = *payload;
    }
    return f;
}

std::string encode_text(std::string_view text) {
    const auto n = static_cast<std::uint32_t>(text.size());
    std::string out;
    out.reserve(4 + text.size());
    out += static_cast<char>((n >> 24) & 0xff);
    out += static_cast<char>((n >> 16) & 0xff);
    out += static_cast<char>((n >> 8) & 0xff);
    out += static_cast<char>(n & 0xff);
    out.append(text);
    return out;
}

std::string encode(const Frame& frame) { return encode_text(to_text(frame)); }

void FrameReader::feed(std::string_view bytes) {
    if (offset_ > 0 && offset_ == buffer_.size()) {
        buffer_.clear();
        offset_ = 0;
    }
    buffer_.append(bytes);
}

std::optional<std::string> FrameReader::next() {
    if (buffered() < 4) return std::nullopt;
    const auto* p = reinterpret_cast<const unsigned char*>(buffer_.data() + offset_);
    const std::uint32_t n = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
                            std::uint32_t{p[3]};
    if (n > kMaxFrameBytes) throw ProtocolError(std::string(code::bad_frame), "frame length exceeds limit");
    if (buffered() < 4 + std::size_t{n}) return std::nullopt;
    std::string text = buffer_.substr(offset_ + 4, n);
    offset_ += 4 + n;
    if (offset_ > 65536 && offset_ * 2 > buffer_.size()) {
        buffer_.erase(0, offset_);
        offset_ = 0;
    }
    return text;
}

Frame make_error(std::string_view code, std::string_view message, json extra) {
    Frame f;
    f.type = type::error;
    f.payload = extra.is_object() ? std::move(extra) : json::object();
    f.payload["code"] = code;
    f.payload["message"] = message;
    return f;
}

}  // namespace subrelay::protocol
