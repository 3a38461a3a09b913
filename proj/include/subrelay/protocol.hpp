#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace subrelay::protocol {

// Wire message. On the stream socket each frame is a 4-byte big-endian
// length followed by that many bytes of UTF-8 JSON text; the browser mapping
// carries the same JSON text as one event per frame. Members appear in the
// order type, session_id, seq, payload.
struct Frame {
    std::string type;
    std::string session_id;
    std::uint64_t seq = 0;
    nlohmann::json payload = nlohmann::json::object();

    bool operator==(const Frame&) const = default;
};

namespace type {
inline constexpr std::string_view hello = "hello";
inline constexpr std::string_view config_ack = "config.ack";
inline constexpr std::string_view audio = "audio";
inline constexpr std::string_view transcript_partial = "transcript.partial";
inline constexpr std::string_view caption_final = "caption.final";
inline constexpr std::string_view error = "error";
inline constexpr std::string_view metrics = "metrics";
inline constexpr std::string_view heartbeat = "heartbeat";
inline constexpr std::string_view set_sigma = "control.set_sigma";
inline constexpr std::string_view toggle_summarization = "control.toggle_summarization";
inline constexpr std::string_view correction = "correction";
inline constexpr std::string_view correction_ack = "correction.ack";
inline constexpr std::string_view bye = "bye";
}  // namespace type

// Error codes carried in error frames.
namespace code {
inline constexpr std::string_view bad_frame = "bad_frame";
inline constexpr std::string_view seq = "seq";
inline constexpr std::string_view unknown_type = "unknown_type";
inline constexpr std::string_view handshake = "handshake";
inline constexpr std::string_view forbidden = "forbidden";
inline constexpr std::string_view bad_control = "bad_control";
inline constexpr std::string_view bad_audio = "bad_audio";
inline constexpr std::string_view bad_correction = "bad_correction";
inline constexpr std::string_view dangling = "dangling";
inline constexpr std::string_view stage_failed = "stage_failed";
inline constexpr std::string_view config = "config";
inline constexpr std::string_view store = "store";
inline constexpr std::string_view backpressure = "backpressure";
inline constexpr std::string_view timeout = "timeout";
}  // namespace code

inline constexpr std::size_t kMaxFrameBytes = 16u << 20;

class ProtocolError : public std::runtime_error {
public:
    ProtocolError(std::string code, const std::string& what) : std::runtime_error(what), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

std::string to_text(const Frame& frame);
// Throws ProtocolError{bad_frame}.
Frame parse_frame(std::string_view text);

// Length prefix + text.
std::string encode(const Frame& frame);
std::string encode_text(std::string_view text);

// Incremental splitter for the length-prefixed stream.
class FrameReader {
public:
    void feed(std::string_view bytes);
    // Next complete frame text. Throws ProtocolError{bad_frame} once a length
    // prefix exceeds kMaxFrameBytes; the stream cannot be resynchronized.
    std::optional<std::string> next();
    std::size_t buffered() const { return buffer_.size() - offset_; }

private:
    std::string buffer_;
    std::size_t offset_ = 0;
};

Frame make_error(std::string_view code, std::string_view message, nlohmann::json extra = nlohmann::json::object());

}  // namespace subrelay::protocol
