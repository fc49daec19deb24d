#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dronos::msp {

inline constexpr std::uint8_t kSetRawRc = 200;
inline constexpr std::size_t kHeaderSize = 5;  // '$' 'M' dir size cmd
inline constexpr std::uint16_t kChannelMin = 1000;
inline constexpr std::uint16_t kChannelMid = 1500;
inline constexpr std::uint16_t kChannelMax = 2000;

// Channel order: roll, pitch, throttle, yaw, aux1..auxN. 8 or 16 channels.
struct RcCommand {
  std::vector<std::uint16_t> channels;

  static RcCommand neutral(std::uint16_t throttle = kChannelMin, std::size_t count = 8);

  std::uint16_t roll() const { return channels.at(0); }
  std::uint16_t pitch() const { return channels.at(1); }
  std::uint16_t throttle() const { return channels.at(2); }
  std::uint16_t yaw() const { return channels.at(3); }

  // Throws Shape on bad channel count, Range on out-of-range values.
  void validate() const;

  friend bool operator==(const RcCommand&, const RcCommand&) = default;
};

enum class Direction : std::uint8_t { ToDrone = '<', FromDrone = '>' };

struct Frame {
  Direction direction = Direction::ToDrone;
  std::uint8_t command = 0;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const Frame&, const Frame&) = default;
};

std::vector<std::uint8_t> encode_frame(const Frame& frame);
std::vector<std::uint8_t> encode_set_raw_rc(const RcCommand& cmd);

// Payload of a SET_RAW_RC frame back into channels. Throws Shape/Range.
RcCommand decode_set_raw_rc(const Frame& frame);

struct DecodeResult {
  // Empty when more bytes are needed to complete the frame.
  std::optional<Frame> frame;
  std::size_t consumed = 0;

  bool need_more() const { return !frame.has_value(); }
};

// Parses one frame starting at bytes[0]. Throws CorruptFrame on checksum
// mismatch or a bad preamble, Protocol on an unknown direction character.
DecodeResult decode_frame(std::span<const std::uint8_t> bytes);

// Incremental parser for a lossy byte stream. Skips garbage up to the next
// '$' and counts each skipped run as one resync event.
class StreamDecoder {
 public:
  std::vector<Frame> feed(std::span<const std::uint8_t> bytes);

  std::size_t resync_count() const { return resync_count_; }
  std::size_t frames_decoded() const { return frames_decoded_; }
  std::size_t buffered() const { return buffer_.size(); }

 private:
  void skip(std::size_t n);

  std::vector<std::uint8_t> buffer_;
  std::size_t resync_count_ = 0;
  std::size_t frames_decoded_ = 0;
  bool resyncing_ = false;
};

}  // namespace dronos::msp
