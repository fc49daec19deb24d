#include "dronos/msp.hpp"

#include <algorithm>
#include <string>

#include "dronos/error.hpp"

namespace dronos::msp {

RcCommand RcCommand::neutral(std::uint16_t throttle, std::size_t count) {
  RcCommand cmd;
  cmd.channels.assign(count, kChannelMin);
  cmd.channels[0] = kChannelMid;
  cmd.channels[1] = kChannelMid;
  cmd.channels[2] = throttle;
  cmd.channels[3] = kChannelMid;
  return cmd;
}

void RcCommand::validate() const {
  if (channels.size() != 8 && channels.size() != 16)
    throw Error(ErrorCode::Shape,
                "RC command needs 8 or 16 channels, got " + std::to_string(channels.size()));
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] < kChannelMin || channels[i] > kChannelMax)
      throw Error(ErrorCode::Range, "channel " + std::to_string(i) + " out of range: " +
                                        std::to_string(channels[i]));
  }
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  if (frame.payload.size() > 255)
    throw Error(ErrorCode::Shape, "MSP v1 payload exceeds 255 bytes");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + frame.payload.size() + 1);
  const auto size = static_cast<std::uint8_t>(frame.payload.size());
  out.push_back('$');
  out.push_back('M');
  out.push_back(static_cast<std::uint8_t>(frame.direction));
  out.push_back(size);
  out.push_back(frame.command);
  std::uint8_t checksum = size ^ frame.command;
  for (std::uint8_t b : frame.payload) {
    out.push_back(b);
    checksum ^= b;
  }
  out.push_back(checksum);
  return out;
}

std::vector<std::uint8_t> encode_set_raw_rc(const RcCommand& cmd) {
  cmd.validate();
  Frame frame{Direction::ToDrone, kSetRawRc, {}};
  frame.payload.reserve(cmd.channels.size() * 2);
  for (std::uint16_t ch : cmd.channels) {
    frame.payload.push_back(static_cast<std::uint8_t>(ch & 0xFF));
    frame.payload.push_back(static_cast<std::uint8_t>(ch >> 8));
  }
  return encode_frame(frame);
}

RcCommand decode_set_raw_rc(const Frame& frame) {
  if (frame.command != kSetRawRc)
    throw Error(ErrorCode::Protocol, "not a SET_RAW_RC frame");
  if (frame.payload.size() % 2 != 0)
    throw Error(ErrorCode::Shape, "SET_RAW_RC payload has odd length");
  RcCommand cmd;
  for (std::size_t i = 0; i < frame.payload.size(); i += 2)
    cmd.channels.push_back(
        static_cast<std::uint16_t>(frame.payload[i] | (frame.payload[i + 1] << 8)));
  cmd.validate();
  return cmd;
}

DecodeResult decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) return {};
  if (bytes[0] != '$') throw Error(ErrorCode::CorruptFrame, "missing '$' preamble");
  if (bytes.size() < 2) return {};
  if (bytes[1] != 'M') throw Error(ErrorCode::CorruptFrame, "missing 'M' preamble");
  if (bytes.size() < 3) return {};
  if (bytes[2] != '<' && bytes[2] != '>')
    throw Error(ErrorCode::Protocol, "unknown direction character");
  if (bytes.size() < kHeaderSize) return {};
  const std::size_t size = bytes[3];
  const std::size_t total = kHeaderSize + size + 1;
  if (bytes.size() < total) return {};

  std::uint8_t checksum = 0;
  for (std::size_t i = 3; i < total - 1; ++i) checksum ^= bytes[i];
  if (checksum != bytes[total - 1]) throw Error(ErrorCode::CorruptFrame, "checksum mismatch");

  Frame frame;
  frame.direction = static_cast<Direction>(bytes[2]);
  frame.command = bytes[4];
  frame.payload.assign(bytes.begin() + kHeaderSize, bytes.begin() + total - 1);
  return {std::move(frame), total};
}

void StreamDecoder::skip(std::size_t n) {
  if (!resyncing_) {
    resyncing_ = true;
    ++resync_count_;
  }
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(n));
}

std::vector<Frame> StreamDecoder::feed(std::span<const std::uint8_t> bytes) {
  std::vector<Frame> frames;
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
  while (!buffer_.empty()) {
    if (buffer_.front() != '$') {
      auto next = std::find(buffer_.begin(), buffer_.end(), std::uint8_t{'$'});
      skip(static_cast<std::size_t>(next - buffer_.begin()));
      continue;
    }
    try {
      DecodeResult result = decode_frame(buffer_);
      if (result.need_more()) break;
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(result.consumed));
      frames.push_back(std::move(*result.frame));
      ++frames_decoded_;
      resyncing_ = false;
    } catch (const Error&) {
      // Drop the '$' that led nowhere; the scan restarts at the next one.
      skip(1);
    }
  }
  return frames;
}

}  // namespace dronos::msp
