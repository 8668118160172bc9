#include "vrmod/clip_format.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "vrmod/error.hpp"
#include "vrmod/io.hpp"

namespace vrmod {

namespace {

constexpr std::size_t kHeaderSize = 8 + 4 + 4 + 4 + 8;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  return static_cast<std::uint64_t>(get_u32(p)) | static_cast<std::uint64_t>(get_u32(p + 4)) << 32;
}

}  // namespace

std::vector<std::uint8_t> encode_clip(const ClipInfo& info,
                                      const std::vector<std::vector<std::uint8_t>>& jpeg_frames) {
  if (info.frame_count != jpeg_frames.size()) {
    throw Error(ErrorCode::InvalidArgument, "encode_clip: frame_count does not match frames");
  }
  std::vector<std::uint8_t> out(kClipMagic.begin(), kClipMagic.end());
  put_u32(out, info.width);
  put_u32(out, info.height);
  put_u32(out, info.frame_count);
  put_u64(out, std::bit_cast<std::uint64_t>(info.fps));
  for (const auto& f : jpeg_frames) {
    put_u32(out, static_cast<std::uint32_t>(f.size()));
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

bool is_native_clip(std::span<const std::uint8_t> bytes) noexcept {
  return bytes.size() >= kClipMagic.size() &&
         std::memcmp(bytes.data(), kClipMagic.data(), kClipMagic.size()) == 0;
}

NativeClip::NativeClip(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {
  if (!is_native_clip(bytes_) || bytes_.size() < kHeaderSize) {
    throw Error(ErrorCode::UnsupportedMedia, "not a native clip container");
  }
  const std::uint8_t* p = bytes_.data() + kClipMagic.size();
  info_.width = get_u32(p);
  info_.height = get_u32(p + 4);
  info_.frame_count = get_u32(p + 8);
  info_.fps = std::bit_cast<double>(get_u64(p + 12));
  if (!(std::isfinite(info_.fps) && info_.fps > 0) || info_.width == 0 || info_.height == 0) {
    throw Error(ErrorCode::UnsupportedMedia, "clip header has invalid geometry or fps");
  }
  std::size_t off = kHeaderSize;
  frames_.reserve(info_.frame_count);
  for (std::uint32_t i = 0; i < info_.frame_count; ++i) {
    if (off + 4 > bytes_.size()) throw Error(ErrorCode::UnsupportedMedia, "truncated clip");
    const std::size_t size = get_u32(bytes_.data() + off);
    off += 4;
    if (size > bytes_.size() - off) throw Error(ErrorCode::UnsupportedMedia, "truncated clip");
    frames_.emplace_back(off, size);
    off += size;
  }
}

NativeClip NativeClip::open(const std::filesystem::path& path) {
  return NativeClip(read_bytes(path));
}

std::span<const std::uint8_t> NativeClip::frame(std::size_t index) const {
  if (index >= frames_.size()) throw Error(ErrorCode::InvalidArgument, "frame index out of range");
  return {bytes_.data() + frames_[index].first, frames_[index].second};
}

}  // namespace vrmod
