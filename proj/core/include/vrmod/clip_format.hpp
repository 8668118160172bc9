#pragma once

// Native clip container: a fixed header followed by length-prefixed JPEG
// frames. All integers little-endian.
//
//   magic        8 bytes  "VRCLIP01"
//   width        u32
//   height       u32
//   frame_count  u32
//   fps          f64 (IEEE-754 bits as u64)
//   frames       frame_count x { u32 size, size bytes of JPEG }

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace vrmod {

inline constexpr std::string_view kClipMagic = "VRCLIP01";

struct ClipInfo {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t frame_count = 0;
  double fps = 0.0;

  double duration() const noexcept { return fps > 0 ? frame_count / fps : 0.0; }
};

std::vector<std::uint8_t> encode_clip(const ClipInfo& info,
                                      const std::vector<std::vector<std::uint8_t>>& jpeg_frames);

bool is_native_clip(std::span<const std::uint8_t> bytes) noexcept;

// In-memory view over a native clip. Throws Error{UnsupportedMedia} when the
// container is malformed or truncated.
class NativeClip {
 public:
  explicit NativeClip(std::vector<std::uint8_t> bytes);
  static NativeClip open(const std::filesystem::path& path);

  const ClipInfo& info() const noexcept { return info_; }
  std::span<const std::uint8_t> frame(std::size_t index) const;
  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
  ClipInfo info_;
  std::vector<std::pair<std::size_t, std::size_t>> frames_;  // offset, size
};

}  // namespace vrmod
