#include <vector>

#include <gtest/gtest.h>

#include "vrmod/clip_format.hpp"
#include "vrmod/error.hpp"
#include "vrmod/image.hpp"

namespace vrmod {
namespace {

std::vector<std::vector<std::uint8_t>> solid_frames(int n) {
  std::vector<std::vector<std::uint8_t>> frames;
  for (int i = 0; i < n; ++i) {
    Image img(16, 8, Rgb{static_cast<std::uint8_t>(i * 20), 100, 200});
    frames.push_back(encode_jpeg(img, 80));
  }
  return frames;
}

TEST(ClipFormat, RoundTrip) {
  const auto frames = solid_frames(5);
  const auto bytes = encode_clip({16, 8, 5, 10.0}, frames);
  ASSERT_TRUE(is_native_clip(bytes));
  NativeClip clip(bytes);
  EXPECT_EQ(clip.info().width, 16u);
  EXPECT_EQ(clip.info().height, 8u);
  EXPECT_EQ(clip.info().frame_count, 5u);
  EXPECT_DOUBLE_EQ(clip.info().fps, 10.0);
  EXPECT_DOUBLE_EQ(clip.info().duration(), 0.5);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto f = clip.frame(i);
    EXPECT_EQ(std::vector<std::uint8_t>(f.begin(), f.end()), frames[i]);
  }
}

TEST(ClipFormat, RejectsGarbageAndTruncation) {
  const std::vector<std::uint8_t> garbage{'n', 'o', 't', ' ', 'a', ' ', 'c', 'l', 'i', 'p'};
  EXPECT_FALSE(is_native_clip(garbage));
  auto bytes = encode_clip({16, 8, 3, 10.0}, solid_frames(3));
  bytes.resize(bytes.size() - 7);
  try {
    NativeClip clip(bytes);
    FAIL() << "truncated clip accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedMedia);
  }
}

TEST(ClipFormat, FrameIndexOutOfRangeThrows) {
  NativeClip clip(encode_clip({16, 8, 2, 10.0}, solid_frames(2)));
  EXPECT_THROW(clip.frame(2), Error);
}

TEST(Image, JpegRoundTripKeepsGeometry) {
  Image img(40, 30, Rgb{10, 20, 30});
  fill_circle(img, 20, 15, 5, Rgb{250, 0, 0});
  const Image back = decode_jpeg(encode_jpeg(img, 90));
  EXPECT_EQ(back.width, 40);
  EXPECT_EQ(back.height, 30);
}

TEST(Image, FitWithinBoundsLongestSide) {
  const Image big(1600, 900);
  const Image small = fit_within(big, 768);
  EXPECT_EQ(small.width, 768);
  EXPECT_LE(small.height, 768);
  EXPECT_NEAR(small.height, 432, 1);
  const Image tiny(100, 50);
  EXPECT_EQ(fit_within(tiny, 768).width, 100);
}

TEST(Image, DecodeRejectsNonJpeg) {
  const std::vector<std::uint8_t> junk(64, 0x42);
  EXPECT_THROW(decode_jpeg(junk), Error);
}

}  // namespace
}  // namespace vrmod
