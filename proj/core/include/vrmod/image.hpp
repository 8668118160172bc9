#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace vrmod {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

// Packed 8-bit RGB raster, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, Rgb fill = {});

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    auto* p = &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
};

// Throws Error{DecodeFailure} on malformed input.
Image decode_jpeg(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality = 90);

// Box-filter downscale so the longer side is at most `max_side`; smaller
// images are returned unchanged.
Image fit_within(const Image& image, int max_side);

// Minimal raster primitives for schematic renders.
void fill_circle(Image& img, double cx, double cy, double radius, Rgb color);
void draw_ring(Image& img, double cx, double cy, double radius, double thickness, Rgb color);
void fill_triangle(Image& img, double x0, double y0, double x1, double y1, double x2, double y2,
                   Rgb color);
void draw_line(Image& img, double x0, double y0, double x1, double y1, double thickness, Rgb color);
void fill_rect(Image& img, double x0, double y0, double x1, double y1, Rgb color);

}  // namespace vrmod
