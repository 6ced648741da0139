#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace wingkit {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

// 8-bit RGB, row-major, three bytes per pixel.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Frame() = default;
  Frame(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  Rgb at(int u, int v) const {
    const std::size_t i = (static_cast<std::size_t>(v) * width + u) * 3;
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
  }
  void set(int u, int v, Rgb c) {
    const std::size_t i = (static_cast<std::size_t>(v) * width + u) * 3;
    pixels[i] = c.r;
    pixels[i + 1] = c.g;
    pixels[i + 2] = c.b;
  }
  bool operator==(const Frame&) const = default;
};

// Binary occupancy, row-major, one byte (0 or 1) per pixel.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int u, int v) const { return bits[static_cast<std::size_t>(v) * width + u] != 0; }
  std::size_t count() const;
  bool operator==(const Mask&) const = default;
};

void write_ppm(std::ostream& out, const Frame& f);
Frame read_ppm(std::istream& in);
void write_pgm(std::ostream& out, const Mask& m);
Mask read_pgm(std::istream& in);

}  // namespace wingkit
