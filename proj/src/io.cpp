#include <istream>
#include <ostream>
#include <string>

#include "wingkit/error.hpp"
#include "wingkit/image.hpp"

namespace wingkit {

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (auto b : bits) n += b != 0;
  return n;
}

namespace {

struct NetpbmHeader {
  std::string magic;
  int width = 0, height = 0, maxval = 0;
};

NetpbmHeader read_header(std::istream& in) {
  NetpbmHeader h;
  in >> h.magic;
  auto next_int = [&in]() {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string skip;
      std::getline(in, skip);
      in >> std::ws;
    }
    int v = 0;
    if (!(in >> v)) throw IoFailure("malformed netpbm header");
    return v;
  };
  h.width = next_int();
  h.height = next_int();
  h.maxval = next_int();
  in.get();  // single whitespace before the raster
  if (h.width <= 0 || h.height <= 0 || h.maxval != 255) {
    throw IoFailure("unsupported netpbm dimensions or depth");
  }
  return h;
}

}  // namespace

void write_ppm(std::ostream& out, const Frame& f) {
  out << "P6\n" << f.width << ' ' << f.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(f.pixels.data()),
            static_cast<std::streamsize>(f.pixels.size()));
  if (!out) throw IoFailure("failed writing PPM");
}

Frame read_ppm(std::istream& in) {
  const auto h = read_header(in);
  if (h.magic != "P6") throw IoFailure("not a binary PPM");
  Frame f(h.width, h.height);
  in.read(reinterpret_cast<char*>(f.pixels.data()), static_cast<std::streamsize>(f.pixels.size()));
  if (!in) throw IoFailure("truncated PPM raster");
  return f;
}

void write_pgm(std::ostream& out, const Mask& m) {
  out << "P5\n" << m.width << ' ' << m.height << "\n255\n";
  std::string raster(m.bits.size(), '\0');
  for (std::size_t i = 0; i < m.bits.size(); ++i) raster[i] = m.bits[i] ? '\xff' : '\0';
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoFailure("failed writing PGM");
}

Mask read_pgm(std::istream& in) {
  const auto h = read_header(in);
  if (h.magic != "P5") throw IoFailure("not a binary PGM");
  Mask m(h.width, h.height);
  std::string raster(m.bits.size(), '\0');
  in.read(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!in) throw IoFailure("truncated PGM raster");
  for (std::size_t i = 0; i < raster.size(); ++i) m.bits[i] = raster[i] != '\0';
  return m;
}

}  // namespace wingkit
