#include "aceseg/data/pnm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>

#include "aceseg/error.hpp"

namespace aceseg {

std::string encode_pnm(const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw FormatError("pnm: only 1 or 3 channels can be encoded");
  if (r.pixels.size() != static_cast<std::size_t>(r.width) * r.height * r.channels)
    throw FormatError("pnm: pixel buffer does not match its dimensions");
  std::string out = (r.channels == 3 ? "P6\n" : "P5\n") + std::to_string(r.width) + " " + std::to_string(r.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(r.pixels.data()), r.pixels.size());
  return out;
}

namespace {

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Reads one unsigned header integer, skipping whitespace and comments.
int header_int(const std::string& b, std::size_t& pos, const std::string& what) {
  while (pos < b.size()) {
    if (std::isspace(static_cast<unsigned char>(b[pos]))) {
      ++pos;
    } else if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(static_cast<unsigned char>(b[pos])))
    throw FormatError(what + ": malformed header");
  long v = 0;
  while (pos < b.size() && std::isdigit(static_cast<unsigned char>(b[pos]))) {
    v = v * 10 + (b[pos++] - '0');
    if (v > 1 << 20) throw FormatError(what + ": header value out of range");
  }
  return static_cast<int>(v);
}

}  // namespace

Raster decode_pnm(const std::string& b, int expected_channels, const std::string& what) {
  const char* magic = expected_channels == 3 ? "P6" : "P5";
  if (b.size() < 2 || b.compare(0, 2, magic) != 0) throw FormatError(what + ": expected magic " + magic);
  std::size_t pos = 2;
  Raster r;
  r.channels = expected_channels;
  r.width = header_int(b, pos, what);
  r.height = header_int(b, pos, what);
  const int maxval = header_int(b, pos, what);
  if (r.width < 1 || r.height < 1) throw FormatError(what + ": empty image");
  if (maxval != 255) throw FormatError(what + ": maxval " + std::to_string(maxval) + " unsupported (need 255)");
  if (pos >= b.size() || !std::isspace(static_cast<unsigned char>(b[pos])))
    throw FormatError(what + ": missing separator after header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(r.width) * r.height * r.channels;
  if (b.size() - pos < n)
    throw FormatError(what + ": truncated pixel data (" + std::to_string(b.size() - pos) + " of " + std::to_string(n) +
                      " bytes)");
  r.pixels.assign(b.begin() + static_cast<std::ptrdiff_t>(pos), b.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return r;
}

void write_ppm(const std::string& path, const Raster& rgb) {
  if (rgb.channels != 3) throw FormatError("write_ppm: need 3 channels");
  write_file(path, encode_pnm(rgb));
}

void write_pgm(const std::string& path, const Raster& gray) {
  if (gray.channels != 1) throw FormatError("write_pgm: need 1 channel");
  write_file(path, encode_pnm(gray));
}

Raster read_ppm(const std::string& path) { return decode_pnm(read_file(path), 3, path); }
Raster read_pgm(const std::string& path) { return decode_pnm(read_file(path), 1, path); }

}  // namespace aceseg
