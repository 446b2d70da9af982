#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aceseg {

/// 8-bit raster. channels is 3 for P6 (interleaved RGB) and 1 for P5.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary PPM (P6) / PGM (P5) with maxval 255. Readers accept '#' comments
/// in the header and throw FormatError on a bad magic, header, or short
/// pixel payload.
void write_ppm(const std::string& path, const Raster& rgb);
void write_pgm(const std::string& path, const Raster& gray);
Raster read_ppm(const std::string& path);
Raster read_pgm(const std::string& path);

std::string encode_pnm(const Raster& r);
Raster decode_pnm(const std::string& bytes, int expected_channels, const std::string& what);

}  // namespace aceseg
