// SPDX-License-Identifier: Apache-2.0
#include "longimam/preprocess/image.hpp"

#include <cctype>
#include <fstream>

#include "longimam/errors.hpp"

namespace longimam::preprocess {

Image to_image(const RawImage& raw) {
  Image out(raw.height, raw.width);
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) out.pixels[i] = static_cast<float>(raw.pixels[i]);
  return out;
}

namespace {

// Header tokens are separated by whitespace; '#' starts a comment to end of line.
std::size_t read_header_value(std::istream& in, const std::string& path) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  std::size_t value = 0;
  if (!(in >> value)) throw DataError("pgm '" + path + "': malformed header");
  return value;
}

}  // namespace

RawImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image '" + path + "'");
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') throw DataError("pgm '" + path + "': not a binary P5 graymap");
  RawImage img;
  img.width = read_header_value(in, path);
  img.height = read_header_value(in, path);
  const std::size_t maxval = read_header_value(in, path);
  if (img.width == 0 || img.height == 0 || maxval == 0 || maxval > 65535) {
    throw DataError("pgm '" + path + "': bad dimensions or maxval");
  }
  in.get();  // single whitespace before the raster
  const std::size_t n = img.width * img.height;
  img.pixels.resize(n);
  if (maxval < 256) {
    std::vector<unsigned char> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (!in) throw DataError("pgm '" + path + "': truncated raster");
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = buf[i];
  } else {
    std::vector<unsigned char> buf(2 * n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(2 * n));
    if (!in) throw DataError("pgm '" + path + "': truncated raster");
    for (std::size_t i = 0; i < n; ++i) {
      img.pixels[i] = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
    }
  }
  return img;
}

void write_pgm(const std::string& path, const RawImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image '" + path + "'");
  out << "P5\n" << image.width << ' ' << image.height << "\n65535\n";
  std::vector<unsigned char> buf(2 * image.pixels.size());
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    buf[2 * i] = static_cast<unsigned char>(image.pixels[i] >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(image.pixels[i] & 0xff);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("failed writing image '" + path + "'");
}

}  // namespace longimam::preprocess
