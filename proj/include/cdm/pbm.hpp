#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>

#include "cdm/errors.hpp"
#include "cdm/state.hpp"

namespace cdm {

// Plain (P1) portable bitmap. '1' pixels become set mask bits.
inline BinaryImage parse_pbm(std::istream& is) {
  std::string tokens;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    tokens += line;
    tokens += '\n';
  }
  std::istringstream ts(tokens);
  std::string magic;
  ts >> magic;
  if (magic != "P1") throw FormatError("only plain PBM (P1) masks are supported");
  long w = 0, h = 0;
  if (!(ts >> w >> h) || w <= 0 || h <= 0) throw FormatError("bad PBM dimensions");
  BinaryImage img{static_cast<std::size_t>(w), static_cast<std::size_t>(h), {}};
  img.bits.reserve(img.nx * img.ny);
  char c;
  while (img.bits.size() < img.nx * img.ny && ts.get(c)) {
    if (c == '0' || c == '1')
      img.bits.push_back(c == '1');
    else if (!std::isspace(static_cast<unsigned char>(c)))
      throw FormatError("unexpected character in PBM raster");
  }
  if (img.bits.size() != img.nx * img.ny) throw FormatError("truncated PBM raster");
  return img;
}

inline BinaryImage read_pbm(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  return parse_pbm(is);
}

inline std::string format_pbm(const BinaryImage& img) {
  std::string out = "P1\n" + std::to_string(img.nx) + " " + std::to_string(img.ny) + "\n";
  for (std::size_t iy = 0; iy < img.ny; ++iy) {
    for (std::size_t ix = 0; ix < img.nx; ++ix) {
      if (ix) out += ' ';
      out += img.at(ix, iy) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

}  // namespace cdm
