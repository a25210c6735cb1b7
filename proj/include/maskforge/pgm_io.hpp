/*=============================================================================
 * PGM (P2 ascii / P5 binary) image reader and writer. Intensities are
 * scaled to [0,1] by the file's maxval on load; save quantizes back with
 * rounding, so load-save-load is the identity at maxval 255.
 *===========================================================================*/
#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>

#include "types.hpp"

namespace maskforge {

namespace detail {

/* Reads the next header token, skipping whitespace and '#' comments. */
inline std::string pgm_token(std::istream& in) {
  std::string tok;
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      ch = in.get();
    } else {
      break;
    }
  }
  while (ch != EOF && !std::isspace(ch) && ch != '#') {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  if (ch == '#') in.unget();
  return tok;
}

inline long pgm_int(std::istream& in, const char* what) {
  const std::string tok = pgm_token(in);
  if (tok.empty())
    throw UnsupportedFormatError(std::string("load_pgm: missing ") + what);
  try {
    size_t pos = 0;
    const long v = std::stol(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw UnsupportedFormatError(std::string("load_pgm: malformed ") + what +
                                 " '" + tok + "'");
  }
}

}  // namespace detail

inline Image load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_pgm: cannot open " + path);

  const std::string magic = detail::pgm_token(in);
  if (magic != "P2" && magic != "P5")
    throw UnsupportedFormatError("load_pgm: unsupported magic '" + magic +
                                 "' (only P2/P5 grayscale)");
  const long width = detail::pgm_int(in, "width");
  const long height = detail::pgm_int(in, "height");
  const long maxval = detail::pgm_int(in, "maxval");
  if (width < 1 || height < 1)
    throw UnsupportedFormatError("load_pgm: non-positive dimensions");
  if (maxval < 1 || maxval > 65535)
    throw UnsupportedFormatError("load_pgm: maxval out of range [1, 65535]");

  const long n = width * height;
  Image img(static_cast<int>(width), static_cast<int>(height));
  if (magic == "P2") {
    for (long i = 0; i < n; ++i) {
      const long v = detail::pgm_int(in, "pixel");
      if (v < 0 || v > maxval)
        throw UnsupportedFormatError("load_pgm: pixel value out of range");
      img.data[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
  } else {
    // P5 payload starts after exactly one whitespace byte following maxval.
    const bool wide = maxval > 255;
    const size_t bytes = static_cast<size_t>(n) * (wide ? 2 : 1);
    std::string buf(bytes, '\0');
    in.read(buf.data(), static_cast<std::streamsize>(bytes));
    if (static_cast<size_t>(in.gcount()) != bytes)
      throw std::runtime_error("load_pgm: truncated payload in " + path);
    for (long i = 0; i < n; ++i) {
      long v;
      if (wide) {
        const auto hi = static_cast<unsigned char>(buf[2 * i]);
        const auto lo = static_cast<unsigned char>(buf[2 * i + 1]);
        v = (static_cast<long>(hi) << 8) | lo;  // big-endian per spec
      } else {
        v = static_cast<unsigned char>(buf[i]);
      }
      if (v > maxval)
        throw UnsupportedFormatError("load_pgm: pixel value exceeds maxval");
      img.data[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
  }
  return img;
}

/* Writes a binary P5 file, rounding [0,1] intensities to the gray scale. */
inline void save_pgm(const Image& img, const std::string& path, int maxval = 255) {
  if (maxval < 1 || maxval > 65535)
    throw std::invalid_argument("save_pgm: maxval out of range");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_pgm: cannot open " + path);
  out << "P5\n" << img.width << " " << img.height << "\n" << maxval << "\n";
  const bool wide = maxval > 255;
  for (Eigen::Index i = 0; i < img.data.size(); ++i) {
    const double clamped = std::clamp(img.data[i], 0.0, 1.0);
    const long v = std::lround(clamped * maxval);
    if (wide) {
      out.put(static_cast<char>((v >> 8) & 0xff));
      out.put(static_cast<char>(v & 0xff));
    } else {
      out.put(static_cast<char>(v & 0xff));
    }
  }
  if (!out) throw std::runtime_error("save_pgm: write failed for " + path);
}

}  // namespace maskforge
