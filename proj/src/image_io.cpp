#include "facereg/image_io.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "facereg/error.hpp"

namespace facereg {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

struct PgmHeader {
  int width, height, maxval;
};

PgmHeader read_header(std::istream& in, const std::filesystem::path& path) {
  if (header_token(in) != "P5") throw InputError("not a binary PGM (P5): " + path.string());
  PgmHeader h{};
  try {
    h.width = std::stoi(header_token(in));
    h.height = std::stoi(header_token(in));
    h.maxval = std::stoi(header_token(in));
  } catch (const std::logic_error&) {
    throw InputError("malformed PGM header: " + path.string());
  }
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535)
    throw InputError("invalid PGM dimensions or maxval: " + path.string());
  return h;
}

}  // namespace

GrayImage<std::uint16_t> read_pgm16(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open PGM file: " + path.string());
  const auto h = read_header(in, path);
  if (h.maxval < 256) throw InputError("expected a 16-bit PGM (maxval > 255): " + path.string());
  GrayImage<std::uint16_t> img{h.width, h.height, {}};
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  std::vector<unsigned char> raw(2 * n);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw InputError("truncated PGM data: " + path.string());
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    img.pixels[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  return img;
}

void write_pgm16(const std::filesystem::path& path, const GrayImage<std::uint16_t>& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write PGM file: " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n65535\n";
  std::vector<unsigned char> raw(2 * img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    raw[2 * i] = static_cast<unsigned char>(img.pixels[i] >> 8);
    raw[2 * i + 1] = static_cast<unsigned char>(img.pixels[i] & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw InputError("failed writing PGM file: " + path.string());
}

GrayImage<std::uint8_t> read_pgm8(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open PGM file: " + path.string());
  const auto h = read_header(in, path);
  if (h.maxval > 255) throw InputError("expected an 8-bit PGM: " + path.string());
  GrayImage<std::uint8_t> img{h.width, h.height, {}};
  img.pixels.resize(static_cast<std::size_t>(h.width) * h.height);
  if (!in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size())))
    throw InputError("truncated PGM data: " + path.string());
  return img;
}

void write_pgm8(const std::filesystem::path& path, const GrayImage<std::uint8_t>& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write PGM file: " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw InputError("failed writing PGM file: " + path.string());
}

}  // namespace facereg
