#include "cdpcl/synthdomains/netpbm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "cdpcl/errors.hpp"

namespace cdpcl::synth {
namespace {

struct Header {
  std::size_t width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open for reading at byte offset 0");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

[[noreturn]] void bad(const std::filesystem::path& path, const std::string& what, std::size_t offset) {
  throw FormatError(path.string() + ": " + what + " at byte offset " + std::to_string(offset));
}

Header parse_header(const std::filesystem::path& path, const std::vector<char>& bytes, char kind) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != kind) {
    bad(path, std::string("bad magic (expected P") + kind + ")", 0);
  }
  std::size_t pos = 2;
  const auto next_number = [&]() -> std::size_t {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const auto start = pos;
    std::size_t value = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (value > 1u << 24) bad(path, "header value too large", start);
      ++pos;
    }
    if (pos == start) bad(path, "expected a header number", start);
    return value;
  };
  Header h;
  h.width = next_number();
  h.height = next_number();
  h.maxval = next_number();
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    bad(path, "missing whitespace after header", pos);
  }
  h.data_offset = pos + 1;
  if (h.maxval != 255) bad(path, "unsupported maxval " + std::to_string(h.maxval), h.data_offset - 1);
  if (h.width == 0 || h.height == 0) bad(path, "empty image", h.data_offset - 1);
  return h;
}

void write_bytes(const std::filesystem::path& path, const std::string& header, const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << header;
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> data(image.rgb.size());
  std::transform(image.rgb.begin(), image.rgb.end(), data.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  write_bytes(path, "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n", data);
}

Image read_ppm(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const auto h = parse_header(path, bytes, '6');
  const auto need = h.width * h.height * 3;
  if (bytes.size() - h.data_offset < need) bad(path, "short pixel data", bytes.size());
  Image img(h.height, h.width);
  for (std::size_t i = 0; i < need; ++i) {
    img.rgb[i] = static_cast<double>(static_cast<unsigned char>(bytes[h.data_offset + i])) / 255.0;
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GreyImage& image) {
  write_bytes(path, "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n",
              image.data);
}

GreyImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const auto h = parse_header(path, bytes, '5');
  const auto need = h.width * h.height;
  if (bytes.size() - h.data_offset < need) bad(path, "short pixel data", bytes.size());
  GreyImage img{h.height, h.width, std::vector<std::uint8_t>(need)};
  for (std::size_t i = 0; i < need; ++i) img.data[i] = static_cast<std::uint8_t>(bytes[h.data_offset + i]);
  return img;
}

}  // namespace cdpcl::synth
