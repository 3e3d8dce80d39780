#include "camaudit/image_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "camaudit/errors.hpp"

namespace camaudit {

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

namespace {

std::string header(std::string_view magic, std::size_t rows, std::size_t cols) {
  return std::string(magic) + "\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
}

struct NetpbmHeader {
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t offset = 0;
};

// Parses "Px <ws> cols <ws> rows <ws> 255 <single ws>" with '#' comments.
NetpbmHeader parse_header(std::string_view bytes, std::string_view magic) {
  if (!bytes.starts_with(magic)) throw MagicMismatchError("expected a " + std::string(magic) + " netpbm file");
  std::size_t pos = magic.size();
  auto next_number = [&]() -> std::size_t {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t value = 0;
    const auto [end, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), value);
    if (ec != std::errc() || end == bytes.data() + pos) throw FormatError("malformed netpbm header");
    pos = static_cast<std::size_t>(end - bytes.data());
    return value;
  };
  NetpbmHeader h;
  h.cols = next_number();
  h.rows = next_number();
  if (next_number() != 255) throw FormatError("netpbm maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("malformed netpbm header");
  }
  h.offset = pos + 1;
  return h;
}

}  // namespace

std::string encode_pgm(const Tensor& image) {
  std::size_t rows = 0, cols = 0;
  if (image.rank() == 2) {
    rows = image.dim(0);
    cols = image.dim(1);
  } else if (image.rank() == 3 && image.dim(0) == 1) {
    rows = image.dim(1);
    cols = image.dim(2);
  } else {
    throw DimensionError("encode_pgm: expected H×W or 1×H×W, got " + shape_string(image.shape()));
  }
  std::string out = header("P5", rows, cols);
  out.reserve(out.size() + rows * cols);
  for (double v : image.values()) out.push_back(static_cast<char>(quantize(v)));
  return out;
}

Tensor decode_pgm(std::string_view bytes) {
  const NetpbmHeader h = parse_header(bytes, "P5");
  const std::size_t expected = h.rows * h.cols;
  if (bytes.size() - h.offset < expected) {
    throw TruncationError("PGM payload has " + std::to_string(bytes.size() - h.offset) + " bytes, expected " +
                          std::to_string(expected));
  }
  Tensor out({1, h.rows, h.cols});
  for (std::size_t i = 0; i < expected; ++i) out[i] = static_cast<unsigned char>(bytes[h.offset + i]) / 255.0;
  return out;
}

std::string encode_ppm(const RgbImage& image) {
  std::string out = header("P6", image.rows, image.cols);
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

RgbImage decode_ppm(std::string_view bytes) {
  const NetpbmHeader h = parse_header(bytes, "P6");
  RgbImage out(h.rows, h.cols);
  if (bytes.size() - h.offset < out.pixels.size()) {
    throw TruncationError("PPM payload has " + std::to_string(bytes.size() - h.offset) + " bytes, expected " +
                          std::to_string(out.pixels.size()));
  }
  std::copy_n(reinterpret_cast<const std::uint8_t*>(bytes.data() + h.offset), out.pixels.size(), out.pixels.begin());
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) { write_file(path, encode_pgm(image)); }
Tensor read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }
void write_ppm(const std::filesystem::path& path, const RgbImage& image) { write_file(path, encode_ppm(image)); }
RgbImage read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

}  // namespace camaudit
