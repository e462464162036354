#include <png.h>

#include <array>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fusilade/errors.hpp"
#include "fusilade/histology.hpp"

namespace fusilade::histology {

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class PpmCursor {
 public:
  PpmCursor(const std::vector<std::uint8_t>& bytes, std::string name)
      : bytes_(bytes), name_(std::move(name)) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t read_uint() {
    skip_space_and_comments();
    std::size_t v = 0;
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1u << 24)) throw FormatError(name_ + ": PPM header value too large");
      ++pos_;
    }
    if (pos_ == start) throw FormatError(name_ + ": malformed PPM header");
    return v;
  }

  std::size_t pos_ = 0;

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string name_;
};

}  // namespace

RasterImage read_ppm(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const std::string name = path.string();
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw FormatError(name + ": not a binary PPM (P6)");
  }
  PpmCursor cur(bytes, name);
  cur.pos_ = 2;
  const std::size_t w = cur.read_uint();
  const std::size_t h = cur.read_uint();
  const std::size_t maxval = cur.read_uint();
  if (maxval != 255) throw FormatError(name + ": only maxval 255 is supported");
  if (cur.pos_ >= bytes.size() || !std::isspace(bytes[cur.pos_])) {
    throw FormatError(name + ": missing whitespace after PPM header");
  }
  ++cur.pos_;
  const std::size_t need = w * h * 3;
  if (bytes.size() - cur.pos_ != need) {
    throw FormatError(name + ": expected " + std::to_string(need) + " pixel bytes, got " +
                      std::to_string(bytes.size() - cur.pos_));
  }
  RasterImage img(w, h);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(cur.pos_), bytes.end(), img.data.begin());
  return img;
}

void write_ppm(const RasterImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

RasterImage read_png(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RasterImage img(image.width, image.height);
  if (!png_image_finish_read(&image, nullptr, img.data.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(path.string() + ": " + msg);
  }
  return img;
}

RasterImage read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::array<char, 8> sig{};
  in.read(sig.data(), sig.size());
  static constexpr std::array<unsigned char, 8> kPng{0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (in.gcount() == 8 && std::memcmp(sig.data(), kPng.data(), 8) == 0) return read_png(path);
  if (in.gcount() >= 2 && sig[0] == 'P' && sig[1] == '6') return read_ppm(path);
  throw FormatError(path.string() + ": unrecognised image format (expected PNG or P6 PPM)");
}

}  // namespace fusilade::histology
