#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fusilade/rng.hpp"

namespace fusilade::histology {

/// 8-bit RGB raster, row-major, interleaved.
struct RasterImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> data;

  RasterImage() = default;
  RasterImage(std::size_t w, std::size_t h, std::uint8_t fill = 0);

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) noexcept {
    return data[(y * width + x) * 3 + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const noexcept {
    return data[(y * width + x) * 3 + c];
  }
  void set_pixel(std::size_t x, std::size_t y, std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept;

  RasterImage crop(std::size_t x, std::size_t y, std::size_t w, std::size_t h) const;
  friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

using GrayHistogram = std::array<std::uint64_t, 256>;

/// round(0.299 R + 0.587 G + 0.114 B)
std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept;
std::vector<std::uint8_t> to_gray(const RasterImage& img);
GrayHistogram gray_histogram(const RasterImage& img);

struct OtsuResult {
  int threshold = 0;
  bool degenerate = false;  // single occupied gray level
};

/// Threshold maximising between-class variance of {<= t} vs {> t}; ties go to
/// the smallest t. Throws DataError on an empty histogram.
OtsuResult otsu_threshold(const GrayHistogram& hist);

/// Between-class variance w0 w1 (mu0 - mu1)^2 for split {<= t} vs {> t}.
double between_class_variance(const GrayHistogram& hist, int t);

struct PatchOptions {
  std::size_t patch = 256;
  std::size_t stride = 256;
  double min_tissue_fraction = 0.5;
};

struct PatchInfo {
  std::size_t x = 0;
  std::size_t y = 0;
  double tissue_fraction = 0.0;
  bool accepted = false;
};

struct PatchManifest {
  std::string source_id;
  int threshold = 0;
  bool degenerate = false;
  PatchOptions options;
  std::vector<PatchInfo> grid;  // every grid cell, row-major

  std::vector<PatchInfo> accepted() const;
};

/// Otsu over the whole image; a pixel is tissue when gray <= threshold. A
/// degenerate (single-level) image yields no accepted patches.
PatchManifest extract_patches(const RasterImage& img, const PatchOptions& options = {},
                              std::string source_id = {});

/// Highest tissue fraction first, ties by grid order.
std::vector<PatchInfo> select_top_patches(const PatchManifest& manifest, std::size_t count);

struct JitterRanges {
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  double hue = 0.1;  // fraction of the hue circle
};

struct JitterFactors {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;
};

/// Draws b, c, s in [1 - r, 1 + r] and h in [-r, r], in that order.
JitterFactors draw_jitter(Rng& rng, const JitterRanges& ranges = {});

/// Brightness, then contrast, then saturation, then hue; each stage clamped
/// to [0, 255] and the result rounded once at the end.
RasterImage apply_jitter(const RasterImage& img, const JitterFactors& f);
RasterImage color_jitter(const RasterImage& img, Rng& rng, const JitterRanges& ranges = {});

/// new[r][c] = old[N-1-c][r] per clockwise quarter turn. Square images only.
RasterImage rotate_quarter_turns(const RasterImage& img, unsigned quarter_turns);
RasterImage random_rotate(const RasterImage& img, Rng& rng);

// --- I/O --------------------------------------------------------------------

RasterImage read_ppm(const std::filesystem::path& path);
/// Binary P6, maxval 255.
void write_ppm(const RasterImage& img, const std::filesystem::path& path);
RasterImage read_png(const std::filesystem::path& path);
/// Dispatches on the file signature (PNG or P6).
RasterImage read_image(const std::filesystem::path& path);

}  // namespace fusilade::histology
