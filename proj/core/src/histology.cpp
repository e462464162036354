#include "fusilade/histology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusilade/errors.hpp"

namespace fusilade::histology {

RasterImage::RasterImage(std::size_t w, std::size_t h, std::uint8_t fill)
    : width(w), height(h), data(w * h * 3, fill) {}

void RasterImage::set_pixel(std::size_t x, std::size_t y, std::uint8_t r, std::uint8_t g,
                            std::uint8_t b) noexcept {
  std::uint8_t* px = &data[(y * width + x) * 3];
  px[0] = r;
  px[1] = g;
  px[2] = b;
}

RasterImage RasterImage::crop(std::size_t x, std::size_t y, std::size_t w, std::size_t h) const {
  if (x + w > width || y + h > height) throw ShapeError("crop: region outside image bounds");
  RasterImage out(w, h);
  for (std::size_t r = 0; r < h; ++r) {
    const auto* src = &data[((y + r) * width + x) * 3];
    std::copy_n(src, w * 3, &out.data[r * w * 3]);
  }
  return out;
}

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

std::vector<std::uint8_t> to_gray(const RasterImage& img) {
  std::vector<std::uint8_t> gray(img.width * img.height);
  for (std::size_t i = 0; i < gray.size(); ++i)
    gray[i] = luma(img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]);
  return gray;
}

GrayHistogram gray_histogram(const RasterImage& img) {
  GrayHistogram h{};
  for (auto g : to_gray(img)) ++h[g];
  return h;
}

namespace {

__extension__ typedef __int128 wide_t;

struct Moments {
  std::uint64_t n0 = 0, n = 0;
  wide_t s0 = 0, s = 0;
};

double variance_from_moments(const Moments& m) {
  const std::uint64_t n1 = m.n - m.n0;
  if (m.n0 == 0 || n1 == 0) return 0.0;
  // w0 w1 (mu0 - mu1)^2 == (S0 N - S n0)^2 / (n0 n1 N^2)
  const wide_t diff = m.s0 * static_cast<wide_t>(m.n) - m.s * static_cast<wide_t>(m.n0);
  const long double d = static_cast<long double>(diff);
  const long double nn = static_cast<long double>(m.n);
  return static_cast<double>(d * d / (static_cast<long double>(m.n0) * static_cast<long double>(n1) * nn * nn));
}

Moments totals(const GrayHistogram& hist) {
  Moments m;
  for (int i = 0; i < 256; ++i) {
    m.n += hist[i];
    m.s += static_cast<wide_t>(hist[i]) * i;
  }
  return m;
}

}  // namespace

double between_class_variance(const GrayHistogram& hist, int t) {
  Moments m = totals(hist);
  for (int i = 0; i <= t && i < 256; ++i) {
    m.n0 += hist[i];
    m.s0 += static_cast<wide_t>(hist[i]) * i;
  }
  return variance_from_moments(m);
}

OtsuResult otsu_threshold(const GrayHistogram& hist) {
  Moments m = totals(hist);
  if (m.n == 0) throw DataError("otsu_threshold: empty histogram");
  const auto occupied = std::count_if(hist.begin(), hist.end(), [](std::uint64_t c) { return c > 0; });
  if (occupied == 1) {
    const auto level = std::find_if(hist.begin(), hist.end(), [](std::uint64_t c) { return c > 0; });
    return {static_cast<int>(level - hist.begin()), true};
  }
  OtsuResult best;
  double best_var = -1.0;
  for (int t = 0; t < 256; ++t) {
    m.n0 += hist[t];
    m.s0 += static_cast<wide_t>(hist[t]) * t;
    const double v = variance_from_moments(m);
    if (v > best_var) {
      best_var = v;
      best.threshold = t;
    }
  }
  return best;
}

std::vector<PatchInfo> PatchManifest::accepted() const {
  std::vector<PatchInfo> out;
  std::copy_if(grid.begin(), grid.end(), std::back_inserter(out),
               [](const PatchInfo& p) { return p.accepted; });
  return out;
}

PatchManifest extract_patches(const RasterImage& img, const PatchOptions& options,
                              std::string source_id) {
  if (options.patch == 0 || options.stride == 0) throw ConfigError("extract_patches: patch and stride must be > 0");
  if (img.width < options.patch || img.height < options.patch) {
    throw ShapeError("extract_patches: image " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + " smaller than patch " +
                     std::to_string(options.patch));
  }
  PatchManifest man;
  man.source_id = std::move(source_id);
  man.options = options;
  const auto gray = to_gray(img);
  GrayHistogram hist{};
  for (auto g : gray) ++hist[g];
  const auto otsu = otsu_threshold(hist);
  man.threshold = otsu.threshold;
  man.degenerate = otsu.degenerate;

  const double area = static_cast<double>(options.patch * options.patch);
  for (std::size_t y = 0; y + options.patch <= img.height; y += options.stride) {
    for (std::size_t x = 0; x + options.patch <= img.width; x += options.stride) {
      std::uint64_t tissue = 0;
      for (std::size_t r = y; r < y + options.patch; ++r) {
        const auto* row = &gray[r * img.width + x];
        for (std::size_t c = 0; c < options.patch; ++c)
          tissue += row[c] <= otsu.threshold ? 1 : 0;
      }
      PatchInfo info;
      info.x = x;
      info.y = y;
      info.tissue_fraction = static_cast<double>(tissue) / area;
      info.accepted = !otsu.degenerate && info.tissue_fraction >= options.min_tissue_fraction;
      man.grid.push_back(info);
    }
  }
  return man;
}

std::vector<PatchInfo> select_top_patches(const PatchManifest& manifest, std::size_t count) {
  auto acc = manifest.accepted();
  std::stable_sort(acc.begin(), acc.end(), [](const PatchInfo& a, const PatchInfo& b) {
    return a.tissue_fraction > b.tissue_fraction;
  });
  if (acc.size() > count) acc.resize(count);
  return acc;
}

// --- colour jitter ----------------------------------------------------------

JitterFactors draw_jitter(Rng& rng, const JitterRanges& r) {
  for (double v : {r.brightness, r.contrast, r.saturation, r.hue}) {
    if (!(v >= 0.0 && v < 1.0)) throw ConfigError("color_jitter: ranges must lie in [0, 1)");
  }
  JitterFactors f;
  f.brightness = rng.uniform(1.0 - r.brightness, 1.0 + r.brightness);
  f.contrast = rng.uniform(1.0 - r.contrast, 1.0 + r.contrast);
  f.saturation = rng.uniform(1.0 - r.saturation, 1.0 + r.saturation);
  f.hue = rng.uniform(-r.hue, r.hue);
  return f;
}

namespace {

double clamp255(double v) { return std::clamp(v, 0.0, 255.0); }
double luma_d(const double* px) { return 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]; }

void rotate_hue(double* px, double shift) {
  const double r = px[0] / 255.0, g = px[1] / 255.0, b = px[2] / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  if (delta <= 0.0) return;  // achromatic pixels have no hue
  double h;
  if (mx == r) h = std::fmod((g - b) / delta, 6.0);
  else if (mx == g) h = (b - r) / delta + 2.0;
  else h = (r - g) / delta + 4.0;
  h /= 6.0;
  h += shift;
  h -= std::floor(h);
  const double s = delta / mx;
  const double v = mx;

  const double h6 = h * 6.0;
  const auto sector = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  double rr = 0, gg = 0, bb = 0;
  switch (sector) {
    case 0: rr = v; gg = t; bb = p; break;
    case 1: rr = q; gg = v; bb = p; break;
    case 2: rr = p; gg = v; bb = t; break;
    case 3: rr = p; gg = q; bb = v; break;
    case 4: rr = t; gg = p; bb = v; break;
    default: rr = v; gg = p; bb = q; break;
  }
  px[0] = clamp255(rr * 255.0);
  px[1] = clamp255(gg * 255.0);
  px[2] = clamp255(bb * 255.0);
}

}  // namespace

RasterImage apply_jitter(const RasterImage& img, const JitterFactors& f) {
  std::vector<double> buf(img.data.begin(), img.data.end());
  const std::size_t pixels = img.width * img.height;

  for (auto& v : buf) v = clamp255(v * f.brightness);

  if (pixels > 0) {
    double mean_gray = 0.0;
    for (std::size_t i = 0; i < pixels; ++i) mean_gray += luma_d(&buf[3 * i]);
    mean_gray /= static_cast<double>(pixels);
    for (auto& v : buf) v = clamp255(mean_gray + (v - mean_gray) * f.contrast);
  }

  for (std::size_t i = 0; i < pixels; ++i) {
    double* px = &buf[3 * i];
    const double gray = luma_d(px);
    for (int c = 0; c < 3; ++c) px[c] = clamp255(gray + (px[c] - gray) * f.saturation);
  }

  if (f.hue != 0.0)
    for (std::size_t i = 0; i < pixels; ++i) rotate_hue(&buf[3 * i], f.hue);

  RasterImage out(img.width, img.height);
  for (std::size_t i = 0; i < buf.size(); ++i)
    out.data[i] = static_cast<std::uint8_t>(std::lround(buf[i]));
  return out;
}

RasterImage color_jitter(const RasterImage& img, Rng& rng, const JitterRanges& ranges) {
  return apply_jitter(img, draw_jitter(rng, ranges));
}

// --- rotation ---------------------------------------------------------------

RasterImage rotate_quarter_turns(const RasterImage& img, unsigned quarter_turns) {
  if (img.width != img.height) {
    throw ShapeError("rotate: patch must be square, got " + std::to_string(img.width) + "x" +
                     std::to_string(img.height));
  }
  const std::size_t n = img.width;
  RasterImage cur = img;
  for (unsigned t = 0; t < quarter_turns % 4; ++t) {
    RasterImage next(n, n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t ch = 0; ch < 3; ++ch) next.at(c, r, ch) = cur.at(r, n - 1 - c, ch);
    cur = std::move(next);
  }
  return cur;
}

RasterImage random_rotate(const RasterImage& img, Rng& rng) {
  if (img.width != img.height) throw ShapeError("random_rotate: patch must be square");
  return rotate_quarter_turns(img, static_cast<unsigned>(rng.below(4)));
}

}  // namespace fusilade::histology
