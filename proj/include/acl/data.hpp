#pragma once

// Image I/O (PNG/JPEG), the unpaired two-domain dataset, augmentation, and
// the procedural toy domains used for desk-scale experiments.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "acl/kernels.hpp"
#include "acl/rng.hpp"
#include "acl/tensor.hpp"

namespace acl::data {

struct ImageU8 {
  int w = 0, h = 0;
  std::vector<std::uint8_t> px;  // interleaved RGB, row-major

  std::uint8_t& at(int y, int x, int c) { return px[static_cast<std::size_t>((y * w + x) * 3 + c)]; }
  std::uint8_t at(int y, int x, int c) const { return px[static_cast<std::size_t>((y * w + x) * 3 + c)]; }
  static ImageU8 filled(int w, int h, std::array<std::uint8_t, 3> rgb);
};

// Decodes PNG or JPEG (sniffed from the magic bytes); grayscale and
// palette images come back expanded to RGB.
ImageU8 load_image(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const ImageU8& img);
void save_png_gray(const std::filesystem::path& path, int w, int h, const std::vector<std::uint8_t>& gray);

// [0,255] <-> [-1,1], CHW float tensors.
template <class T>
Tensor<T> to_tensor(const ImageU8& img) {
  Tensor<T> t({3, img.h, img.w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        t[(c * img.h + y) * img.w + x] = static_cast<T>(img.at(y, x, c) / 127.5 - 1.0);
  return t;
}

template <class T>
ImageU8 from_tensor(const Tensor<T>& t) {
  if (t.ndim() != 3 || t.dim(0) != 3) throw ArgumentError("from_tensor: expected (3,H,W)");
  ImageU8 img;
  img.h = static_cast<int>(t.dim(1));
  img.w = static_cast<int>(t.dim(2));
  img.px.resize(static_cast<std::size_t>(img.w * img.h * 3));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        double v = (static_cast<double>(t[(c * t.dim(1) + y) * t.dim(2) + x]) + 1.0) * 127.5;
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v + 0.5, 0.0, 255.0));
      }
  return img;
}

// ---------------------------------------------------------------------------
// Augmentation: resize shorter side to load_size, crop crop_size, flip.

struct AugmentOptions {
  std::int64_t load_size = 270;
  std::int64_t crop_size = 256;
  double flip_prob = 0.5;
  bool center_crop = false;  // test mode: deterministic central crop

  void validate() const {
    if (load_size < 1) throw ConfigError("load_size", "must be positive");
    if (crop_size < 1) throw ConfigError("crop_size", "must be positive");
    if (crop_size > load_size) throw ConfigError("crop_size", "must not exceed load_size");
  }
};

template <class T>
Tensor<T> augment(const ImageU8& img, Rng& rng, const AugmentOptions& opt) {
  opt.validate();
  if (img.w < 1 || img.h < 1) throw ArgumentError("augment: empty image");
  Tensor<T> chw = to_tensor<T>(img);
  std::int64_t h = img.h, w = img.w;
  if (std::min(h, w) != opt.load_size) {
    double s = static_cast<double>(opt.load_size) / static_cast<double>(std::min(h, w));
    std::int64_t nh = std::max<std::int64_t>(opt.load_size, std::llround(h * s));
    std::int64_t nw = std::max<std::int64_t>(opt.load_size, std::llround(w * s));
    if (h <= w)
      nh = opt.load_size;
    else
      nw = opt.load_size;
    Tensor<T> resized;
    kern::resize_bilinear(chw, nh, nw, resized);
    chw = std::move(resized);
    h = nh;
    w = nw;
  }
  std::int64_t cy, cx;
  if (opt.center_crop) {
    cy = (h - opt.crop_size) / 2;
    cx = (w - opt.crop_size) / 2;
  } else {
    cy = rng.uniform_int(0, h - opt.crop_size);
    cx = rng.uniform_int(0, w - opt.crop_size);
  }
  bool flip = opt.flip_prob > 0 && rng.uniform() < opt.flip_prob;
  Tensor<T> out({3, opt.crop_size, opt.crop_size});
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < opt.crop_size; ++y)
      for (std::int64_t x = 0; x < opt.crop_size; ++x) {
        std::int64_t sx = flip ? cx + opt.crop_size - 1 - x : cx + x;
        out[(c * opt.crop_size + y) * opt.crop_size + x] = chw[(c * h + (cy + y)) * w + sx];
      }
  return out;
}

// ---------------------------------------------------------------------------
// Unpaired dataset: one folder per domain, no correspondence implied.

enum class Domain { S, T };

class UnpairedDataset {
 public:
  // Scans <dir>/*.png|jpg|jpeg in both domains. Undecodable files are
  // skipped with a warning on stderr; an empty domain is an error.
  UnpairedDataset(const std::filesystem::path& dir_s, const std::filesystem::path& dir_t);

  std::size_t size(Domain d) const { return paths(d).size(); }
  const std::vector<std::filesystem::path>& paths(Domain d) const { return d == Domain::S ? s_ : t_; }
  ImageU8 load(Domain d, std::size_t index) const;

 private:
  std::vector<std::filesystem::path> s_, t_;
};

// ---------------------------------------------------------------------------
// Toy domains: domain S = coloured disc with a horizontal bright bar laid
// over it, domain T = the same disc construction without the bar. Outside
// the bar the two domains are statistically identical by construction.

struct OverlayStyle {
  double height_frac = 0.125;  // bar height as a fraction of the image
  double min_value = 0.90;     // HSV value range keeps the bar bright...
  double max_saturation = 0.25;  // ...and washed out, far above disc luminance
};

struct ToySpec {
  std::int64_t n_per_domain = 200;
  std::int64_t image_size = 64;
  std::vector<std::array<std::uint8_t, 3>> object_palette;  // disc colours; default palette when empty
  OverlayStyle overlay;

  void validate() const {
    if (n_per_domain < 1) throw ConfigError("n_per_domain", "must be positive");
    if (image_size < 8) throw ConfigError("image_size", "must be at least 8");
  }
};

std::vector<std::array<std::uint8_t, 3>> default_toy_palette();

struct ToySample {
  ImageU8 image;
  bool has_bar = false;
  int cx = 0, cy = 0, radius = 0;
  int bar_row0 = 0, bar_height = 0;
  std::array<std::uint8_t, 3> disc_color{};
  std::array<std::uint8_t, 3> bar_color{};
};

ToySample render_toy_sample(const ToySpec& spec, bool with_bar, Rng& rng);

// Writes <out>/domain_S and <out>/domain_T plus a manifest.json recording
// the spec and seed. Returns the manifest path.
std::filesystem::path generate_toy(const ToySpec& spec, const std::filesystem::path& out_dir, std::uint64_t seed);

// Closed-form bar detector: bar rows are full-width and bright, so their
// mean luminance exceeds anything a disc row can reach.
double bar_score(const ImageU8& img);             // max row mean luminance, in [0,1]
inline constexpr double kBarThreshold = 0.55;
bool detect_bar(const ImageU8& img);

// Background colour used by the construction (needed by evaluation code).
inline constexpr std::array<std::uint8_t, 3> kToyBackground{28, 28, 28};

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v);

}  // namespace acl::data
