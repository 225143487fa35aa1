#include <cmath>
#include <fstream>

#include <json.hpp>

#include "acl/data.hpp"

namespace acl::data {

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  double r, g, b;
  double i = std::floor(h * 6.0);
  double f = h * 6.0 - i;
  double p = v * (1.0 - s), q = v * (1.0 - f * s), t = v * (1.0 - (1.0 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  auto u8 = [](double x) { return static_cast<std::uint8_t>(std::clamp(x * 255.0 + 0.5, 0.0, 255.0)); };
  return {u8(r), u8(g), u8(b)};
}

// Saturated mid-luminance hues: every channel stays <= ~150, so no disc row
// can reach the bar's luminance band.
std::vector<std::array<std::uint8_t, 3>> default_toy_palette() {
  std::vector<std::array<std::uint8_t, 3>> pal;
  for (int i = 0; i < 12; ++i) pal.push_back(hsv_to_rgb(i / 12.0, 0.75, 0.55));
  return pal;
}

ToySample render_toy_sample(const ToySpec& spec, bool with_bar, Rng& rng) {
  spec.validate();
  const std::int64_t n = spec.image_size;
  auto palette = spec.object_palette.empty() ? default_toy_palette() : spec.object_palette;

  ToySample s;
  s.has_bar = with_bar;
  s.image = ImageU8::filled(static_cast<int>(n), static_cast<int>(n), kToyBackground);
  s.disc_color = palette[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(palette.size()) - 1))];
  std::int64_t jitter = std::max<std::int64_t>(1, n / 16);
  s.cx = static_cast<int>(n / 2 + rng.uniform_int(-jitter, jitter));
  s.cy = static_cast<int>(n / 2 + rng.uniform_int(-jitter, jitter));
  s.radius = static_cast<int>(std::llround(rng.uniform(0.28, 0.36) * static_cast<double>(n)));

  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double dx = x - s.cx, dy = y - s.cy;
      if (dx * dx + dy * dy <= static_cast<double>(s.radius) * s.radius)
        for (int c = 0; c < 3; ++c) s.image.at(y, x, c) = s.disc_color[static_cast<std::size_t>(c)];
    }

  // The bar draw consumes the same rng samples either way, so the two
  // domains share the disc distribution exactly.
  s.bar_height = std::max(2, static_cast<int>(std::llround(spec.overlay.height_frac * static_cast<double>(n))));
  int lo = std::max(0, s.cy - s.radius + 1);
  int hi = std::min(static_cast<int>(n) - s.bar_height, s.cy + s.radius - s.bar_height - 1);
  if (hi < lo) hi = lo;
  s.bar_row0 = static_cast<int>(rng.uniform_int(lo, hi));
  s.bar_color = hsv_to_rgb(rng.uniform(), rng.uniform(0.0, spec.overlay.max_saturation),
                           rng.uniform(spec.overlay.min_value, 1.0));
  if (with_bar)
    for (int y = s.bar_row0; y < s.bar_row0 + s.bar_height; ++y)
      for (int x = 0; x < n; ++x)
        for (int c = 0; c < 3; ++c) s.image.at(y, x, c) = s.bar_color[static_cast<std::size_t>(c)];
  return s;
}

std::filesystem::path generate_toy(const ToySpec& spec, const std::filesystem::path& out_dir, std::uint64_t seed) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "domain_S", ec);
  fs::create_directories(out_dir / "domain_T", ec);
  if (!fs::is_directory(out_dir / "domain_S") || !fs::is_directory(out_dir / "domain_T"))
    throw IoError("cannot create output directories under " + out_dir.string());

  Rng rng_s = Rng::derive(seed, 0x53);  // 'S'
  Rng rng_t = Rng::derive(seed, 0x54);  // 'T'
  char name[32];
  for (std::int64_t i = 0; i < spec.n_per_domain; ++i) {
    std::snprintf(name, sizeof(name), "%05lld.png", static_cast<long long>(i));
    save_png(out_dir / "domain_S" / name, render_toy_sample(spec, true, rng_s).image);
    save_png(out_dir / "domain_T" / name, render_toy_sample(spec, false, rng_t).image);
  }

  nlohmann::json j;
  j["seed"] = seed;
  j["n_per_domain"] = spec.n_per_domain;
  j["image_size"] = spec.image_size;
  j["overlay"] = {{"kind", "horizontal_bar"},
                  {"height_frac", spec.overlay.height_frac},
                  {"min_value", spec.overlay.min_value},
                  {"max_saturation", spec.overlay.max_saturation}};
  auto palette = spec.object_palette.empty() ? default_toy_palette() : spec.object_palette;
  for (const auto& c : palette) j["object_palette"].push_back({c[0], c[1], c[2]});
  fs::path manifest = out_dir / "manifest.json";
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write " + manifest.string());
  out << j.dump(2) << "\n";
  return manifest;
}

double bar_score(const ImageU8& img) {
  double best = 0.0;
  for (int y = 0; y < img.h; ++y) {
    double acc = 0.0;
    for (int x = 0; x < img.w; ++x) {
      acc += 0.2126 * img.at(y, x, 0) + 0.7152 * img.at(y, x, 1) + 0.0722 * img.at(y, x, 2);
    }
    best = std::max(best, acc / (255.0 * img.w));
  }
  return best;
}

bool detect_bar(const ImageU8& img) { return bar_score(img) > kBarThreshold; }

}  // namespace acl::data
