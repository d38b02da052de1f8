#pragma once

#include <mcmr/core.hpp>

#include <array>
#include <fstream>
#include <map>

namespace raster {

// 8-bit grayscale canvas written as binary PGM.
struct Canvas
{
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> px;

  Canvas(std::size_t w, std::size_t h, std::uint8_t fill = 0)
    : width(w)
    , height(h)
    , px(w * h, fill)
  {
  }
  void set(std::size_t x, std::size_t y, std::uint8_t v)
  {
    if (x < width && y < height) { px[y * width + x] = v; }
  }
  auto get(std::size_t x, std::size_t y) const -> std::uint8_t { return px[y * width + x]; }

  void blit(Canvas const &src, std::size_t x0, std::size_t y0)
  {
    for (std::size_t y = 0; y < src.height; ++y) {
      for (std::size_t x = 0; x < src.width; ++x) { set(x0 + x, y0 + y, src.get(x, y)); }
    }
  }

  void write_pgm(std::string const &path) const
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) { throw mcmr::Error("cannot open '" + path + "' for writing"); }
    f << "P5\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<char const *>(px.data()), static_cast<std::streamsize>(px.size()));
  }
};

// Linear map: 0 -> 0, peak -> 255, clipped above.
inline auto gray(double v, double peak) -> std::uint8_t
{
  if (peak <= 0.0) { return 0; }
  double const s = std::clamp(v / peak, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(255.0 * s));
}

inline auto xy_panel(mcmr::ComplexImage const &img, double peak, std::size_t scale) -> Canvas
{
  Canvas c(img.width() * scale, img.height() * scale);
  for (std::size_t y = 0; y < c.height; ++y) {
    for (std::size_t x = 0; x < c.width; ++x) { c.px[y * c.width + x] = gray(std::abs(img(y / scale, x / scale)), peak); }
  }
  return c;
}

// Rows are image rows at a fixed column, one column per frame; the time
// axis is upscaled by scale * stretch.
inline auto yt_panel(mcmr::ImageSequence const &seq, std::size_t column, double peak, std::size_t scale,
                     std::size_t stretch) -> Canvas
{
  std::size_t const tx = scale * stretch;
  Canvas c(seq.n_frames() * tx, seq.grid().height * scale);
  for (std::size_t y = 0; y < c.height; ++y) {
    for (std::size_t x = 0; x < c.width; ++x) { c.px[y * c.width + x] = gray(std::abs(seq[x / tx](y / scale, column)), peak); }
  }
  return c;
}

// 3x5 glyphs, one bit per pixel, rows top to bottom, MSB left.
inline auto glyph(char ch) -> std::array<std::uint8_t, 5>
{
  static std::map<char, std::array<std::uint8_t, 5>> const font = {
    {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}}, {'3', {7, 1, 7, 1, 7}},
    {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}}, {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 2, 2}},
    {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 7}}, {'.', {0, 0, 0, 0, 2}}, {' ', {0, 0, 0, 0, 0}},
    {'P', {6, 5, 6, 4, 4}}, {'S', {7, 4, 7, 1, 7}}, {'N', {5, 7, 7, 7, 5}}, {'R', {6, 5, 6, 5, 5}},
    {'D', {6, 5, 5, 5, 6}}, {'B', {6, 5, 6, 5, 6}}, {'E', {7, 4, 6, 4, 7}}, {'X', {5, 5, 2, 5, 5}},
    {'A', {2, 5, 7, 5, 5}}, {'C', {7, 4, 4, 4, 7}}, {'T', {7, 2, 2, 2, 2}}, {'-', {0, 0, 7, 0, 0}},
  };
  auto it = font.find(ch);
  return it == font.end() ? std::array<std::uint8_t, 5>{0, 0, 0, 0, 0} : it->second;
}

// White text on a black box anchored at the bottom-left corner.
inline void stamp(Canvas &c, std::string const &text, std::size_t scale = 1)
{
  std::size_t const gw = 4 * scale, gh = 5 * scale, pad = scale;
  std::size_t const box_w = text.size() * gw + pad, box_h = gh + 2 * pad;
  if (box_h > c.height) { return; }
  std::size_t const y0 = c.height - box_h;
  for (std::size_t y = y0; y < c.height; ++y) {
    for (std::size_t x = 0; x < std::min(box_w, c.width); ++x) { c.set(x, y, 0); }
  }
  for (std::size_t k = 0; k < text.size(); ++k) {
    auto const g = glyph(text[k]);
    for (std::size_t r = 0; r < 5; ++r) {
      for (std::size_t b = 0; b < 3; ++b) {
        if (((g[r] >> (2 - b)) & 1) == 0) { continue; }
        for (std::size_t sy = 0; sy < scale; ++sy) {
          for (std::size_t sx = 0; sx < scale; ++sx) {
            c.set(pad + k * gw + b * scale + sx, y0 + pad + r * scale + sy, 255);
          }
        }
      }
    }
  }
}

// Panels left to right with a one-pixel mid-gray separator.
inline auto side_by_side(std::vector<Canvas> const &panels) -> Canvas
{
  std::size_t w = 0, h = 0;
  for (auto const &p : panels) {
    w += p.width;
    h = std::max(h, p.height);
  }
  w += panels.empty() ? 0 : panels.size() - 1;
  Canvas out(w, h, 128);
  std::size_t x = 0;
  for (auto const &p : panels) {
    out.blit(p, x, 0);
    x += p.width + 1;
  }
  return out;
}

} // namespace raster
