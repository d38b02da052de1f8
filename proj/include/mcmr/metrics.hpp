#pragma once

#include "core.hpp"

#include <limits>
#include <numeric>

namespace mcmr {

struct PsnrReport
{
  // +infinity marks an exact frame (zero error).
  std::vector<double> per_frame;
  double mean = 0.0;

  static auto is_exact(double db) -> bool { return std::isinf(db) && db > 0.0; }
};

/// PSNR on magnitudes with the peak taken as the largest reference magnitude
/// over the whole sequence. The mean averages finite frames; it is exact only
/// when every frame is.
inline auto psnr(ImageSequence const &x, ImageSequence const &ref) -> PsnrReport
{
  if (x.n_frames() != ref.n_frames()) { throw DimensionError("psnr: frame counts differ"); }
  require_grid(x.grid(), ref.grid(), "psnr");
  double peak = 0.0;
  for (auto const &f : ref) {
    for (auto v : f.data()) { peak = std::max(peak, std::abs(v)); }
  }
  if (peak == 0.0) { throw Error("psnr: reference is identically zero"); }

  PsnrReport out;
  double sum = 0.0;
  std::size_t finite = 0;
  for (std::size_t t = 0; t < x.n_frames(); ++t) {
    double se = 0.0;
    for (std::size_t i = 0; i < x[t].size(); ++i) {
      double const d = std::abs(x[t][i]) - std::abs(ref[t][i]);
      se += d * d;
    }
    double const mse = se / static_cast<double>(x[t].size());
    double const db = mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(peak * peak / mse);
    out.per_frame.push_back(db);
    if (!PsnrReport::is_exact(db)) {
      sum += db;
      ++finite;
    }
  }
  out.mean = finite == 0 ? std::numeric_limits<double>::infinity() : sum / static_cast<double>(finite);
  return out;
}

namespace detail {

inline auto gaussian_window(std::size_t size, double sigma) -> std::vector<double>
{
  std::vector<double> k(size);
  double const c = 0.5 * static_cast<double>(size - 1);
  for (std::size_t i = 0; i < size; ++i) {
    double const d = static_cast<double>(i) - c;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  double const s = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto &v : k) { v /= s; }
  return k;
}

} // namespace detail

struct SsimOptions
{
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM of magnitude images over all valid (fully inside) window positions.
/// The dynamic range is the largest magnitude of `ref`.
inline auto ssim(ComplexImage const &x, ComplexImage const &ref, SsimOptions const &opt = {}) -> double
{
  require_grid(x.grid(), ref.grid(), "ssim");
  Grid const g = x.grid();
  if (g.height < opt.window || g.width < opt.window) { throw DimensionError("ssim: image smaller than window"); }
  double range = 0.0;
  for (auto v : ref.data()) { range = std::max(range, std::abs(v)); }
  double const c1 = (opt.k1 * range) * (opt.k1 * range);
  double const c2 = (opt.k2 * range) * (opt.k2 * range);

  std::vector<double> a(g.size()), b(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    a[i] = std::abs(x[i]);
    b[i] = std::abs(ref[i]);
  }
  auto const k = detail::gaussian_window(opt.window, opt.sigma);
  std::size_t const n = opt.window;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + n <= g.height; ++r) {
    for (std::size_t c = 0; c + n <= g.width; ++c) {
      double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          double const wgt = k[i] * k[j];
          std::size_t const p = (r + i) * g.width + c + j;
          ma += wgt * a[p];
          mb += wgt * b[p];
          saa += wgt * a[p] * a[p];
          sbb += wgt * b[p] * b[p];
          sab += wgt * a[p] * b[p];
        }
      }
      double const va = saa - ma * ma;
      double const vb = sbb - mb * mb;
      double const cov = sab - ma * mb;
      total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

struct EpeReport
{
  double mean = 0.0;
  // Mean over roi pixels for each (t1, t2), row-major N x N.
  std::vector<double> per_pair;
};

/// Mean end-point error over roi pixels and all N^2 pairs.
inline auto end_point_error(MotionFieldSet const &est, MotionFieldSet const &gt, std::vector<std::uint8_t> const &roi)
  -> EpeReport
{
  if (est.n_frames() != gt.n_frames()) { throw DimensionError("epe: frame counts differ"); }
  require_grid(est.grid(), gt.grid(), "epe");
  if (roi.size() != est.grid().size()) { throw DimensionError("epe: roi size != H*W"); }
  std::size_t const n = est.n_frames();
  auto const npix = static_cast<std::size_t>(std::count_if(roi.begin(), roi.end(), [](auto v) { return v != 0; }));
  if (npix == 0) { throw Error("epe: empty roi"); }

  EpeReport out;
  double total = 0.0;
  for (std::size_t t1 = 0; t1 < n; ++t1) {
    for (std::size_t t2 = 0; t2 < n; ++t2) {
      auto const &a = est.at(t1, t2);
      auto const &b = gt.at(t1, t2);
      double s = 0.0;
      for (std::size_t i = 0; i < roi.size(); ++i) {
        if (roi[i] == 0) { continue; }
        s += std::hypot(a.dy[i] - b.dy[i], a.dx[i] - b.dx[i]);
      }
      out.per_pair.push_back(s / static_cast<double>(npix));
      total += s;
    }
  }
  out.mean = total / static_cast<double>(npix * n * n);
  return out;
}

} // namespace mcmr
