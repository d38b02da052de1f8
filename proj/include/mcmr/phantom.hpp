#pragma once

#include "core.hpp"
#include "operators.hpp"
#include "random.hpp"

#include <numbers>

namespace mcmr {

struct PhantomSpec
{
  std::size_t n_frames = 25;
  std::size_t height = 128;
  std::size_t width = 128;
  double motion_amplitude = 3.0; // peak contraction displacement, pixels
  std::size_t n_ellipses = 6;    // extra random texture ellipses inside the body
  std::uint64_t seed = 7;
  double edge_width = 6.0; // pixels over which region boundaries ramp

  void validate() const
  {
    if (n_frames < 2) { throw ConfigError("phantom needs at least two frames"); }
    if (height < 8 || width < 8) { throw ConfigError("phantom grid must be at least 8x8"); }
    if (!(motion_amplitude >= 0.0)) { throw ConfigError("motion amplitude must be >= 0"); }
    if (!(edge_width > 0.0)) { throw ConfigError("edge width must be > 0"); }
  }
};

struct Phantom
{
  ImageSequence frames;
  MotionFieldSet motion;
  std::vector<std::uint8_t> body; // pixels where the object is non-zero, all frames
};

namespace detail {

struct Ellipse
{
  double cy, cx; // centre relative to the grid centre, pixels
  double ay, ax; // semi-axes, pixels
  double value;
};

// C2 ramp from 0 (d <= -1) to 1 (d >= 1).
inline auto smootherstep(double d) -> double
{
  double const t = std::clamp(0.5 * (d + 1.0), 0.0, 1.0);
  return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

// Smooth indicator of an ellipse, exactly 1 inside the ramp and 0 outside it.
inline auto ellipse_indicator(Ellipse const &e, double y, double x, double edge) -> double
{
  double const ny = (y - e.cy) / e.ay;
  double const nx = (x - e.cx) / e.ax;
  double const rho = std::sqrt(ny * ny + nx * nx);
  double const signed_dist = (1.0 - rho) * std::min(e.ay, e.ax);
  return smootherstep(2.0 * signed_dist / edge);
}

// Radial contraction about the heart centre in an elliptical metric. The map
// scales the offset vector by g(rho)/rho with g piecewise linear: k*rho inside
// r_in, a linear blend up to r_out, identity beyond. Offsets keep their
// direction, so the inverse uses g^-1, which is piecewise linear as well.
struct RadialDeformation
{
  double cy = 0.0, cx = 0.0;
  double metric_y = 1.0, metric_x = 1.0;
  double r_in = 1.0, r_out = 2.0;

  auto rho(double dy, double dx) const -> double
  {
    return std::sqrt((dy / metric_y) * (dy / metric_y) + (dx / metric_x) * (dx / metric_x));
  }

  auto forward_radius(double r, double k) const -> double
  {
    if (r < r_in) { return k * r; }
    if (r < r_out) { return k * r_in + (r - r_in) * (r_out - k * r_in) / (r_out - r_in); }
    return r;
  }

  auto inverse_radius(double r, double k) const -> double
  {
    if (r < k * r_in) { return r / k; }
    if (r < r_out) { return r_in + (r - k * r_in) * (r_out - r_in) / (r_out - k * r_in); }
    return r;
  }

  // Maps a point (relative to grid centre) by radius map `fn`.
  template <typename Fn>
  auto map(double y, double x, Fn &&fn) const -> std::pair<double, double>
  {
    double const dy = y - cy;
    double const dx = x - cx;
    double const r = rho(dy, dx);
    if (r == 0.0) { return {y, x}; }
    double const s = fn(r) / r;
    return {cy + dy * s, cx + dx * s};
  }
};

inline auto centred(std::size_t i, std::size_t n) -> double
{
  return static_cast<double>(i) - static_cast<double>(n / 2);
}

struct PhantomModel
{
  std::vector<Ellipse> regions; // additive layers, in material coordinates
  Ellipse body;
  RadialDeformation deformation;
  std::vector<double> contraction; // k_t per frame
  double edge = 3.0;
  double h = 0, w = 0;

  // k(t) = 1 - A / r_in * (1 - cos(2 pi t / N)) / 2
  auto contraction_at(PhantomSpec const &spec, double t) const -> double
  {
    double const phase = 2.0 * std::numbers::pi * t / static_cast<double>(spec.n_frames);
    return 1.0 - spec.motion_amplitude / deformation.r_in * 0.5 * (1.0 - std::cos(phase));
  }

  auto value(double y, double x) const -> cplx
  {
    double v = 0.0;
    double const b = ellipse_indicator(body, y, x, edge);
    v += body.value * b * (1.0 + 0.15 * std::sin(2.0 * std::numbers::pi * y / (0.23 * h)) *
                                     std::cos(2.0 * std::numbers::pi * x / (0.19 * w)));
    for (auto const &e : regions) { v += e.value * ellipse_indicator(e, y, x, edge); }
    v = std::clamp(v, 0.0, 1.0);
    double const phase = 0.6 * std::sin(2.0 * std::numbers::pi * (y / h + 0.1)) + 0.4 * x / w;
    return std::polar(v, phase);
  }
};

} // namespace detail

namespace detail {

inline auto build_model(PhantomSpec const &spec) -> PhantomModel
{
  spec.validate();
  double const h = static_cast<double>(spec.height);
  double const w = static_cast<double>(spec.width);
  double const s = std::min(h, w) / 128.0;
  Rng rng(spec.seed);

  PhantomModel model;
  model.h = h;
  model.w = w;
  model.edge = spec.edge_width;
  model.body = {0.0, 0.0, 0.40 * h, 0.44 * w, 0.3};

  double const hy = -0.06 * h, hx = 0.05 * w; // heart centre
  model.regions.push_back({hy, hx, 22.0 * s, 20.0 * s, 0.3});  // myocardium
  model.regions.push_back({hy, hx, 13.0 * s, 11.5 * s, 0.4});  // blood pool
  model.regions.push_back({0.22 * h, -0.18 * w, 12.0 * s, 17.0 * s, 0.25});
  model.regions.push_back({-0.05 * h, -0.26 * w, 16.0 * s, 8.0 * s, -0.15});
  model.regions.push_back({0.28 * h, 0.2 * w, 7.0 * s, 7.0 * s, 0.45});
  for (std::size_t k = 0; k < spec.n_ellipses; ++k) {
    double const ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double const rad = rng.uniform(0.1, 0.3);
    model.regions.push_back({rad * h * std::sin(ang), rad * w * std::cos(ang), rng.uniform(3.0, 8.0) * s,
                             rng.uniform(3.0, 8.0) * s, rng.uniform(-0.12, 0.15)});
  }

  auto &def = model.deformation;
  def.cy = hy;
  def.cx = hx;
  def.metric_y = 1.0;
  def.metric_x = 0.9;
  def.r_in = 17.0 * s;
  def.r_out = 34.0 * s;
  if (spec.motion_amplitude >= def.r_in) {
    throw ConfigError("motion amplitude too large for the grid: must be < " + std::to_string(def.r_in) + " px");
  }
  for (std::size_t t = 0; t < spec.n_frames; ++t) { model.contraction.push_back(model.contraction_at(spec, static_cast<double>(t))); }
  return model;
}

inline auto render(PhantomModel const &model, Grid g, double k) -> ComplexImage
{
  auto const &def = model.deformation;
  ComplexImage img(g);
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) {
      auto [my, mx] = def.map(centred(r, g.height), centred(c, g.width), [&](double rr) { return def.inverse_radius(rr, k); });
      img(r, c) = model.value(my, mx);
    }
  }
  return img;
}

} // namespace detail

/// Renders the phantom at a fractional cardiac phase; phase n_frames wraps to 0.
inline auto phantom_frame(PhantomSpec const &spec, double phase) -> ComplexImage
{
  auto const model = detail::build_model(spec);
  return detail::render(model, Grid{spec.height, spec.width}, model.contraction_at(spec, phase));
}

/// Dynamic piecewise-smooth phantom with analytic inter-frame displacement.
/// Frame t is the material image pulled back through a periodic radial
/// contraction of the inner (cardiac) region; the displacement between any two
/// frames is the composition of one inverse and one forward radial map.
inline auto make_phantom(PhantomSpec const &spec) -> Phantom
{
  auto const model = detail::build_model(spec);
  auto const &def = model.deformation;
  Grid const g{spec.height, spec.width};
  auto centre_y = [&](std::size_t r) { return detail::centred(r, g.height); };
  auto centre_x = [&](std::size_t c) { return detail::centred(c, g.width); };

  Phantom out;
  std::vector<ComplexImage> frames;
  for (std::size_t t = 0; t < spec.n_frames; ++t) { frames.push_back(detail::render(model, g, model.contraction[t])); }
  out.frames = ImageSequence(std::move(frames));

  // u^(t1->t2)(p) = forward_t1(inverse_t2(p)) - p
  out.motion = MotionFieldSet(spec.n_frames, g);
  for (std::size_t t1 = 0; t1 < spec.n_frames; ++t1) {
    for (std::size_t t2 = 0; t2 < spec.n_frames; ++t2) {
      double const k1 = model.contraction[t1];
      double const k2 = model.contraction[t2];
      if (k1 == k2) { continue; } // same geometry, exactly zero field
      auto &u = out.motion.at(t1, t2);
      for (std::size_t r = 0; r < g.height; ++r) {
        for (std::size_t c = 0; c < g.width; ++c) {
          double const y = centre_y(r), x = centre_x(c);
          auto [my, mx] = def.map(y, x, [&](double rr) { return def.inverse_radius(rr, k2); });
          auto [py, px] = def.map(my, mx, [&](double rr) { return def.forward_radius(rr, k1); });
          u.dy[r * g.width + c] = py - y;
          u.dx[r * g.width + c] = px - x;
        }
      }
    }
  }

  out.body.assign(g.size(), 0);
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) {
      out.body[r * g.width + c] =
        detail::ellipse_indicator(model.body, centre_y(r), centre_x(c), spec.edge_width) > 0.0 ? 1 : 0;
    }
  }
  return out;
}

/// Dilates a binary map by `radius` pixels (square structuring element).
inline auto dilate(std::vector<std::uint8_t> const &m, Grid g, std::size_t radius) -> std::vector<std::uint8_t>
{
  std::vector<std::uint8_t> out(m.size(), 0);
  auto const rad = static_cast<std::ptrdiff_t>(radius);
  auto const h = static_cast<std::ptrdiff_t>(g.height), w = static_cast<std::ptrdiff_t>(g.width);
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      if (m[static_cast<std::size_t>(r * w + c)] == 0) { continue; }
      for (auto rr = std::max<std::ptrdiff_t>(0, r - rad); rr <= std::min(h - 1, r + rad); ++rr) {
        for (auto cc = std::max<std::ptrdiff_t>(0, c - rad); cc <= std::min(w - 1, c + rad); ++cc) {
          out[static_cast<std::size_t>(rr * w + cc)] = 1;
        }
      }
    }
  }
  return out;
}

/// Q smooth Gaussian-profile coil sensitivities around the field of view,
/// phase-referenced to coil 0 and normalized so sum_q |c_q|^2 = 1 on the
/// support. An empty support means the whole grid.
inline auto make_coil_maps(std::size_t n_coils, std::size_t height, std::size_t width,
                           std::vector<std::uint8_t> support = {}) -> CoilMaps
{
  if (n_coils < 1) { throw ConfigError("need at least one coil"); }
  Grid const g{height, width};
  if (support.empty()) { support.assign(g.size(), 1); }
  if (support.size() != g.size()) { throw DimensionError("support size != H*W"); }

  double const h = static_cast<double>(height), w = static_cast<double>(width);
  CVec data(n_coils * g.size());
  for (std::size_t q = 0; q < n_coils; ++q) {
    double const ang = 2.0 * std::numbers::pi * static_cast<double>(q) / static_cast<double>(n_coils);
    double const py = 0.55 * h * std::sin(ang), px = 0.55 * w * std::cos(ang);
    double const sigma = 0.45 * std::min(h, w);
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        double const y = static_cast<double>(r) - h / 2.0, x = static_cast<double>(c) - w / 2.0;
        double const d2 = (y - py) * (y - py) + (x - px) * (x - px);
        double const mag = std::exp(-d2 / (2.0 * sigma * sigma));
        double const phase = ang + 1.5 * (y * std::cos(ang) - x * std::sin(ang)) / std::max(h, w);
        data[q * g.size() + r * width + c] = std::polar(mag, phase);
      }
    }
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (support[i] == 0) {
      for (std::size_t q = 0; q < n_coils; ++q) { data[q * g.size() + i] = 0.0; }
      continue;
    }
    double ss = 0.0;
    for (std::size_t q = 0; q < n_coils; ++q) { ss += std::norm(data[q * g.size() + i]); }
    cplx const ref = data[i] / std::abs(data[i]);
    double const inv = 1.0 / std::sqrt(ss);
    for (std::size_t q = 0; q < n_coils; ++q) { data[q * g.size() + i] *= std::conj(ref) * inv; }
  }
  return CoilMaps(n_coils, g, std::move(data), std::move(support));
}

/// Variable-density k-t line pattern. Every frame takes the central band plus
/// round(H/R) - center_lines rows drawn without replacement from a density
/// that decays away from ky = 0; rows used by the previous frame, and rows
/// used often so far, are down-weighted to spread samples over the cycle.
inline auto make_masks(std::size_t n_frames, std::size_t height, std::size_t width, double accel,
                       std::size_t center_lines, std::uint64_t seed) -> SamplingMaskSet
{
  if (!(accel >= 1.0)) { throw ConfigError("acceleration must be >= 1"); }
  if (n_frames < 1 || height < 1) { throw ConfigError("mask needs frames and rows"); }
  auto const budget = static_cast<std::size_t>(std::llround(static_cast<double>(height) / accel));
  if (budget < 1 || budget > height) { throw ConfigError("infeasible sampling budget"); }
  if (center_lines > 0 && !(static_cast<double>(center_lines) < static_cast<double>(height) / accel)) {
    throw ConfigError("center_lines must be < H/R");
  }
  if (center_lines > budget) { throw ConfigError("infeasible budget: center band exceeds lines per frame"); }

  Grid const g{height, width};
  auto const center_start = static_cast<std::uint32_t>(height / 2 - center_lines / 2);
  Rng rng(seed);
  std::vector<double> density(height);
  for (std::size_t r = 0; r < height; ++r) {
    double const k = std::abs(static_cast<double>(r) - static_cast<double>(height / 2)) / (0.5 * static_cast<double>(height));
    density[r] = 0.25 + std::pow(1.0 - std::min(k, 1.0), 2.0);
  }

  std::vector<std::vector<std::uint32_t>> lines(n_frames);
  std::vector<std::size_t> used(height, 0);
  RowMask previous(height, 0);
  RowMask first(height, 0);
  for (std::size_t t = 0; t < n_frames; ++t) {
    RowMask chosen(height, 0);
    // the cycle wraps, so the last frame also neighbours frame 0
    bool const closes_cycle = n_frames > 2 && t + 1 == n_frames;
    for (std::uint32_t r = center_start; r < center_start + center_lines; ++r) { chosen[r] = 1; }
    std::size_t const remaining = budget - center_lines;
    for (std::size_t k = 0; k < remaining; ++k) {
      std::vector<double> weight(height, 0.0);
      double total = 0.0;
      for (std::size_t r = 0; r < height; ++r) {
        if (chosen[r] != 0) { continue; }
        double wgt = density[r] / (1.0 + static_cast<double>(used[r]));
        if (previous[r] != 0) { wgt *= 0.1; }
        if (closes_cycle && first[r] != 0) { wgt *= 0.1; }
        weight[r] = wgt;
        total += wgt;
      }
      double pick = rng.uniform() * total;
      std::size_t sel = height;
      for (std::size_t r = 0; r < height; ++r) {
        if (weight[r] <= 0.0) { continue; }
        sel = r;
        pick -= weight[r];
        if (pick < 0.0) { break; }
      }
      chosen[sel] = 1;
    }
    for (std::uint32_t r = 0; r < height; ++r) {
      if (chosen[r] != 0) {
        lines[t].push_back(r);
        if (r < center_start || r >= center_start + center_lines) { ++used[r]; }
      }
    }
    previous = chosen;
    if (t == 0) { first = chosen; }
  }
  return SamplingMaskSet(g, std::move(lines), static_cast<std::uint32_t>(center_lines));
}

/// y_t = D_t F C x_t plus complex Gaussian noise of std sigma per component on sampled rows.
inline auto simulate_kspace(ImageSequence const &reference, CoilMaps const &coils, SamplingMaskSet const &masks,
                            double noise_sigma, std::uint64_t seed) -> KSpaceSet
{
  if (!(noise_sigma >= 0.0)) { throw ConfigError("noise sigma must be >= 0"); }
  if (reference.n_frames() != masks.n_frames()) { throw DimensionError("reference and masks frame counts differ"); }
  require_grid(reference.grid(), coils.grid(), "simulate_kspace");
  require_grid(masks.grid(), coils.grid(), "simulate_kspace masks");
  Grid const g = coils.grid();
  KSpaceSet y(reference.n_frames(), coils.n_coils(), g);
  Rng rng(seed);
  for (std::size_t t = 0; t < reference.n_frames(); ++t) {
    auto const mask = masks.row_mask(t);
    auto const k = encode_frame(reference[t], coils, mask);
    auto dst = y.frame(t);
    std::copy(k.data.begin(), k.data.end(), dst.begin());
    if (noise_sigma == 0.0) { continue; }
    for (std::size_t q = 0; q < coils.n_coils(); ++q) {
      for (std::size_t r = 0; r < g.height; ++r) {
        if (mask[r] == 0) { continue; }
        for (std::size_t c = 0; c < g.width; ++c) {
          dst[q * g.size() + r * g.width + c] += noise_sigma * rng.complex_normal();
        }
      }
    }
  }
  return y;
}

} // namespace mcmr
