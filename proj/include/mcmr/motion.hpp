#pragma once

#include "core.hpp"
#include "operators.hpp"
#include "parallel.hpp"

#include <limits>
#include <memory>

namespace mcmr {

/// rho(v) = (v^2 + eps)^exponent, the robust penalty of the motion data term.
inline auto charbonnier(double v, double eps = 1e-12, double exponent = 0.45) -> double
{
  return std::pow(v * v + eps, exponent);
}

struct MotionEnergyBreakdown
{
  double data_term = 0.0;
  double spatial_term = 0.0;
  double temporal_term = 0.0;
  double total = 0.0;
};

inline auto combine(double data, double spatial, double temporal, MotionConfig const &cfg) -> MotionEnergyBreakdown
{
  return {data, spatial, temporal, data + cfg.alpha * spatial + cfg.beta * temporal};
}

/// Factor applied to magnitudes before the data term (see MotionConfig::intensity_scale).
inline auto intensity_factor(double max_magnitude, MotionConfig const &cfg) -> double
{
  if (cfg.intensity_scale == 0.0 || max_magnitude <= 0.0) { return 1.0; }
  return cfg.intensity_scale / max_magnitude;
}

inline auto max_magnitude(ImageSequence const &x) -> double
{
  double m = 0.0;
  for (auto const &f : x) {
    for (auto v : f.data()) { m = std::max(m, std::abs(v)); }
  }
  return m;
}

/// Sum of absolute forward differences of both displacement components along rows and columns.
inline auto spatial_term(MotionField const &u) -> double
{
  Grid const g = u.grid;
  double s = 0.0;
  for (auto const *comp : {&u.dy, &u.dx}) {
    auto const &v = *comp;
    for (std::size_t r = 0; r < g.height; ++r) {
      for (std::size_t c = 0; c < g.width; ++c) {
        std::size_t const i = r * g.width + c;
        if (r + 1 < g.height) { s += std::abs(v[i + g.width] - v[i]); }
        if (c + 1 < g.width) { s += std::abs(v[i + 1] - v[i]); }
      }
    }
  }
  return s;
}

/// Sum of absolute forward differences across consecutive targets of one group.
inline auto temporal_term(std::span<MotionField const> group) -> double
{
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < group.size(); ++k) {
    auto const &a = group[k];
    auto const &b = group[k + 1];
    for (std::size_t i = 0; i < a.dy.size(); ++i) { s += std::abs(b.dy[i] - a.dy[i]) + std::abs(b.dx[i] - a.dx[i]); }
  }
  return s;
}

/// Data term for one pair of (already scaled) magnitude images.
inline auto pair_data_term(RealImage const &src, RealImage const &tgt, MotionField const &u, MotionConfig const &cfg)
  -> double
{
  auto const w = warp_apply(src, u);
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    s += charbonnier(w[i] - tgt[i], cfg.charbonnier_eps, cfg.charbonnier_exp);
  }
  return s;
}

/// data + alpha * spatial for one pair of scaled magnitude images.
inline auto pair_energy(RealImage const &src, RealImage const &tgt, MotionField const &u, MotionConfig const &cfg)
  -> MotionEnergyBreakdown
{
  return combine(pair_data_term(src, tgt, u, cfg), spatial_term(u), 0.0, cfg);
}

namespace detail {

inline auto scaled_magnitude(ComplexImage const &x, double factor) -> RealImage
{
  RealImage m(x.grid());
  for (std::size_t i = 0; i < x.size(); ++i) { m[i] = factor * std::abs(x[i]); }
  return m;
}

inline auto pair_factor(ComplexImage const &a, ComplexImage const &b, MotionConfig const &cfg) -> double
{
  double m = 0.0;
  for (auto v : a.data()) { m = std::max(m, std::abs(v)); }
  for (auto v : b.data()) { m = std::max(m, std::abs(v)); }
  return intensity_factor(m, cfg);
}

} // namespace detail

/// Pair energy on complex frames, magnitudes scaled by the brightest pixel of the pair.
inline auto pair_energy(ComplexImage const &src, ComplexImage const &tgt, MotionField const &u,
                        MotionConfig const &cfg) -> MotionEnergyBreakdown
{
  double const f = detail::pair_factor(src, tgt, cfg);
  return pair_energy(detail::scaled_magnitude(src, f), detail::scaled_magnitude(tgt, f), u, cfg);
}

/// Full group-wise energy of a motion set evaluated on the sequence x_ref:
/// Charbonnier data term over all N^2 pairs, alpha-weighted spatial and
/// beta-weighted temporal total variation.
inline auto motion_energy(MotionFieldSet const &u, ImageSequence const &x_ref, MotionConfig const &cfg)
  -> MotionEnergyBreakdown
{
  std::size_t const n = x_ref.n_frames();
  if (u.n_frames() != n) { throw DimensionError("motion_energy: motion set and sequence frame counts differ"); }
  require_grid(u.grid(), x_ref.grid(), "motion_energy");
  double const f = intensity_factor(max_magnitude(x_ref), cfg);
  std::vector<RealImage> mags;
  for (auto const &fr : x_ref) { mags.push_back(detail::scaled_magnitude(fr, f)); }

  double data = 0.0, spatial = 0.0, temporal = 0.0;
  for (std::size_t t1 = 0; t1 < n; ++t1) {
    std::vector<MotionField> group;
    for (std::size_t t2 = 0; t2 < n; ++t2) {
      data += pair_data_term(mags[t1], mags[t2], u.at(t1, t2), cfg);
      spatial += spatial_term(u.at(t1, t2));
      group.push_back(u.at(t1, t2));
    }
    temporal += temporal_term(group);
  }
  return combine(data, spatial, temporal, cfg);
}

/// sum_i gamma^(I - i) L_i over the per-iteration losses L_1 .. L_I.
inline auto weighted_loss(std::span<double const> losses, double gamma) -> double
{
  if (losses.empty()) { throw ConfigError("weighted_loss: need at least one loss"); }
  if (!(gamma > 0.0 && gamma <= 1.0)) { throw ConfigError("weighted_loss: gamma must lie in (0, 1]"); }
  double total = 0.0;
  double w = 1.0;
  for (std::size_t k = losses.size(); k-- > 0;) {
    total += w * losses[k];
    w *= gamma;
  }
  return total;
}

/// Group-wise motion estimator: from source frame t to every frame of x.
/// Implementations must return a zero field for target t and be re-entrant.
class MotionEstimator
{
public:
  virtual ~MotionEstimator() = default;
  virtual auto estimate_group(ImageSequence const &x, std::size_t t, MotionConfig const &cfg) const
    -> std::vector<MotionField> = 0;
  virtual auto name() const -> std::string = 0;
};

/// Returns identity motion for every pair.
class ZeroMotionEstimator final : public MotionEstimator
{
public:
  auto estimate_group(ImageSequence const &x, std::size_t, MotionConfig const &) const
    -> std::vector<MotionField> override
  {
    return std::vector<MotionField>(x.n_frames(), MotionField(x.grid()));
  }
  auto name() const -> std::string override { return "zero"; }
};

/// Replays a fixed motion set, e.g. analytic ground truth.
class FixedMotionEstimator final : public MotionEstimator
{
public:
  explicit FixedMotionEstimator(MotionFieldSet u)
    : u_(std::move(u))
  {
  }
  auto estimate_group(ImageSequence const &x, std::size_t t, MotionConfig const &) const
    -> std::vector<MotionField> override
  {
    if (x.n_frames() != u_.n_frames()) { throw DimensionError("fixed motion: frame count mismatch"); }
    std::vector<MotionField> g;
    for (std::size_t s = 0; s < u_.n_frames(); ++s) { g.push_back(u_.at(t, s)); }
    return g;
  }
  auto name() const -> std::string override { return "fixed"; }

private:
  MotionFieldSet u_;
};

namespace detail {

// [1 2 1]/4 blur in both directions followed by taking every other sample.
inline auto downsample(RealImage const &img) -> RealImage
{
  Grid const g = img.grid();
  Grid const c{(g.height + 1) / 2, (g.width + 1) / 2};
  auto at = [&](std::ptrdiff_t r, std::ptrdiff_t col) {
    r = std::clamp<std::ptrdiff_t>(r, 0, static_cast<std::ptrdiff_t>(g.height) - 1);
    col = std::clamp<std::ptrdiff_t>(col, 0, static_cast<std::ptrdiff_t>(g.width) - 1);
    return img(static_cast<std::size_t>(r), static_cast<std::size_t>(col));
  };
  RealImage out(c);
  static constexpr double k[3] = {0.25, 0.5, 0.25};
  for (std::size_t r = 0; r < c.height; ++r) {
    for (std::size_t col = 0; col < c.width; ++col) {
      double s = 0.0;
      for (int a = -1; a <= 1; ++a) {
        for (int b = -1; b <= 1; ++b) {
          s += k[a + 1] * k[b + 1] *
               at(2 * static_cast<std::ptrdiff_t>(r) + a, 2 * static_cast<std::ptrdiff_t>(col) + b);
        }
      }
      out(r, col) = s;
    }
  }
  return out;
}

inline auto downsample(MotionField const &u) -> MotionField
{
  auto dy = downsample(RealImage(u.grid.height, u.grid.width, u.dy));
  auto dx = downsample(RealImage(u.grid.height, u.grid.width, u.dx));
  for (auto &v : dy.vec()) { v *= 0.5; }
  for (auto &v : dx.vec()) { v *= 0.5; }
  return {dy.grid(), std::move(dy.vec()), std::move(dx.vec())};
}

// Bilinear upsampling onto `fine`, fine pixel r sitting at coarse coordinate r / 2, values doubled.
inline auto upsample(MotionField const &u, Grid fine) -> MotionField
{
  Grid const c = u.grid;
  MotionField out(fine);
  for (std::size_t r = 0; r < fine.height; ++r) {
    double const y = std::min(0.5 * static_cast<double>(r), static_cast<double>(c.height - 1));
    auto const r0 = static_cast<std::size_t>(y);
    std::size_t const r1 = std::min(r0 + 1, c.height - 1);
    double const fy = y - static_cast<double>(r0);
    for (std::size_t col = 0; col < fine.width; ++col) {
      double const x = std::min(0.5 * static_cast<double>(col), static_cast<double>(c.width - 1));
      auto const c0 = static_cast<std::size_t>(x);
      std::size_t const c1 = std::min(c0 + 1, c.width - 1);
      double const fx = x - static_cast<double>(c0);
      auto lerp = [&](std::vector<double> const &v) {
        return (1 - fy) * ((1 - fx) * v[r0 * c.width + c0] + fx * v[r0 * c.width + c1]) +
               fy * ((1 - fx) * v[r1 * c.width + c0] + fx * v[r1 * c.width + c1]);
      };
      out.dy[r * fine.width + col] = 2.0 * lerp(u.dy);
      out.dx[r * fine.width + col] = 2.0 * lerp(u.dx);
    }
  }
  return out;
}

// Central differences, one-sided at the border.
inline void gradients(RealImage const &img, RealImage &gy, RealImage &gx)
{
  Grid const g = img.grid();
  gy = RealImage(g);
  gx = RealImage(g);
  for (std::size_t r = 0; r < g.height; ++r) {
    std::size_t const ru = r == 0 ? 0 : r - 1;
    std::size_t const rd = std::min(r + 1, g.height - 1);
    for (std::size_t c = 0; c < g.width; ++c) {
      std::size_t const cl = c == 0 ? 0 : c - 1;
      std::size_t const cr = std::min(c + 1, g.width - 1);
      gy(r, c) = (img(rd, c) - img(ru, c)) / static_cast<double>(std::max<std::size_t>(rd - ru, 1));
      gx(r, c) = (img(r, cr) - img(r, cl)) / static_cast<double>(std::max<std::size_t>(cr - cl, 1));
    }
  }
}

} // namespace detail

/// Coarse-to-fine variational estimator minimizing the pair energy
///   sum_p rho(|src(p + u(p))| - |tgt(p)|) + alpha * TV(u)
/// Each warp linearizes the warped source around the current field; the
/// robust penalties are majorized by reweighted quadratics (lagged
/// weights) and the resulting 2x2 block system is relaxed with
/// successive over-relaxation sweeps of factor step_size.
class VariationalEstimator final : public MotionEstimator
{
public:
  struct Options
  {
    // Floors inside the reweighting; the reported energy always uses the
    // configured Charbonnier epsilon.
    double data_eps = 1e-2;
    double tv_eps = 1e-4;
    // Initialize each target from its temporal neighbour's estimate.
    bool warm_start = true;
    // SOR sweeps between recomputations of the IRLS weights.
    std::size_t reweight_every = 5;
  };

  VariationalEstimator() = default;
  explicit VariationalEstimator(Options opt)
    : opt_(opt)
  {
  }

  auto options() const -> Options const & { return opt_; }
  auto name() const -> std::string override { return "variational"; }

  /// Estimates u with src(p + u(p)) ~ tgt(p) on pre-scaled magnitude images.
  /// The result never has higher pair energy than `init` (or zero).
  auto estimate_pair(RealImage const &src, RealImage const &tgt, MotionField const *init,
                     MotionConfig const &cfg) const -> MotionField
  {
    require_grid(src.grid(), tgt.grid(), "estimate_pair");
    Grid const g = src.grid();
    MotionField const start = init != nullptr ? *init : MotionField(g);
    require_grid(start.grid, g, "estimate_pair init");

    std::vector<RealImage> pyr_src{src}, pyr_tgt{tgt};
    std::size_t levels = 1;
    while (levels < cfg.pyramid_levels) {
      Grid const last = pyr_src.back().grid();
      if ((last.height + 1) / 2 < 8 || (last.width + 1) / 2 < 8) { break; }
      pyr_src.push_back(detail::downsample(pyr_src.back()));
      pyr_tgt.push_back(detail::downsample(pyr_tgt.back()));
      ++levels;
    }

    MotionField u = start;
    for (std::size_t l = 1; l < levels; ++l) { u = detail::downsample(u); }
    for (std::size_t l = levels; l-- > 0;) {
      if (l + 1 < levels) { u = detail::upsample(u, pyr_src[l].grid()); }
      for (std::size_t w = 0; w < cfg.warps_per_level; ++w) { refine(pyr_src[l], pyr_tgt[l], u, cfg); }
    }

    double const e_new = pair_energy(src, tgt, u, cfg).total;
    double const e_start = pair_energy(src, tgt, start, cfg).total;
    if (!std::isfinite(e_new) || !u.all_finite() || e_new > e_start) { return start; }
    return u;
  }

  auto estimate_group(ImageSequence const &x, std::size_t t, MotionConfig const &cfg) const
    -> std::vector<MotionField> override
  {
    std::size_t const n = x.n_frames();
    if (n < 2) { throw ConfigError("estimate_group needs at least two frames"); }
    if (t >= n) { throw DimensionError("estimate_group: source frame out of range"); }
    double const f = intensity_factor(max_magnitude(x), cfg);
    std::vector<RealImage> mags;
    for (auto const &fr : x) { mags.push_back(detail::scaled_magnitude(fr, f)); }

    std::vector<MotionField> out(n, MotionField(x.grid()));
    // Walk outward from t in both directions around the cycle; each target is
    // started from the field of the neighbour one step closer to t.
    std::size_t const forward = n / 2;
    std::size_t const backward = n - 1 - forward;
    for (std::size_t k = 1; k <= forward; ++k) {
      std::size_t const s = (t + k) % n;
      std::size_t const prev = (t + k - 1) % n;
      out[s] = estimate_pair(mags[t], mags[s], opt_.warm_start ? &out[prev] : nullptr, cfg);
    }
    for (std::size_t k = 1; k <= backward; ++k) {
      std::size_t const s = (t + n - k) % n;
      std::size_t const prev = (t + n - k + 1) % n;
      out[s] = estimate_pair(mags[t], mags[s], opt_.warm_start ? &out[prev] : nullptr, cfg);
    }
    return out;
  }

private:
  void refine(RealImage const &src, RealImage const &tgt, MotionField &u, MotionConfig const &cfg) const
  {
    Grid const g = src.grid();
    std::size_t const h = g.height, w = g.width, m = g.size();
    double const q = cfg.charbonnier_exp;
    double const alpha = cfg.alpha;
    double const omega = cfg.step_size;

    RealImage sgy, sgx, tgy, tgx;
    detail::gradients(src, sgy, sgx);
    detail::gradients(tgt, tgy, tgx);
    auto const warped = warp_apply(src, u);
    auto const wgy = warp_apply(sgy, u);
    auto const wgx = warp_apply(sgx, u);

    std::vector<double> iy(m), ix(m), rc(m);
    for (std::size_t i = 0; i < m; ++i) {
      iy[i] = 0.5 * (wgy[i] + tgy[i]);
      ix[i] = 0.5 * (wgx[i] + tgx[i]);
      rc[i] = warped[i] - tgt[i];
    }

    std::vector<double> vy = u.dy, vx = u.dx; // current total field
    // TV weights on the edge to the right (e) and below (s), per component
    std::vector<double> ey(m), ex(m), sy(m), sx(m), wd(m);
    auto edge_weight = [&](double d) { return 1.0 / std::sqrt(d * d + opt_.tv_eps); };
    std::size_t const every = std::max<std::size_t>(1, opt_.reweight_every);

    for (std::size_t it = 0; it < cfg.inner_iters; ++it) {
      if (it % every == 0) {
        for (std::size_t r = 0; r < h; ++r) {
          for (std::size_t c = 0; c < w; ++c) {
            std::size_t const i = r * w + c;
            if (c + 1 < w) {
              ey[i] = edge_weight(vy[i + 1] - vy[i]);
              ex[i] = edge_weight(vx[i + 1] - vx[i]);
            }
            if (r + 1 < h) {
              sy[i] = edge_weight(vy[i + w] - vy[i]);
              sx[i] = edge_weight(vx[i + w] - vx[i]);
            }
            double const rl = rc[i] + iy[i] * (vy[i] - u.dy[i]) + ix[i] * (vx[i] - u.dx[i]);
            wd[i] = 2.0 * q * std::pow(rl * rl + opt_.data_eps, q - 1.0);
          }
        }
      }
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          std::size_t const i = r * w + c;
          double const duy = vy[i] - u.dy[i];
          double const dux = vx[i] - u.dx[i];

          double sum_wy = 0.0, sum_wx = 0.0, nb_y = 0.0, nb_x = 0.0;
          auto add = [&](std::size_t j, double wy_e, double wx_e) {
            sum_wy += wy_e;
            sum_wx += wx_e;
            nb_y += wy_e * vy[j];
            nb_x += wx_e * vx[j];
          };
          if (c + 1 < w) { add(i + 1, ey[i], ex[i]); }
          if (c > 0) { add(i - 1, ey[i - 1], ex[i - 1]); }
          if (r + 1 < h) { add(i + w, sy[i], sx[i]); }
          if (r > 0) { add(i - w, sy[i - w], sx[i - w]); }

          double const a11 = wd[i] * iy[i] * iy[i] + alpha * sum_wy + 1e-9;
          double const a22 = wd[i] * ix[i] * ix[i] + alpha * sum_wx + 1e-9;
          double const a12 = wd[i] * iy[i] * ix[i];
          double const b1 = -wd[i] * iy[i] * rc[i] + alpha * (nb_y - sum_wy * u.dy[i]);
          double const b2 = -wd[i] * ix[i] * rc[i] + alpha * (nb_x - sum_wx * u.dx[i]);
          double const det = a11 * a22 - a12 * a12;
          double const sol_y = (a22 * b1 - a12 * b2) / det;
          double const sol_x = (a11 * b2 - a12 * b1) / det;
          vy[i] = u.dy[i] + (1.0 - omega) * duy + omega * sol_y;
          vx[i] = u.dx[i] + (1.0 - omega) * dux + omega * sol_x;
        }
      }
    }
    u.dy = std::move(vy);
    u.dx = std::move(vx);
  }

  Options opt_;
};

/// Pairwise estimate on complex frames; magnitudes are scaled by the pair maximum.
inline auto estimate_pair(ComplexImage const &src, ComplexImage const &tgt, MotionField const *init,
                          MotionConfig const &cfg, VariationalEstimator const &est = VariationalEstimator{})
  -> MotionField
{
  double const f = detail::pair_factor(src, tgt, cfg);
  return est.estimate_pair(detail::scaled_magnitude(src, f), detail::scaled_magnitude(tgt, f), init, cfg);
}

inline auto estimate_group(ImageSequence const &x, std::size_t t, MotionConfig const &cfg) -> std::vector<MotionField>
{
  return VariationalEstimator{}.estimate_group(x, t, cfg);
}

/// Runs the estimator for every source frame; groups are independent and run
/// on cfg.threads workers.
inline auto estimate_all(MotionEstimator const &est, ImageSequence const &x, MotionConfig const &cfg) -> MotionFieldSet
{
  cfg.validate();
  std::size_t const n = x.n_frames();
  if (n < 2) { throw ConfigError("estimate_all needs at least two frames"); }
  MotionFieldSet out(n, x.grid());
  std::vector<std::vector<MotionField>> groups(n);
  parallel_for(n, cfg.threads, [&](std::size_t t) { groups[t] = est.estimate_group(x, t, cfg); });
  for (std::size_t t = 0; t < n; ++t) {
    groups[t][t] = MotionField(x.grid());
    out.set_group(t, std::move(groups[t]));
  }
  return out;
}

inline auto estimate_all(ImageSequence const &x, MotionConfig const &cfg) -> MotionFieldSet
{
  return estimate_all(VariationalEstimator{}, x, cfg);
}

} // namespace mcmr
