#pragma once

#include "core.hpp"
#include "operators.hpp"

#include <array>
#include <functional>

namespace mcmr {

struct CgReport
{
  std::size_t iterations_run = 0;
  // Entry 0 is the residual of the starting point; entry k follows iteration k.
  std::vector<double> relative_residual_history;
  bool converged = false;
  bool breakdown = false;
};

template <typename T>
struct Solved
{
  T value;
  CgReport report;
};

/// Callable form of a normal operator: out = H in.
using NormalApply = std::function<void(std::span<cplx const>, std::span<cplx>)>;

/// Called after every iteration with (iteration, current iterate).
using CgObserver = std::function<void(std::size_t, std::span<cplx const>)>;

/// Conjugate gradients for H x = b with H Hermitian positive (semi)definite.
/// Stops when |r_k| / |b| <= tol or after max_iters iterations. A direction
/// with non-positive curvature ends the solve with breakdown set and the
/// current iterate returned.
inline auto cg(NormalApply const &op, std::span<cplx const> rhs, CVec x, double tol, std::size_t max_iters,
               CgObserver const &observe = {}) -> Solved<CVec>
{
  std::size_t const n = rhs.size();
  if (x.size() != n) { throw DimensionError("cg: x0 size != rhs size"); }
  for (auto v : rhs) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) { throw Error("cg: non-finite right-hand side"); }
  }
  CgReport report;
  double const bnorm = norm2(rhs);
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), cplx{0.0, 0.0});
    report.relative_residual_history.push_back(0.0);
    report.converged = true;
    return {std::move(x), report};
  }

  CVec r(n), p(n), hp(n);
  op(x, hp);
  for (std::size_t i = 0; i < n; ++i) { r[i] = rhs[i] - hp[i]; }
  p = r;
  double rr = dot(r, r).real();
  report.relative_residual_history.push_back(std::sqrt(rr) / bnorm);
  if (std::sqrt(rr) / bnorm <= tol) {
    report.converged = true;
    return {std::move(x), report};
  }

  for (std::size_t k = 1; k <= max_iters; ++k) {
    op(p, hp);
    double const curvature = dot(p, hp).real();
    if (!(curvature > 0.0) || !std::isfinite(curvature)) {
      report.breakdown = true;
      break;
    }
    double const step = rr / curvature;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += step * p[i];
      r[i] -= step * hp[i];
    }
    double const rr_next = dot(r, r).real();
    report.iterations_run = k;
    report.relative_residual_history.push_back(std::sqrt(rr_next) / bnorm);
    if (observe) { observe(k, x); }
    if (std::sqrt(rr_next) / bnorm <= tol) {
      report.converged = true;
      break;
    }
    if (rr_next == 0.0) { break; }
    double const beta = rr_next / rr;
    for (std::size_t i = 0; i < n; ++i) { p[i] = r[i] + beta * p[i]; }
    rr = rr_next;
  }
  return {std::move(x), report};
}

inline auto cg(LinearOperator const &op, ComplexImage const &rhs, ComplexImage const &x0, double tol,
               std::size_t max_iters) -> Solved<ComplexImage>
{
  require_grid(rhs.grid(), x0.grid(), "cg");
  NormalApply apply = [&op](std::span<cplx const> in, std::span<cplx> out) {
    auto y = op.apply(CVec(in.begin(), in.end()));
    std::copy(y.begin(), y.end(), out.begin());
  };
  auto s = cg(apply, rhs.data(), x0.vec(), tol, max_iters);
  return {ComplexImage(rhs.height(), rhs.width(), std::move(s.value)), s.report};
}

/// Shared state for the motion-compensated subproblems of one unroll step:
/// coil maps, row masks and the per-frame adjoint data A^H y.
struct EncodingContext
{
  CoilMaps const *coils = nullptr;
  std::vector<RowMask> masks;
  std::vector<ComplexImage> adjoint_data;

  EncodingContext(KSpaceSet const &y, CoilMaps const &c, SamplingMaskSet const &m)
    : coils(&c)
  {
    if (y.n_frames() != m.n_frames() || y.grid() != c.grid() || m.grid() != c.grid() ||
        y.n_coils() != c.n_coils()) {
      throw DimensionError("k-space, coil maps and masks disagree on dimensions");
    }
    for (std::size_t t = 0; t < y.n_frames(); ++t) {
      masks.push_back(m.row_mask(t));
      adjoint_data.push_back(decode_frame(y.frame(t), c, masks.back()));
    }
  }

  auto n_frames() const -> std::size_t { return masks.size(); }
  auto grid() const -> Grid { return coils->grid(); }
};

/// sum_t2 U^H A_t2^H A_t2 U x + shift * x for source frame t1.
inline auto mc_normal_apply(EncodingContext const &ctx, MotionFieldSet const &motion, std::size_t t1, double shift)
  -> NormalApply
{
  auto scratch = std::make_shared<std::array<CVec, 3>>();
  return [&ctx, &motion, t1, shift, scratch](std::span<cplx const> x, std::span<cplx> out) {
    auto &[warped, normal, fft_buf] = *scratch;
    std::size_t const m = x.size();
    warped.resize(m);
    normal.resize(m);
    for (std::size_t i = 0; i < m; ++i) { out[i] = shift * x[i]; }
    for (std::size_t t2 = 0; t2 < ctx.n_frames(); ++t2) {
      auto const &u = motion.at(t1, t2);
      bool const identity = u.is_zero();
      std::span<cplx const> src = x;
      if (!identity) {
        warp_apply<cplx>(x, warped, u);
        src = warped;
      }
      normal_frame(src, normal, *ctx.coils, ctx.masks[t2], fft_buf);
      if (identity) {
        for (std::size_t i = 0; i < m; ++i) { out[i] += normal[i]; }
      } else {
        warp_adjoint<cplx>(normal, warped, u);
        for (std::size_t i = 0; i < m; ++i) { out[i] += warped[i]; }
      }
    }
  };
}

inline auto mc_rhs(EncodingContext const &ctx, MotionFieldSet const &motion, std::size_t t1,
                   ComplexImage const &x_prev, double prior_weight) -> CVec
{
  std::size_t const m = ctx.grid().size();
  CVec rhs(m);
  for (std::size_t i = 0; i < m; ++i) { rhs[i] = prior_weight * x_prev[i]; }
  CVec back(m);
  for (std::size_t t2 = 0; t2 < ctx.n_frames(); ++t2) {
    auto const &u = motion.at(t1, t2);
    if (u.is_zero()) {
      for (std::size_t i = 0; i < m; ++i) { rhs[i] += ctx.adjoint_data[t2][i]; }
    } else {
      warp_adjoint<cplx>(ctx.adjoint_data[t2].data(), back, u);
      for (std::size_t i = 0; i < m; ++i) { rhs[i] += back[i]; }
    }
  }
  return rhs;
}

inline void check_motion(EncodingContext const &ctx, MotionFieldSet const &motion)
{
  if (motion.n_frames() != ctx.n_frames()) { throw DimensionError("motion set frame count != data frame count"); }
  require_grid(motion.grid(), ctx.grid(), "motion set");
  for (std::size_t a = 0; a < motion.n_frames(); ++a) {
    for (std::size_t b = 0; b < motion.n_frames(); ++b) {
      if (!motion.at(a, b).all_finite()) { throw Error("motion set: non-finite displacement"); }
    }
  }
}

/// Solves frame t1 of the prior-regularized motion-compensated least squares
/// problem with frozen motion, warm-started at x_prev:
///   (sum_t2 U^H A^H A U + I / (2 lambda)) x = sum_t2 U^H A^H y_t2 + x_prev / (2 lambda)
inline auto solve_mc_frame(EncodingContext const &ctx, std::size_t t1, MotionFieldSet const &motion,
                           ComplexImage const &x_prev, ReconConfig const &cfg, CgObserver const &observe = {})
  -> Solved<ComplexImage>
{
  if (!(cfg.lambda > 0.0)) { throw ConfigError("lambda must be > 0"); }
  check_motion(ctx, motion);
  require_grid(x_prev.grid(), ctx.grid(), "x_prev");
  double const prior = 1.0 / (2.0 * cfg.lambda);
  auto const rhs = mc_rhs(ctx, motion, t1, x_prev, prior);
  auto s = cg(mc_normal_apply(ctx, motion, t1, prior), rhs, x_prev.vec(), cfg.cg_tol, cfg.cg_max_iters, observe);
  Grid const g = ctx.grid();
  return {ComplexImage(g.height, g.width, std::move(s.value)), s.report};
}

inline auto solve_mc_frame(std::size_t t1, KSpaceSet const &y, CoilMaps const &coils, SamplingMaskSet const &masks,
                           MotionFieldSet const &motion, ComplexImage const &x_prev, ReconConfig const &cfg)
  -> Solved<ComplexImage>
{
  EncodingContext const ctx(y, coils, masks);
  return solve_mc_frame(ctx, t1, motion, x_prev, cfg);
}

/// Motion-free CG-SENSE of frame t from zero, stopped after n_iters iterations.
inline auto solve_plain_frame(EncodingContext const &ctx, std::size_t t, std::size_t n_iters) -> Solved<ComplexImage>
{
  Grid const g = ctx.grid();
  auto scratch = std::make_shared<CVec>();
  NormalApply op = [&ctx, t, scratch](std::span<cplx const> x, std::span<cplx> out) {
    normal_frame(x, out, *ctx.coils, ctx.masks[t], *scratch);
  };
  // tol = 0: only an exact zero residual ends the solve early
  auto s = cg(op, ctx.adjoint_data[t].data(), CVec(g.size()), 0.0, n_iters);
  return {ComplexImage(g.height, g.width, std::move(s.value)), s.report};
}

inline auto solve_plain_frame(std::size_t t, KSpaceSet const &y, CoilMaps const &coils, SamplingMaskSet const &masks,
                              std::size_t n_iters) -> Solved<ComplexImage>
{
  EncodingContext const ctx(y, coils, masks);
  return solve_plain_frame(ctx, t, n_iters);
}

} // namespace mcmr
