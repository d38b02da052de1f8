#pragma once

#include "cg.hpp"
#include "metrics.hpp"
#include "motion.hpp"
#include "parallel.hpp"

#include <chrono>

namespace mcmr {

/// x0: per-frame adjoint of the undersampled data.
inline auto zero_filled(KSpaceSet const &y, CoilMaps const &coils, SamplingMaskSet const &masks) -> ImageSequence
{
  EncodingContext const ctx(y, coils, masks);
  return ImageSequence(ctx.adjoint_data);
}

namespace detail {

inline auto residual_norm2(ComplexImage const &z, KSpaceSet const &y, std::size_t t2, CoilMaps const &coils,
                           RowMask const &mask) -> double
{
  auto const k = encode_frame(z, coils, mask);
  auto const yt = y.frame(t2);
  double s = 0.0;
  for (std::size_t i = 0; i < yt.size(); ++i) { s += std::norm(k.data[i] - yt[i]); }
  return s;
}

inline void check_sequence(ImageSequence const &x, KSpaceSet const &y, CoilMaps const &coils,
                           SamplingMaskSet const &masks)
{
  if (x.n_frames() != y.n_frames() || y.n_frames() != masks.n_frames()) {
    throw DimensionError("sequence, k-space and masks disagree on frame count");
  }
  require_grid(x.grid(), coils.grid(), "sequence");
  require_grid(y.grid(), coils.grid(), "k-space");
  require_grid(masks.grid(), coils.grid(), "masks");
  if (y.n_coils() != coils.n_coils()) { throw DimensionError("k-space and coil maps disagree on coil count"); }
}

} // namespace detail

/// sum_t1 sum_t2 |A_t2 U(t1->t2) x_t1 - y_t2|^2
inline auto eq1_objective(ImageSequence const &x, MotionFieldSet const &u, KSpaceSet const &y, CoilMaps const &coils,
                          SamplingMaskSet const &masks, std::size_t threads = 1) -> double
{
  detail::check_sequence(x, y, coils, masks);
  std::size_t const n = x.n_frames();
  if (u.n_frames() != n) { throw DimensionError("eq1_objective: motion frame count mismatch"); }
  require_grid(u.grid(), x.grid(), "eq1_objective");
  std::vector<RowMask> rows;
  for (std::size_t t = 0; t < n; ++t) { rows.push_back(masks.row_mask(t)); }
  std::vector<double> per_source(n, 0.0);
  parallel_for(n, threads, [&](std::size_t t1) {
    for (std::size_t t2 = 0; t2 < n; ++t2) {
      auto const z = warp_apply(x[t1], u.at(t1, t2));
      per_source[t1] += detail::residual_norm2(z, y, t2, coils, rows[t2]);
    }
  });
  double total = 0.0;
  for (double v : per_source) { total += v; }
  return total;
}

/// sum_t |A_t x_t - y_t|^2: the data term of the motion-free first block.
inline auto frame_data_fidelity(ImageSequence const &x, KSpaceSet const &y, CoilMaps const &coils,
                                SamplingMaskSet const &masks) -> double
{
  detail::check_sequence(x, y, coils, masks);
  double total = 0.0;
  for (std::size_t t = 0; t < x.n_frames(); ++t) { total += detail::residual_norm2(x[t], y, t, coils, masks.row_mask(t)); }
  return total;
}

struct IterationRecord
{
  std::size_t iteration = 0; // 1-based; iteration 1 is the motion-free block
  // Iteration 1 reports the per-frame data term; later ones the full group objective under the motion used.
  double eq1_data_fidelity = 0.0;
  std::optional<MotionEnergyBreakdown> motion_energy;
  std::optional<double> psnr_vs_reference;
  std::vector<CgReport> cg_reports;
  double wall_time = 0.0;
};

struct UnrollHistory
{
  std::vector<IterationRecord> iterations;
  bool stopped_early = false;

  auto size() const -> std::size_t { return iterations.size(); }
  auto any_breakdown() const -> bool
  {
    for (auto const &it : iterations) {
      for (auto const &r : it.cg_reports) {
        if (r.breakdown) { return true; }
      }
    }
    return false;
  }
  auto psnr_series() const -> std::vector<double>
  {
    std::vector<double> out;
    for (auto const &it : iterations) {
      if (it.psnr_vs_reference) { out.push_back(*it.psnr_vs_reference); }
    }
    return out;
  }
};

struct ReconResult
{
  ImageSequence images;
  MotionFieldSet motion;
  UnrollHistory history;
  std::vector<MotionFieldSet> intermediate_motion; // only with keep_intermediate_motion
};

/// Carries the history recorded before an estimator or solver failure.
class PipelineError : public Error
{
public:
  PipelineError(std::string const &what, UnrollHistory h)
    : Error(what)
    , history(std::move(h))
  {
  }
  UnrollHistory history;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline auto seconds_since(Clock::time_point start) -> double
{
  return std::chrono::duration<double>(Clock::now() - start).count();
}

inline auto plain_block(EncodingContext const &ctx, ReconConfig const &cfg, std::vector<CgReport> &reports)
  -> ImageSequence
{
  std::size_t const n = ctx.n_frames();
  std::vector<ComplexImage> frames(n);
  reports.assign(n, {});
  parallel_for(n, cfg.threads, [&](std::size_t t) {
    auto s = solve_plain_frame(ctx, t, cfg.first_block_cg_iters);
    frames[t] = std::move(s.value);
    reports[t] = std::move(s.report);
  });
  return ImageSequence(std::move(frames));
}

inline auto mc_block(EncodingContext const &ctx, MotionFieldSet const &u, ImageSequence const &prev,
                     ReconConfig const &cfg, std::vector<CgReport> &reports) -> ImageSequence
{
  std::size_t const n = ctx.n_frames();
  std::vector<ComplexImage> frames(n);
  reports.assign(n, {});
  parallel_for(n, cfg.threads, [&](std::size_t t) {
    auto s = solve_mc_frame(ctx, t, u, prev[t], cfg);
    frames[t] = std::move(s.value);
    reports[t] = std::move(s.report);
  });
  return ImageSequence(std::move(frames));
}

// Shared loop of the unrolled and fixed-motion modes; `next_motion` supplies u_{i-1} from x_{i-1}.
template <typename NextMotion>
auto run_unrolled(KSpaceSet const &y, CoilMaps const &coils, SamplingMaskSet const &masks, ReconConfig const &rcfg,
                  MotionConfig const &mcfg, std::optional<ImageSequence> const &reference, NextMotion &&next_motion)
  -> ReconResult
{
  rcfg.validate();
  EncodingContext const ctx(y, coils, masks);
  if (reference) {
    if (reference->n_frames() != ctx.n_frames()) { throw DimensionError("reference frame count mismatch"); }
    require_grid(reference->grid(), ctx.grid(), "reference");
  }

  ReconResult out;
  out.motion = MotionFieldSet(ctx.n_frames(), ctx.grid());
  auto &hist = out.history;
  try {
    auto start = Clock::now();
    IterationRecord rec;
    rec.iteration = 1;
    ImageSequence x = plain_block(ctx, rcfg, rec.cg_reports);
    rec.eq1_data_fidelity = frame_data_fidelity(x, y, coils, masks);
    if (reference) { rec.psnr_vs_reference = psnr(x, *reference).mean; }
    rec.wall_time = seconds_since(start);
    hist.iterations.push_back(std::move(rec));

    for (std::size_t i = 2; i <= rcfg.unroll_iters; ++i) {
      start = Clock::now();
      IterationRecord r;
      r.iteration = i;
      MotionFieldSet u = next_motion(x);
      r.motion_energy = motion_energy(u, x, mcfg);
      ImageSequence xi = mc_block(ctx, u, x, rcfg, r.cg_reports);
      r.eq1_data_fidelity = eq1_objective(xi, u, y, coils, masks, rcfg.threads);
      if (reference) { r.psnr_vs_reference = psnr(xi, *reference).mean; }
      r.wall_time = seconds_since(start);
      x = std::move(xi);
      if (rcfg.keep_intermediate_motion) { out.intermediate_motion.push_back(u); }
      out.motion = std::move(u);
      double const prev_psnr = hist.iterations.back().psnr_vs_reference.value_or(0.0);
      hist.iterations.push_back(std::move(r));
      if (reference && rcfg.early_stop && i < rcfg.unroll_iters &&
          *hist.iterations.back().psnr_vs_reference - prev_psnr < rcfg.psnr_stop_delta) {
        hist.stopped_early = true;
        break;
      }
    }
    out.images = std::move(x);
  } catch (PipelineError const &) {
    throw;
  } catch (std::exception const &e) {
    throw PipelineError(e.what(), hist);
  }
  return out;
}

} // namespace detail

/// Unrolled alternation: motion-free first block, then (estimate motion on
/// x_{i-1}, motion-compensated CG from x_{i-1}) for i = 2..I. With a reference
/// the loop stops once the mean PSNR gains less than psnr_stop_delta.
inline auto reconstruct(KSpaceSet const &y, CoilMaps const &coils, SamplingMaskSet const &masks,
                        ReconConfig const &rcfg, MotionConfig const &mcfg, MotionEstimator const &estimator,
                        std::optional<ImageSequence> const &reference = std::nullopt) -> ReconResult
{
  mcfg.validate();
  return detail::run_unrolled(y, coils, masks, rcfg, mcfg, reference,
                              [&](ImageSequence const &x) { return estimate_all(estimator, x, mcfg); });
}

/// Baseline with one motion set held fixed across all motion-compensated blocks.
inline auto precomputed_motion_reconstruct(KSpaceSet const &y, CoilMaps const &coils, SamplingMaskSet const &masks,
                                           MotionFieldSet const &fixed_u, ReconConfig const &rcfg,
                                           std::optional<ImageSequence> const &reference = std::nullopt,
                                           MotionConfig const &mcfg = {}) -> ReconResult
{
  return detail::run_unrolled(y, coils, masks, rcfg, mcfg, reference, [&](ImageSequence const &) { return fixed_u; });
}

/// Motion-free per-frame CG-SENSE from zero, run to cg_tol or cg_max_iters.
inline auto plain_sense(KSpaceSet const &y, CoilMaps const &coils, SamplingMaskSet const &masks,
                        ReconConfig const &rcfg, std::optional<ImageSequence> const &reference = std::nullopt)
  -> ReconResult
{
  rcfg.validate();
  EncodingContext const ctx(y, coils, masks);
  auto const start = detail::Clock::now();
  std::size_t const n = ctx.n_frames();
  Grid const g = ctx.grid();
  std::vector<ComplexImage> frames(n);
  IterationRecord rec;
  rec.iteration = 1;
  rec.cg_reports.resize(n);
  parallel_for(n, rcfg.threads, [&](std::size_t t) {
    auto scratch = std::make_shared<CVec>();
    NormalApply op = [&ctx, t, scratch](std::span<cplx const> x, std::span<cplx> out) {
      normal_frame(x, out, *ctx.coils, ctx.masks[t], *scratch);
    };
    auto s = cg(op, ctx.adjoint_data[t].data(), CVec(g.size()), rcfg.cg_tol, rcfg.cg_max_iters);
    frames[t] = ComplexImage(g.height, g.width, std::move(s.value));
    rec.cg_reports[t] = std::move(s.report);
  });
  ReconResult out;
  out.images = ImageSequence(std::move(frames));
  out.motion = MotionFieldSet(n, g);
  rec.eq1_data_fidelity = frame_data_fidelity(out.images, y, coils, masks);
  if (reference) { rec.psnr_vs_reference = psnr(out.images, *reference).mean; }
  rec.wall_time = detail::seconds_since(start);
  out.history.iterations.push_back(std::move(rec));
  return out;
}

} // namespace mcmr
