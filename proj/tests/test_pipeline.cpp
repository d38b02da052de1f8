#include "oracles.hpp"

#include <mcmr/mcmr.hpp>

#include <gtest/gtest.h>

using namespace mcmr;

namespace {

struct Setup
{
  Phantom ph;
  CoilMaps coils;
  SamplingMaskSet masks;
  KSpaceSet y;
};

auto setup(double accel = 4.0, double sigma = 0.0) -> Setup
{
  PhantomSpec ps;
  ps.n_frames = 4;
  ps.height = ps.width = 32;
  ps.motion_amplitude = 1.5;
  Setup s;
  s.ph = make_phantom(ps);
  Grid const g{ps.height, ps.width};
  s.coils = make_coil_maps(3, g.height, g.width, dilate(s.ph.body, g, 2));
  s.masks = make_masks(ps.n_frames, g.height, g.width, accel, 2, 3);
  s.y = simulate_kspace(s.ph.frames, s.coils, s.masks, sigma, 4);
  return s;
}

auto ynorm2(KSpaceSet const &y) -> double
{
  double s = 0.0;
  for (auto v : y.data()) { s += std::norm(v); }
  return s;
}

class ThrowingEstimator final : public MotionEstimator
{
public:
  auto estimate_group(ImageSequence const &, std::size_t, MotionConfig const &) const
    -> std::vector<MotionField> override
  {
    throw Error("estimator failed");
  }
  auto name() const -> std::string override { return "throwing"; }
};

} // namespace

TEST(ZeroFilled, FullySampledEqualsReference)
{
  auto s = setup(1.0);
  auto x0 = zero_filled(s.y, s.coils, s.masks);
  for (std::size_t t = 0; t < x0.n_frames(); ++t) {
    EXPECT_LT(oracle::rel_diff(x0[t].data(), s.ph.frames[t].data()), 1e-8);
  }
}

TEST(ZeroFilled, ZeroDataGivesZero)
{
  auto s = setup();
  KSpaceSet zero(s.y.n_frames(), s.y.n_coils(), s.y.grid());
  auto x0 = zero_filled(zero, s.coils, s.masks);
  for (auto const &f : x0) {
    for (auto v : f.data()) { EXPECT_EQ(v, cplx(0.0, 0.0)); }
  }
}

TEST(ZeroFilled, DimensionMismatch)
{
  auto s = setup();
  auto other = make_coil_maps(2, 32, 32);
  EXPECT_THROW(zero_filled(s.y, other, s.masks), DimensionError);
}

TEST(Eq1Objective, ZeroImageCountsEveryPair)
{
  auto s = setup();
  ImageSequence zero(s.y.n_frames(), s.y.grid());
  double const v = eq1_objective(zero, MotionFieldSet(4, s.y.grid()), s.y, s.coils, s.masks);
  // each y_t2 is compared against all N sources
  EXPECT_NEAR(v, 4.0 * ynorm2(s.y), 1e-12 * v);
}

TEST(Eq1Objective, QuadraticHomogeneity)
{
  auto s = setup();
  KSpaceSet zero(s.y.n_frames(), s.y.n_coils(), s.y.grid());
  auto twice = s.ph.frames;
  for (std::size_t t = 0; t < twice.n_frames(); ++t) {
    for (auto &v : twice[t].vec()) { v *= 2.0; }
  }
  double const one = eq1_objective(s.ph.frames, s.ph.motion, zero, s.coils, s.masks);
  double const two = eq1_objective(twice, s.ph.motion, zero, s.coils, s.masks);
  EXPECT_NEAR(two, 4.0 * one, 1e-12 * two);
}

TEST(Eq1Objective, GroundTruthIsNearlyConsistent)
{
  auto s = setup();
  double const v = eq1_objective(s.ph.frames, s.ph.motion, s.y, s.coils, s.masks);
  EXPECT_LT(v, 1e-3 * ynorm2(s.y));
}

TEST(Eq1Objective, ThreadsAgree)
{
  auto s = setup();
  double const a = eq1_objective(s.ph.frames, s.ph.motion, s.y, s.coils, s.masks, 1);
  double const b = eq1_objective(s.ph.frames, s.ph.motion, s.y, s.coils, s.masks, 3);
  EXPECT_EQ(a, b);
}

TEST(Reconstruct, SingleIterationIsFirstBlock)
{
  auto s = setup();
  ReconConfig rc;
  rc.unroll_iters = 1;
  auto r = reconstruct(s.y, s.coils, s.masks, rc, MotionConfig{}, VariationalEstimator{});
  EncodingContext const ctx(s.y, s.coils, s.masks);
  for (std::size_t t = 0; t < 4; ++t) { EXPECT_TRUE(r.images[t] == solve_plain_frame(ctx, t, rc.first_block_cg_iters).value); }
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_FALSE(r.history.iterations[0].motion_energy.has_value());
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = 0; b < 4; ++b) { EXPECT_TRUE(r.motion.at(a, b).is_zero()); }
  }
}

TEST(Reconstruct, IdentityEstimatorEqualsChainedCgSense)
{
  auto s = setup();
  ReconConfig rc;
  rc.unroll_iters = 3;
  auto r = reconstruct(s.y, s.coils, s.masks, rc, MotionConfig{}, ZeroMotionEstimator{});

  // independent chain: first block, then the l2-anchored least squares over all frames' data
  std::size_t const n = 4;
  Grid const g = s.y.grid();
  std::vector<RowMask> rows;
  for (std::size_t t = 0; t < n; ++t) { rows.push_back(s.masks.row_mask(t)); }
  std::vector<ComplexImage> x;
  for (std::size_t t = 0; t < n; ++t) { x.push_back(solve_plain_frame(t, s.y, s.coils, s.masks, rc.first_block_cg_iters).value); }
  double const w = 1.0 / (2.0 * rc.lambda);
  NormalApply op = [&](std::span<cplx const> in, std::span<cplx> out) {
    ComplexImage img(g.height, g.width, CVec(in.begin(), in.end()));
    for (std::size_t i = 0; i < in.size(); ++i) { out[i] = w * in[i]; }
    for (std::size_t t2 = 0; t2 < n; ++t2) {
      auto back = decode_frame(encode_frame(img, s.coils, rows[t2]), s.coils, rows[t2]);
      for (std::size_t i = 0; i < in.size(); ++i) { out[i] += back[i]; }
    }
  };
  for (std::size_t it = 2; it <= rc.unroll_iters; ++it) {
    std::vector<ComplexImage> next;
    for (std::size_t t = 0; t < n; ++t) {
      CVec rhs(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) { rhs[i] = w * x[t][i]; }
      for (std::size_t t2 = 0; t2 < n; ++t2) {
        auto back = decode_frame(s.y.frame(t2), s.coils, rows[t2]);
        for (std::size_t i = 0; i < g.size(); ++i) { rhs[i] += back[i]; }
      }
      auto sol = cg(op, rhs, x[t].vec(), rc.cg_tol, rc.cg_max_iters);
      next.emplace_back(g.height, g.width, sol.value);
    }
    x = next;
  }
  for (std::size_t t = 0; t < n; ++t) { EXPECT_LT(oracle::rel_diff(r.images[t].data(), x[t].data()), 1e-10); }

  auto fixed = precomputed_motion_reconstruct(s.y, s.coils, s.masks, MotionFieldSet(n, g), rc);
  for (std::size_t t = 0; t < n; ++t) { EXPECT_LT(oracle::rel_diff(fixed.images[t].data(), x[t].data()), 1e-10); }
}

TEST(Reconstruct, HistoryBookkeeping)
{
  auto s = setup(2.0, 0.002);
  ReconConfig rc;
  rc.unroll_iters = 3;
  rc.keep_intermediate_motion = true;
  auto r = reconstruct(s.y, s.coils, s.masks, rc, MotionConfig{}, VariationalEstimator{});
  ASSERT_EQ(r.history.size(), 3u);
  EXPECT_EQ(r.intermediate_motion.size(), 2u);
  EXPECT_TRUE(r.intermediate_motion.back() == r.motion);
  for (std::size_t i = 0; i < 3; ++i) {
    auto const &it = r.history.iterations[i];
    EXPECT_EQ(it.iteration, i + 1);
    EXPECT_EQ(it.cg_reports.size(), 4u);
    EXPECT_TRUE(std::isfinite(it.eq1_data_fidelity));
    EXPECT_GE(it.wall_time, 0.0);
    EXPECT_FALSE(it.psnr_vs_reference.has_value());
    EXPECT_EQ(it.motion_energy.has_value(), i > 0);
  }
  EXPECT_FALSE(r.history.stopped_early);
}

TEST(Reconstruct, StopsWhenPsnrGainIsSmall)
{
  auto s = setup(2.0);
  ReconConfig rc;
  rc.unroll_iters = 5;
  rc.psnr_stop_delta = 1e6; // any gain is too small
  auto r = reconstruct(s.y, s.coils, s.masks, rc, MotionConfig{}, ZeroMotionEstimator{}, s.ph.frames);
  EXPECT_EQ(r.history.size(), 2u);
  EXPECT_TRUE(r.history.stopped_early);
  EXPECT_EQ(r.history.psnr_series().size(), 2u);

  // without a reference the rule cannot apply
  auto full = reconstruct(s.y, s.coils, s.masks, rc, MotionConfig{}, ZeroMotionEstimator{});
  EXPECT_EQ(full.history.size(), 5u);
  EXPECT_FALSE(full.history.stopped_early);
}

TEST(Reconstruct, ThreadCountReproducible)
{
  auto s = setup(4.0, 0.002);
  ReconConfig rc;
  rc.unroll_iters = 2;
  auto a = reconstruct(s.y, s.coils, s.masks, rc, MotionConfig{}, VariationalEstimator{}, s.ph.frames);
  auto b = reconstruct(s.y, s.coils, s.masks, rc, MotionConfig{}, VariationalEstimator{}, s.ph.frames);
  EXPECT_TRUE(a.images == b.images);
  rc.threads = 3;
  MotionConfig mc;
  mc.threads = 3;
  auto c = reconstruct(s.y, s.coils, s.masks, rc, mc, VariationalEstimator{}, s.ph.frames);
  EXPECT_NEAR(*c.history.iterations.back().psnr_vs_reference, *a.history.iterations.back().psnr_vs_reference, 1e-6);
}

TEST(Reconstruct, FailureKeepsHistory)
{
  auto s = setup();
  ReconConfig rc;
  try {
    reconstruct(s.y, s.coils, s.masks, rc, MotionConfig{}, ThrowingEstimator{});
    FAIL() << "expected PipelineError";
  } catch (PipelineError const &e) {
    EXPECT_EQ(e.history.size(), 1u);
    EXPECT_NE(std::string(e.what()).find("estimator failed"), std::string::npos);
  }
}

TEST(Reconstruct, ConfigValidation)
{
  auto s = setup();
  ReconConfig rc;
  rc.unroll_iters = 0;
  EXPECT_THROW(reconstruct(s.y, s.coils, s.masks, rc, MotionConfig{}, ZeroMotionEstimator{}), ConfigError);
  rc = {};
  EXPECT_THROW(reconstruct(s.y, s.coils, s.masks, rc, MotionConfig{}, ZeroMotionEstimator{}, ImageSequence(3, s.y.grid())),
               DimensionError);
}

TEST(Reconstruct, OracleMotionBeatsFirstBlock)
{
  auto s = setup(4.0);
  ReconConfig rc;
  auto r = precomputed_motion_reconstruct(s.y, s.coils, s.masks, s.ph.motion, rc, s.ph.frames);
  auto p = r.history.psnr_series();
  ASSERT_GE(p.size(), 2u);
  EXPECT_GT(p.back(), p.front());
}
