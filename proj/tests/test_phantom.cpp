#include <mcmr/mcmr.hpp>

#include <gtest/gtest.h>

#include <set>

using namespace mcmr;

namespace {

auto small_spec() -> PhantomSpec
{
  PhantomSpec ps;
  ps.n_frames = 6;
  ps.height = 64;
  ps.width = 56;
  return ps;
}

} // namespace

TEST(Phantom, ZeroAmplitudeIsStatic)
{
  auto ps = small_spec();
  ps.motion_amplitude = 0.0;
  auto ph = make_phantom(ps);
  for (std::size_t t = 1; t < ps.n_frames; ++t) { EXPECT_TRUE(ph.frames[t] == ph.frames[0]); }
  for (std::size_t a = 0; a < ps.n_frames; ++a) {
    for (std::size_t b = 0; b < ps.n_frames; ++b) { EXPECT_TRUE(ph.motion.at(a, b).is_zero()); }
  }
}

TEST(Phantom, CycleCloses)
{
  auto ps = small_spec();
  auto ph = make_phantom(ps);
  auto wrapped = phantom_frame(ps, static_cast<double>(ps.n_frames));
  double worst = 0.0;
  for (std::size_t i = 0; i < wrapped.size(); ++i) { worst = std::max(worst, std::abs(wrapped[i] - ph.frames[0][i])); }
  EXPECT_LE(worst, 1e-12);
}

TEST(Phantom, MagnitudesInUnitRangeWithPhase)
{
  auto ph = make_phantom(small_spec());
  bool complex_phase = false;
  for (auto const &f : ph.frames) {
    for (auto v : f.data()) {
      EXPECT_GE(std::abs(v), 0.0);
      EXPECT_LE(std::abs(v), 1.0 + 1e-12);
      if (std::abs(v) > 0.1 && std::abs(std::arg(v)) > 0.05) { complex_phase = true; }
    }
  }
  EXPECT_TRUE(complex_phase);
}

TEST(Phantom, GroundTruthHasZeroDiagonalAndIsBounded)
{
  auto ps = small_spec();
  auto ph = make_phantom(ps);
  double peak = 0.0;
  for (std::size_t a = 0; a < ps.n_frames; ++a) {
    EXPECT_TRUE(ph.motion.at(a, a).is_zero());
    for (std::size_t b = 0; b < ps.n_frames; ++b) {
      for (double v : ph.motion.at(a, b).dy) { peak = std::max(peak, std::abs(v)); }
    }
  }
  EXPECT_GT(peak, 0.5);
  EXPECT_LE(peak, ps.motion_amplitude * 1.01);
}

TEST(Phantom, AdjacentPhasesWarpConsistently)
{
  PhantomSpec ps; // default 25 x 128 x 128, 3 px
  auto ph = make_phantom(ps);
  for (std::size_t t = 0; t < ps.n_frames; ++t) {
    std::size_t const s = (t + 1) % ps.n_frames;
    auto w = warp_apply(ph.frames[t], ph.motion.at(t, s));
    auto p = psnr(ImageSequence({w}), ImageSequence({ph.frames[s]}));
    EXPECT_GT(p.per_frame[0], 35.0) << "phases " << t << "->" << s;
  }
}

TEST(Phantom, Deterministic)
{
  auto a = make_phantom(small_spec());
  auto b = make_phantom(small_spec());
  EXPECT_TRUE(a.frames == b.frames);
  EXPECT_TRUE(a.motion == b.motion);
}

TEST(Phantom, RejectsOversizedAmplitude)
{
  auto ps = small_spec();
  ps.motion_amplitude = 40.0;
  EXPECT_THROW(make_phantom(ps), ConfigError);
  ps = small_spec();
  ps.n_frames = 1;
  EXPECT_THROW(make_phantom(ps), ConfigError);
}

TEST(CoilMaps, SingleCoilIsOneOnSupport)
{
  auto c = make_coil_maps(1, 16, 16);
  for (auto v : c.coil(0)) { EXPECT_NEAR(std::abs(v - cplx(1.0, 0.0)), 0.0, 1e-12); }
}

TEST(CoilMaps, NormalizedOnSupportZeroOutside)
{
  Grid const g{40, 32};
  std::vector<std::uint8_t> support(g.size(), 0);
  for (std::size_t i = 100; i < 900; ++i) { support[i] = 1; }
  auto c = make_coil_maps(8, g.height, g.width, support);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double ss = 0.0;
    for (std::size_t q = 0; q < 8; ++q) { ss += std::norm(c.coil(q)[i]); }
    EXPECT_NEAR(ss, support[i] != 0 ? 1.0 : 0.0, 1e-6);
  }
  EXPECT_THROW(make_coil_maps(0, 8, 8), ConfigError);
}

TEST(CoilMaps, EightCoilAdjointTest)
{
  auto c = make_coil_maps(8, 32, 32);
  RowMask m(32, 0);
  for (std::size_t r = 0; r < 32; r += 3) { m[r] = 1; }
  EXPECT_LT(adjoint_dot_test(encode_operator(c, m), 3, 1), 1e-9);
}

TEST(Masks, FullySampledAtR1)
{
  auto m = make_masks(5, 32, 16, 1.0, 4, 3);
  for (std::size_t t = 0; t < 5; ++t) { EXPECT_EQ(m.lines(t).size(), 32u); }
}

TEST(Masks, BudgetAndCenterBand)
{
  auto m = make_masks(25, 128, 128, 8.0, 4, 7);
  for (std::size_t t = 0; t < 25; ++t) {
    ASSERT_EQ(m.lines(t).size(), 16u);
    auto row = m.row_mask(t);
    for (std::uint32_t r = 62; r < 66; ++r) { EXPECT_EQ(row[r], 1) << "frame " << t << " row " << r; }
  }
  for (double R : {12.0, 16.0, 3.3}) {
    auto mr = make_masks(10, 128, 96, R, 4, 7);
    for (std::size_t t = 0; t < 10; ++t) { EXPECT_EQ(mr.lines(t).size(), static_cast<std::size_t>(std::llround(128 / R))); }
  }
}

TEST(Masks, TemporalCoverage)
{
  auto m = make_masks(25, 128, 128, 8.0, 4, 7);
  std::set<std::uint32_t> seen;
  for (std::size_t t = 0; t < 25; ++t) { seen.insert(m.lines(t).begin(), m.lines(t).end()); }
  EXPECT_GE(static_cast<double>(seen.size()) / 128.0, 0.9);
}

TEST(Masks, NeighbouringFramesDiffer)
{
  auto m = make_masks(25, 128, 128, 8.0, 4, 7);
  for (std::size_t t = 0; t + 1 < 25; ++t) { EXPECT_NE(m.lines(t), m.lines(t + 1)); }
}

TEST(Masks, DeterministicAndSeedSensitive)
{
  EXPECT_TRUE(make_masks(8, 64, 64, 4.0, 4, 1) == make_masks(8, 64, 64, 4.0, 4, 1));
  EXPECT_FALSE(make_masks(8, 64, 64, 4.0, 4, 1) == make_masks(8, 64, 64, 4.0, 4, 2));
}

TEST(Masks, InvalidRequests)
{
  EXPECT_THROW(make_masks(4, 64, 64, 0.5, 4, 1), ConfigError);
  EXPECT_THROW(make_masks(4, 64, 64, 16.0, 4, 1), ConfigError); // center_lines must be < H/R = 4
  EXPECT_THROW(make_masks(4, 64, 64, 200.0, 0, 1), ConfigError);
}

TEST(Simulate, NoiselessFullSamplingRoundTrip)
{
  auto ps = small_spec();
  auto ph = make_phantom(ps);
  auto coils = make_coil_maps(4, ps.height, ps.width);
  auto masks = make_masks(ps.n_frames, ps.height, ps.width, 1.0, 4, 1);
  auto y = simulate_kspace(ph.frames, coils, masks, 0.0, 1);
  auto x0 = zero_filled(y, coils, masks);
  for (std::size_t t = 0; t < ps.n_frames; ++t) {
    for (std::size_t i = 0; i < x0[t].size(); ++i) { ASSERT_NEAR(std::abs(x0[t][i] - ph.frames[t][i]), 0.0, 1e-8); }
  }
}

TEST(Simulate, UnsampledEntriesExactlyZero)
{
  auto ps = small_spec();
  auto ph = make_phantom(ps);
  auto coils = make_coil_maps(3, ps.height, ps.width);
  auto masks = make_masks(ps.n_frames, ps.height, ps.width, 4.0, 4, 1);
  auto y = simulate_kspace(ph.frames, coils, masks, 0.05, 2);
  Dataset d{y, coils, masks, std::nullopt, std::nullopt};
  EXPECT_TRUE(validate(d).empty());
}

TEST(Simulate, NoiseEnergyMatchesSigma)
{
  Grid const g{32, 32};
  ImageSequence zero(3, g);
  auto coils = make_coil_maps(2, g.height, g.width);
  auto masks = make_masks(3, g.height, g.width, 4.0, 2, 1);
  double const sigma = 0.01;
  std::size_t sampled = 0;
  for (std::size_t t = 0; t < 3; ++t) { sampled += masks.lines(t).size() * g.width * 2; }
  double energy = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto y = simulate_kspace(zero, coils, masks, sigma, seed);
    for (auto v : y.data()) { energy += std::norm(v); }
  }
  double const expected = 10.0 * 2.0 * sigma * sigma * static_cast<double>(sampled);
  EXPECT_NEAR(energy / expected, 1.0, 0.05);
}

TEST(Simulate, DimensionChecks)
{
  auto coils = make_coil_maps(2, 16, 16);
  auto masks = make_masks(3, 16, 16, 2.0, 2, 1);
  EXPECT_THROW(simulate_kspace(ImageSequence(2, Grid{16, 16}), coils, masks, 0.0, 1), DimensionError);
  EXPECT_THROW(simulate_kspace(ImageSequence(3, Grid{16, 16}), coils, masks, -1.0, 1), ConfigError);
}
