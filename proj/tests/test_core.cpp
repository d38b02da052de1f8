#include <mcmr/mcmr.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace mcmr;

namespace {

auto tmp_path(std::string const &name) -> std::string
{
  return (std::filesystem::temp_directory_path() / ("mcmr_core_" + name)).string();
}

auto small_dataset(bool with_truth = true) -> Dataset
{
  PhantomSpec ps;
  ps.n_frames = 4;
  ps.height = 32;
  ps.width = 24;
  auto ph = make_phantom(ps);
  Grid const g{ps.height, ps.width};
  auto coils = make_coil_maps(3, g.height, g.width, dilate(ph.body, g, 2));
  auto masks = make_masks(ps.n_frames, g.height, g.width, 4.0, 4, 5);
  auto y = simulate_kspace(ph.frames, coils, masks, 0.01, 9);
  Dataset d{std::move(y), std::move(coils), std::move(masks), std::nullopt, std::nullopt};
  if (with_truth) {
    d.reference = ph.frames;
    d.gt_motion = ph.motion;
  }
  return d;
}

auto slurp(std::string const &path) -> std::string
{
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(std::string const &path, std::string const &bytes)
{
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

auto data_start(std::string const &bytes) -> std::size_t
{
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) { len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i); }
  return 12 + len;
}

} // namespace

TEST(Image, IndexingIsRowMajor)
{
  ComplexImage x(3, 4);
  x(1, 2) = {5.0, -1.0};
  EXPECT_EQ(x[1 * 4 + 2], cplx(5.0, -1.0));
  EXPECT_EQ(x.grid(), (Grid{3, 4}));
  EXPECT_THROW(ComplexImage(2, 2, CVec(3)), DimensionError);
}

TEST(ImageSequence, RejectsMixedGrids)
{
  EXPECT_THROW(ImageSequence({ComplexImage(4, 4), ComplexImage(4, 5)}), DimensionError);
}

TEST(SamplingMaskSet, SortsAndDeduplicates)
{
  SamplingMaskSet m(Grid{8, 8}, {{5, 3, 5, 4}}, 2);
  EXPECT_EQ(m.lines(0), (std::vector<std::uint32_t>{3, 4, 5}));
  EXPECT_EQ(m.center_start(), 3u);
  auto row = m.row_mask(0);
  EXPECT_EQ(std::count(row.begin(), row.end(), 1), 3);
}

TEST(MotionFieldSet, GroupAssignment)
{
  MotionFieldSet u(3, Grid{8, 8});
  std::vector<MotionField> g(3, MotionField(Grid{8, 8}));
  g[2].dx[0] = 1.5;
  u.set_group(1, g);
  EXPECT_EQ(u.at(1, 2).dx[0], 1.5);
  EXPECT_TRUE(u.at(2, 1).is_zero());
  EXPECT_THROW(u.set_group(0, std::vector<MotionField>(2, MotionField(Grid{8, 8}))), DimensionError);
}

TEST(Config, Validation)
{
  ReconConfig r;
  EXPECT_NO_THROW(r.validate());
  r.unroll_iters = 0;
  EXPECT_THROW(r.validate(), ConfigError);
  r = {};
  r.lambda = 0.0;
  EXPECT_THROW(r.validate(), ConfigError);

  MotionConfig m;
  EXPECT_NO_THROW(m.validate());
  m.step_size = 2.0;
  EXPECT_THROW(m.validate(), ConfigError);
  m = {};
  m.gamma = 0.0;
  EXPECT_THROW(m.validate(), ConfigError);
}

TEST(Validate, GeneratedDatasetIsClean)
{
  auto d = small_dataset();
  auto v = validate(d);
  for (auto const &x : v) { ADD_FAILURE() << to_string(x); }
}

TEST(Validate, ReportsNonZeroAtUnsampledRow)
{
  auto d = small_dataset();
  auto mask = d.masks.row_mask(2);
  std::size_t row = 0;
  while (mask[row] != 0) { ++row; }
  Grid const g = d.coils.grid();
  d.kspace.data()[2 * d.kspace.frame_size() + 1 * g.size() + row * g.width + 3] = {1e-3, 0.0};
  auto v = validate(d);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].invariant, "zero at unsampled rows");
  EXPECT_NE(v[0].measured.find("frame 2 coil 1 row " + std::to_string(row)), std::string::npos);
}

TEST(Validate, ReportsCoilNormalization)
{
  auto d = small_dataset();
  for (auto &c : d.coils.data()) { c *= 2.0; }
  auto v = validate(d);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].invariant, "coil normalization violated");
}

TEST(Validate, ReportsMissingCenterBandAndDiagonal)
{
  auto d = small_dataset();
  auto lines = d.masks.all_lines();
  auto const c = d.masks.center_start();
  std::erase(lines[0], c);
  d.masks = SamplingMaskSet(d.masks.grid(), lines, d.masks.center_lines());
  // zero the dropped row so only the band check fires
  Grid const g = d.coils.grid();
  for (std::size_t q = 0; q < d.coils.n_coils(); ++q) {
    for (std::size_t col = 0; col < g.width; ++col) { d.kspace.data()[q * g.size() + c * g.width + col] = 0.0; }
  }
  d.gt_motion->at(1, 1).dy[0] = 0.5;
  auto v = validate(d);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].invariant, "center band sampled in every frame");
  EXPECT_EQ(v[1].invariant, "zero diagonal");
}

TEST(Container, RoundTripIsBitExact)
{
  auto const d = small_dataset();
  auto const path = tmp_path("roundtrip.mcmr");
  write_dataset(path, d);
  auto const back = read_dataset(path);
  EXPECT_TRUE(back == d);
  write_dataset(path + "2", back);
  EXPECT_EQ(slurp(path), slurp(path + "2"));
}

TEST(Container, OptionalSectionsMayBeAbsent)
{
  auto const d = small_dataset(false);
  auto const path = tmp_path("bare.mcmr");
  write_dataset(path, d);
  auto const back = read_dataset(path);
  EXPECT_FALSE(back.reference.has_value());
  EXPECT_FALSE(back.gt_motion.has_value());
  EXPECT_TRUE(back == d);
}

TEST(Container, BadMagicNamesOffsetZero)
{
  auto const path = tmp_path("magic.mcmr");
  write_dataset(path, small_dataset());
  auto bytes = slurp(path);
  bytes[0] = 'X';
  spit(path, bytes);
  try {
    read_dataset(path);
    FAIL() << "expected FormatError";
  } catch (FormatError const &e) {
    EXPECT_EQ(e.offset(), 0u);
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
}

TEST(Container, VersionMismatch)
{
  auto const path = tmp_path("version.mcmr");
  write_dataset(path, small_dataset());
  auto bytes = slurp(path);
  bytes[7] = '9';
  spit(path, bytes);
  try {
    read_dataset(path);
    FAIL() << "expected FormatError";
  } catch (FormatError const &e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Container, TruncationNamesSection)
{
  auto const path = tmp_path("trunc.mcmr");
  write_dataset(path, small_dataset());
  auto bytes = slurp(path);
  bytes.resize(bytes.size() - 100); // cuts into gt_motion, the last section
  spit(path, bytes);
  try {
    read_dataset(path);
    FAIL() << "expected FormatError";
  } catch (FormatError const &e) {
    EXPECT_NE(std::string(e.what()).find("gt_motion"), std::string::npos) << e.what();
    EXPECT_EQ(e.offset(), bytes.size());
  }
}

TEST(Container, ScaledCoilsFailValidationOnLoad)
{
  auto d = small_dataset();
  for (auto &c : d.coils.data()) { c *= 2.0; }
  auto const path = tmp_path("coils.mcmr");
  write_dataset(path, d);
  try {
    read_dataset(path);
    FAIL() << "expected ValidationError";
  } catch (ValidationError const &e) {
    EXPECT_EQ(e.invariant(), "coil normalization violated");
  }
  EXPECT_NO_THROW(read_dataset_unchecked(path));
}

TEST(Container, CorruptHeaderJson)
{
  auto const path = tmp_path("json.mcmr");
  write_dataset(path, small_dataset());
  auto bytes = slurp(path);
  bytes[12] = '[';
  bytes[13] = ']';
  spit(path, bytes);
  EXPECT_THROW(read_dataset(path), FormatError);
  EXPECT_GT(data_start(bytes), 12u);
}

TEST(Container, InconsistentDimensionsRejectedOnWrite)
{
  auto d = small_dataset();
  d.reference = ImageSequence(3, d.coils.grid());
  EXPECT_THROW(write_dataset(tmp_path("dims.mcmr"), d), DimensionError);
}

TEST(Container, ReconstructionFileRoundTrip)
{
  auto const d = small_dataset();
  ReconstructionFile r{*d.reference, d.gt_motion, {{"mode", "oracle"}}};
  auto const path = tmp_path("recon.mcmr");
  write_reconstruction(path, r);
  auto const back = read_reconstruction(path);
  EXPECT_TRUE(back.images == r.images);
  ASSERT_TRUE(back.motion.has_value());
  EXPECT_TRUE(*back.motion == *r.motion);
  EXPECT_EQ(back.meta.at("mode"), "oracle");

  auto const dpath = tmp_path("notrecon.mcmr");
  write_dataset(dpath, d);
  EXPECT_THROW(read_reconstruction(dpath), FormatError);
}

TEST(Container, MissingFileIsAnError)
{
  EXPECT_THROW(read_dataset(tmp_path("does_not_exist.mcmr")), Error);
}
