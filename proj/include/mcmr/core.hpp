#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mcmr {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;
using RowMask = std::vector<std::uint8_t>;

class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error
{
public:
  using Error::Error;
};

class ConfigError : public Error
{
public:
  using Error::Error;
};

// Raised by the dataset container when bytes on disk do not parse.
class FormatError : public Error
{
public:
  FormatError(std::string const &msg, std::uint64_t offset)
    : Error(msg + " (at byte offset " + std::to_string(offset) + ")")
    , offset_(offset)
  {
  }
  auto offset() const -> std::uint64_t { return offset_; }

private:
  std::uint64_t offset_;
};

// A type invariant failed on data that otherwise parsed.
class ValidationError : public Error
{
public:
  ValidationError(std::string invariant, std::string const &detail)
    : Error(invariant + ": " + detail)
    , invariant_(std::move(invariant))
  {
  }
  auto invariant() const -> std::string const & { return invariant_; }

private:
  std::string invariant_;
};

struct Grid
{
  std::size_t height = 0;
  std::size_t width = 0;

  auto size() const -> std::size_t { return height * width; }
  friend auto operator==(Grid const &, Grid const &) -> bool = default;
};

inline auto to_string(Grid g) -> std::string
{
  return std::to_string(g.height) + "x" + std::to_string(g.width);
}

inline void require_grid(Grid a, Grid b, char const *what)
{
  if (a != b) {
    throw DimensionError(std::string(what) + ": grid " + to_string(a) + " does not match " + to_string(b));
  }
}

/// Dense row-major 2D image with value type T (complex frames, real magnitudes).
template <typename T>
class Image
{
public:
  using value_type = T;

  Image() = default;
  Image(std::size_t height, std::size_t width)
    : grid_{height, width}
    , data_(height * width, T{})
  {
  }
  explicit Image(Grid g)
    : Image(g.height, g.width)
  {
  }
  Image(std::size_t height, std::size_t width, std::vector<T> data)
    : grid_{height, width}
    , data_(std::move(data))
  {
    if (data_.size() != grid_.size()) {
      throw DimensionError("image data length " + std::to_string(data_.size()) + " != " +
                           to_string(grid_));
    }
  }

  auto height() const -> std::size_t { return grid_.height; }
  auto width() const -> std::size_t { return grid_.width; }
  auto grid() const -> Grid { return grid_; }
  auto size() const -> std::size_t { return data_.size(); }

  auto operator()(std::size_t row, std::size_t col) -> T & { return data_[row * grid_.width + col]; }
  auto operator()(std::size_t row, std::size_t col) const -> T const &
  {
    return data_[row * grid_.width + col];
  }
  auto operator[](std::size_t i) -> T & { return data_[i]; }
  auto operator[](std::size_t i) const -> T const & { return data_[i]; }

  auto data() -> std::span<T> { return data_; }
  auto data() const -> std::span<T const> { return data_; }
  auto vec() const -> std::vector<T> const & { return data_; }
  auto vec() -> std::vector<T> & { return data_; }

  friend auto operator==(Image const &, Image const &) -> bool = default;

private:
  Grid grid_;
  std::vector<T> data_;
};

using ComplexImage = Image<cplx>;
using RealImage = Image<double>;

/// N frames sharing one grid.
class ImageSequence
{
public:
  ImageSequence() = default;
  explicit ImageSequence(std::vector<ComplexImage> frames)
    : frames_(std::move(frames))
  {
    for (auto const &f : frames_) {
      require_grid(f.grid(), frames_.front().grid(), "ImageSequence frame");
    }
  }
  ImageSequence(std::size_t n, Grid g)
    : frames_(n, ComplexImage(g))
  {
  }

  auto n_frames() const -> std::size_t { return frames_.size(); }
  auto grid() const -> Grid { return frames_.empty() ? Grid{} : frames_.front().grid(); }
  auto operator[](std::size_t t) -> ComplexImage & { return frames_[t]; }
  auto operator[](std::size_t t) const -> ComplexImage const & { return frames_[t]; }
  auto frames() const -> std::vector<ComplexImage> const & { return frames_; }
  auto begin() const { return frames_.begin(); }
  auto end() const { return frames_.end(); }

  friend auto operator==(ImageSequence const &, ImageSequence const &) -> bool = default;

private:
  std::vector<ComplexImage> frames_;
};

/// Q coil images (or coil k-spaces) of one frame, layout Q x H x W.
struct CoilData
{
  std::size_t coils = 0;
  Grid grid;
  CVec data;

  CoilData() = default;
  CoilData(std::size_t q, Grid g)
    : coils(q)
    , grid(g)
    , data(q * g.size())
  {
  }
  auto coil(std::size_t q) -> std::span<cplx> { return {data.data() + q * grid.size(), grid.size()}; }
  auto coil(std::size_t q) const -> std::span<cplx const>
  {
    return {data.data() + q * grid.size(), grid.size()};
  }
};

/// Undersampled multi-coil Cartesian k-space, layout N x Q x H x W.
class KSpaceSet
{
public:
  KSpaceSet() = default;
  KSpaceSet(std::size_t n_frames, std::size_t n_coils, Grid g)
    : n_frames_(n_frames)
    , n_coils_(n_coils)
    , grid_(g)
    , data_(n_frames * n_coils * g.size())
  {
  }
  KSpaceSet(std::size_t n_frames, std::size_t n_coils, Grid g, CVec data)
    : n_frames_(n_frames)
    , n_coils_(n_coils)
    , grid_(g)
    , data_(std::move(data))
  {
    if (data_.size() != n_frames_ * n_coils_ * grid_.size()) {
      throw DimensionError("kspace data length mismatch");
    }
  }

  auto n_frames() const -> std::size_t { return n_frames_; }
  auto n_coils() const -> std::size_t { return n_coils_; }
  auto grid() const -> Grid { return grid_; }
  auto frame_size() const -> std::size_t { return n_coils_ * grid_.size(); }

  auto frame(std::size_t t) -> std::span<cplx> { return {data_.data() + t * frame_size(), frame_size()}; }
  auto frame(std::size_t t) const -> std::span<cplx const>
  {
    return {data_.data() + t * frame_size(), frame_size()};
  }
  auto coil(std::size_t t, std::size_t q) const -> std::span<cplx const>
  {
    return frame(t).subspan(q * grid_.size(), grid_.size());
  }
  auto data() const -> CVec const & { return data_; }
  auto data() -> CVec & { return data_; }

  friend auto operator==(KSpaceSet const &, KSpaceSet const &) -> bool = default;

private:
  std::size_t n_frames_ = 0;
  std::size_t n_coils_ = 0;
  Grid grid_;
  CVec data_;
};

/// Coil sensitivities (Q x H x W) with the object support they are normalized on.
class CoilMaps
{
public:
  CoilMaps() = default;
  CoilMaps(std::size_t n_coils, Grid g, CVec data, std::vector<std::uint8_t> support)
    : n_coils_(n_coils)
    , grid_(g)
    , data_(std::move(data))
    , support_(std::move(support))
  {
    if (data_.size() != n_coils_ * grid_.size() || support_.size() != grid_.size()) {
      throw DimensionError("coil map data length mismatch");
    }
  }

  auto n_coils() const -> std::size_t { return n_coils_; }
  auto grid() const -> Grid { return grid_; }
  auto coil(std::size_t q) const -> std::span<cplx const>
  {
    return {data_.data() + q * grid_.size(), grid_.size()};
  }
  auto data() const -> CVec const & { return data_; }
  auto data() -> CVec & { return data_; }
  auto support() const -> std::vector<std::uint8_t> const & { return support_; }

  friend auto operator==(CoilMaps const &, CoilMaps const &) -> bool = default;

private:
  std::size_t n_coils_ = 0;
  Grid grid_;
  CVec data_;
  std::vector<std::uint8_t> support_;
};

/// Per-frame sets of sampled phase-encode (ky) rows; readout rows are fully sampled.
class SamplingMaskSet
{
public:
  SamplingMaskSet() = default;
  SamplingMaskSet(Grid g, std::vector<std::vector<std::uint32_t>> lines, std::uint32_t center_lines)
    : grid_(g)
    , lines_(std::move(lines))
    , center_lines_(center_lines)
  {
    for (auto &l : lines_) {
      std::sort(l.begin(), l.end());
      l.erase(std::unique(l.begin(), l.end()), l.end());
    }
  }

  auto n_frames() const -> std::size_t { return lines_.size(); }
  auto grid() const -> Grid { return grid_; }
  auto center_lines() const -> std::uint32_t { return center_lines_; }
  auto lines(std::size_t t) const -> std::vector<std::uint32_t> const & { return lines_[t]; }
  auto all_lines() const -> std::vector<std::vector<std::uint32_t>> const & { return lines_; }

  auto row_mask(std::size_t t) const -> RowMask
  {
    RowMask m(grid_.height, 0);
    for (auto r : lines_[t]) {
      if (r < grid_.height) { m[r] = 1; }
    }
    return m;
  }

  /// First row of the always-sampled central band.
  auto center_start() const -> std::uint32_t
  {
    return static_cast<std::uint32_t>(grid_.height / 2 - center_lines_ / 2);
  }

  friend auto operator==(SamplingMaskSet const &, SamplingMaskSet const &) -> bool = default;

private:
  Grid grid_;
  std::vector<std::vector<std::uint32_t>> lines_;
  std::uint32_t center_lines_ = 0;
};

/// Dense displacement field in pixels; dy along rows, dx along columns.
struct MotionField
{
  Grid grid;
  std::vector<double> dy;
  std::vector<double> dx;

  MotionField() = default;
  explicit MotionField(Grid g)
    : grid(g)
    , dy(g.size(), 0.0)
    , dx(g.size(), 0.0)
  {
  }
  MotionField(Grid g, std::vector<double> dy_, std::vector<double> dx_)
    : grid(g)
    , dy(std::move(dy_))
    , dx(std::move(dx_))
  {
    if (dy.size() != g.size() || dx.size() != g.size()) {
      throw DimensionError("motion field length mismatch");
    }
  }

  auto is_zero() const -> bool
  {
    return std::all_of(dy.begin(), dy.end(), [](double v) { return v == 0.0; }) &&
           std::all_of(dx.begin(), dx.end(), [](double v) { return v == 0.0; });
  }
  auto all_finite() const -> bool
  {
    auto fin = [](double v) { return std::isfinite(v); };
    return std::all_of(dy.begin(), dy.end(), fin) && std::all_of(dx.begin(), dx.end(), fin);
  }

  friend auto operator==(MotionField const &, MotionField const &) -> bool = default;
};

/// N x N displacement fields; entry (t1, t2) warps frame t1 onto frame t2.
class MotionFieldSet
{
public:
  MotionFieldSet() = default;
  MotionFieldSet(std::size_t n, Grid g)
    : n_(n)
    , grid_(g)
    , fields_(n * n, MotionField(g))
  {
  }

  auto n_frames() const -> std::size_t { return n_; }
  auto grid() const -> Grid { return grid_; }
  auto at(std::size_t t1, std::size_t t2) -> MotionField & { return fields_[t1 * n_ + t2]; }
  auto at(std::size_t t1, std::size_t t2) const -> MotionField const & { return fields_[t1 * n_ + t2]; }

  void set_group(std::size_t t1, std::vector<MotionField> group)
  {
    if (group.size() != n_) { throw DimensionError("motion group size != N"); }
    for (std::size_t t2 = 0; t2 < n_; ++t2) {
      require_grid(group[t2].grid, grid_, "motion group field");
      at(t1, t2) = std::move(group[t2]);
    }
  }

  friend auto operator==(MotionFieldSet const &, MotionFieldSet const &) -> bool = default;

private:
  std::size_t n_ = 0;
  Grid grid_;
  std::vector<MotionField> fields_;
};

struct ReconConfig
{
  double lambda = 2.0;
  std::size_t unroll_iters = 3;
  std::size_t cg_max_iters = 20;
  double cg_tol = 1e-6;
  double psnr_stop_delta = 0.1;
  std::size_t first_block_cg_iters = 10;
  std::size_t threads = 1;
  bool keep_intermediate_motion = false;
  // When false a reference only feeds the PSNR diagnostics.
  bool early_stop = true;

  void validate() const
  {
    if (!(lambda > 0.0)) { throw ConfigError("lambda must be > 0"); }
    if (unroll_iters < 1) { throw ConfigError("unroll_iters must be >= 1"); }
    if (!(cg_tol > 0.0)) { throw ConfigError("cg_tol must be > 0"); }
    if (!(psnr_stop_delta >= 0.0)) { throw ConfigError("psnr_stop_delta must be >= 0"); }
    if (threads < 1) { throw ConfigError("threads must be >= 1"); }
  }
};

struct MotionConfig
{
  double alpha = 10.0;
  double beta = 10.0;
  double gamma = 0.6;
  double charbonnier_eps = 1e-12;
  double charbonnier_exp = 0.45;
  // Magnitudes are rescaled so the brightest pixel equals this value before the
  // data term is evaluated; 0 disables rescaling.
  double intensity_scale = 255.0;
  std::size_t pyramid_levels = 4;
  std::size_t warps_per_level = 3;
  std::size_t inner_iters = 30;
  double step_size = 1.0;
  std::size_t threads = 1;

  void validate() const
  {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) { throw ConfigError("alpha and beta must be >= 0"); }
    if (!(gamma > 0.0 && gamma <= 1.0)) { throw ConfigError("gamma must lie in (0, 1]"); }
    if (pyramid_levels < 1) { throw ConfigError("pyramid_levels must be >= 1"); }
    if (!(step_size > 0.0 && step_size < 2.0)) { throw ConfigError("step_size must lie in (0, 2)"); }
    if (!(intensity_scale >= 0.0)) { throw ConfigError("intensity_scale must be >= 0"); }
    if (threads < 1) { throw ConfigError("threads must be >= 1"); }
  }
};

/// Everything a reconstruction run consumes, plus optional ground truth.
struct Dataset
{
  KSpaceSet kspace;
  CoilMaps coils;
  SamplingMaskSet masks;
  std::optional<ImageSequence> reference;
  std::optional<MotionFieldSet> gt_motion;

  friend auto operator==(Dataset const &, Dataset const &) -> bool = default;
};

inline auto dot(std::span<cplx const> a, std::span<cplx const> b) -> cplx
{
  cplx s{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i) { s += std::conj(a[i]) * b[i]; }
  return s;
}

inline auto norm2(std::span<cplx const> a) -> double
{
  double s = 0.0;
  for (auto v : a) { s += std::norm(v); }
  return std::sqrt(s);
}

inline auto magnitude(ComplexImage const &x) -> RealImage
{
  RealImage m(x.grid());
  for (std::size_t i = 0; i < x.size(); ++i) { m[i] = std::abs(x[i]); }
  return m;
}

} // namespace mcmr
