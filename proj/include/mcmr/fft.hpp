#pragma once

#include "core.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace mcmr {
namespace fft {

enum class Kind
{
  Forward2D,
  Backward2D,
  ForwardColumns,
  BackwardColumns,
};

namespace detail {

// FFTW's planner is not re-entrant; execution of an existing plan on new
// arrays is. Plans are created once per (kind, grid) and never destroyed.
class PlanCache
{
public:
  static auto instance() -> PlanCache &
  {
    static PlanCache cache;
    return cache;
  }

  auto get(Kind kind, Grid g) -> fftw_plan
  {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(static_cast<int>(kind), g.height, g.width);
    if (auto it = plans_.find(key); it != plans_.end()) { return it->second; }

    auto *buf = fftw_alloc_complex(g.size());
    unsigned const flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    int const h = static_cast<int>(g.height);
    int const w = static_cast<int>(g.width);
    fftw_plan plan = nullptr;
    switch (kind) {
    case Kind::Forward2D: plan = fftw_plan_dft_2d(h, w, buf, buf, FFTW_FORWARD, flags); break;
    case Kind::Backward2D: plan = fftw_plan_dft_2d(h, w, buf, buf, FFTW_BACKWARD, flags); break;
    case Kind::ForwardColumns:
    case Kind::BackwardColumns: {
      // w transforms of length h, strided down the columns of a row-major image
      int const sign = kind == Kind::ForwardColumns ? FFTW_FORWARD : FFTW_BACKWARD;
      plan = fftw_plan_many_dft(1, &h, w, buf, nullptr, w, 1, buf, nullptr, w, 1, sign, flags);
      break;
    }
    }
    fftw_free(buf);
    if (plan == nullptr) { throw Error("FFTW failed to create a plan for grid " + to_string(g)); }
    plans_.emplace(key, plan);
    return plan;
  }

private:
  std::mutex mutex_;
  std::map<std::tuple<int, std::size_t, std::size_t>, fftw_plan> plans_;
};

inline void execute(Kind kind, Grid g, cplx *data)
{
  auto plan = PlanCache::instance().get(kind, g);
  auto *p = reinterpret_cast<fftw_complex *>(data);
  fftw_execute_dft(plan, p, p);
}

// Cyclic shift by `shift` rows and columns, out-of-place.
inline void roll(std::span<cplx const> in, std::span<cplx> out, Grid g, std::size_t shift_r, std::size_t shift_c)
{
  for (std::size_t r = 0; r < g.height; ++r) {
    std::size_t const rr = (r + shift_r) % g.height;
    for (std::size_t c = 0; c < g.width; ++c) {
      out[rr * g.width + (c + shift_c) % g.width] = in[r * g.width + c];
    }
  }
}

inline void centered(std::span<cplx const> in, std::span<cplx> out, Grid g, Kind kind)
{
  if (in.size() != g.size() || out.size() != g.size()) { throw DimensionError("fft buffer size mismatch"); }
  // ifftshift moves the centre to index 0, fftshift moves it back
  CVec tmp(g.size());
  roll(in, tmp, g, g.height - g.height / 2, g.width - g.width / 2);
  execute(kind, g, tmp.data());
  roll(tmp, out, g, g.height / 2, g.width / 2);
  double const scale = 1.0 / std::sqrt(static_cast<double>(g.size()));
  for (auto &v : out) { v *= scale; }
}

} // namespace detail

/// Centered orthonormal forward transform, DC at (H/2, W/2).
inline void fft2c(std::span<cplx const> in, std::span<cplx> out, Grid g)
{
  detail::centered(in, out, g, Kind::Forward2D);
}

inline void ifft2c(std::span<cplx const> in, std::span<cplx> out, Grid g)
{
  detail::centered(in, out, g, Kind::Backward2D);
}

/// Applies F^H diag(m) F along the row (ky) axis in place, where F is the
/// centered orthonormal 1D transform and m is a row mask in centered indexing.
/// The readout transform cancels out of F2^H D F2 when D only selects rows, and
/// the centering permutations commute with the resulting circulant, so only an
/// uncentered column transform and a rotated mask are needed.
inline void project_rows(std::span<cplx> img, Grid g, RowMask const &mask)
{
  detail::execute(Kind::ForwardColumns, g, img.data());
  double const scale = 1.0 / static_cast<double>(g.height);
  for (std::size_t r = 0; r < g.height; ++r) {
    bool const keep = mask[(r + g.height / 2) % g.height] != 0;
    auto row = img.subspan(r * g.width, g.width);
    if (keep) {
      for (auto &v : row) { v *= scale; }
    } else {
      std::fill(row.begin(), row.end(), cplx{0.0, 0.0});
    }
  }
  detail::execute(Kind::BackwardColumns, g, img.data());
}

} // namespace fft

inline auto fft2c(ComplexImage const &img) -> ComplexImage
{
  ComplexImage out(img.grid());
  fft::fft2c(img.data(), out.data(), img.grid());
  return out;
}

inline auto ifft2c(ComplexImage const &ksp) -> ComplexImage
{
  ComplexImage out(ksp.grid());
  fft::ifft2c(ksp.data(), out.data(), ksp.grid());
  return out;
}

} // namespace mcmr
