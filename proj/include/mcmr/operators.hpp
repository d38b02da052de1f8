#pragma once

#include "core.hpp"
#include "fft.hpp"
#include "random.hpp"

#include <functional>
#include <memory>

namespace mcmr {

namespace detail {

inline void check_encode_dims(Grid img, CoilMaps const &coils, RowMask const &mask)
{
  require_grid(img, coils.grid(), "encode/decode");
  if (mask.size() != img.height) { throw DimensionError("row mask length != image height"); }
}

} // namespace detail

/// Per-coil masked k-space of one frame: D F (c_q x) for each coil q.
inline auto encode_frame(ComplexImage const &x, CoilMaps const &coils, RowMask const &mask) -> CoilData
{
  detail::check_encode_dims(x.grid(), coils, mask);
  Grid const g = x.grid();
  CoilData out(coils.n_coils(), g);
  CVec tmp(g.size());
  for (std::size_t q = 0; q < coils.n_coils(); ++q) {
    auto c = coils.coil(q);
    for (std::size_t i = 0; i < g.size(); ++i) { tmp[i] = c[i] * x[i]; }
    auto k = out.coil(q);
    fft::fft2c(tmp, k, g);
    for (std::size_t r = 0; r < g.height; ++r) {
      if (mask[r] == 0) { std::fill_n(k.begin() + r * g.width, g.width, cplx{0.0, 0.0}); }
    }
  }
  return out;
}

/// Adjoint of encode_frame: sum_q conj(c_q) ifft2c(D k_q). `k` is Q x H x W.
inline auto decode_frame(std::span<cplx const> k, CoilMaps const &coils, RowMask const &mask) -> ComplexImage
{
  Grid const g = coils.grid();
  if (k.size() != coils.n_coils() * g.size()) { throw DimensionError("decode: k-space size != Q*H*W"); }
  if (mask.size() != g.height) { throw DimensionError("row mask length != image height"); }
  ComplexImage out(g);
  CVec masked(g.size());
  CVec img(g.size());
  for (std::size_t q = 0; q < coils.n_coils(); ++q) {
    auto kq = k.subspan(q * g.size(), g.size());
    for (std::size_t r = 0; r < g.height; ++r) {
      for (std::size_t col = 0; col < g.width; ++col) {
        auto i = r * g.width + col;
        masked[i] = mask[r] != 0 ? kq[i] : cplx{0.0, 0.0};
      }
    }
    fft::ifft2c(masked, img, g);
    auto c = coils.coil(q);
    for (std::size_t i = 0; i < g.size(); ++i) { out[i] += std::conj(c[i]) * img[i]; }
  }
  return out;
}

inline auto decode_frame(CoilData const &k, CoilMaps const &coils, RowMask const &mask) -> ComplexImage
{
  return decode_frame(std::span<cplx const>(k.data), coils, mask);
}

/// A^H A x for one frame, computed with column transforms only.
inline void normal_frame(std::span<cplx const> x, std::span<cplx> out, CoilMaps const &coils, RowMask const &mask,
                         CVec &scratch)
{
  Grid const g = coils.grid();
  scratch.resize(g.size());
  std::fill(out.begin(), out.end(), cplx{0.0, 0.0});
  for (std::size_t q = 0; q < coils.n_coils(); ++q) {
    auto c = coils.coil(q);
    for (std::size_t i = 0; i < g.size(); ++i) { scratch[i] = c[i] * x[i]; }
    fft::project_rows(scratch, g, mask);
    for (std::size_t i = 0; i < g.size(); ++i) { out[i] += std::conj(c[i]) * scratch[i]; }
  }
}

inline auto normal_frame(ComplexImage const &x, CoilMaps const &coils, RowMask const &mask) -> ComplexImage
{
  detail::check_encode_dims(x.grid(), coils, mask);
  ComplexImage out(x.grid());
  CVec scratch;
  normal_frame(x.data(), out.data(), coils, mask, scratch);
  return out;
}

namespace detail {

struct Bilinear
{
  std::ptrdiff_t r0, c0;
  double fr, fc;
};

inline auto bilinear_at(std::size_t r, std::size_t c, double dy, double dx) -> Bilinear
{
  double const y = static_cast<double>(r) + dy;
  double const x = static_cast<double>(c) + dx;
  double const fy = std::floor(y);
  double const fx = std::floor(x);
  return {static_cast<std::ptrdiff_t>(fy), static_cast<std::ptrdiff_t>(fx), y - fy, x - fx};
}

inline void check_warp(Grid img, MotionField const &u)
{
  require_grid(img, u.grid, "warp");
  if (!u.all_finite()) { throw Error("warp: non-finite displacement"); }
}

} // namespace detail

/// Backward bilinear warp: out(p) = x(p + u(p)), zero outside the grid.
template <typename T>
void warp_apply(std::span<T const> x, std::span<T> out, MotionField const &u)
{
  Grid const g = u.grid;
  auto const h = static_cast<std::ptrdiff_t>(g.height);
  auto const w = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) {
      std::size_t const i = r * g.width + c;
      auto const b = detail::bilinear_at(r, c, u.dy[i], u.dx[i]);
      T acc{};
      for (int a = 0; a < 2; ++a) {
        auto const rr = b.r0 + a;
        if (rr < 0 || rr >= h) { continue; }
        double const wr = a == 0 ? 1.0 - b.fr : b.fr;
        for (int k = 0; k < 2; ++k) {
          auto const cc = b.c0 + k;
          if (cc < 0 || cc >= w) { continue; }
          double const wc = k == 0 ? 1.0 - b.fc : b.fc;
          acc += (wr * wc) * x[static_cast<std::size_t>(rr * w + cc)];
        }
      }
      out[i] = acc;
    }
  }
}

/// Exact adjoint of warp_apply: splats each value onto its bilinear neighbours.
template <typename T>
void warp_adjoint(std::span<T const> r_in, std::span<T> out, MotionField const &u)
{
  Grid const g = u.grid;
  auto const h = static_cast<std::ptrdiff_t>(g.height);
  auto const w = static_cast<std::ptrdiff_t>(g.width);
  std::fill(out.begin(), out.end(), T{});
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) {
      std::size_t const i = r * g.width + c;
      auto const b = detail::bilinear_at(r, c, u.dy[i], u.dx[i]);
      for (int a = 0; a < 2; ++a) {
        auto const rr = b.r0 + a;
        if (rr < 0 || rr >= h) { continue; }
        double const wr = a == 0 ? 1.0 - b.fr : b.fr;
        for (int k = 0; k < 2; ++k) {
          auto const cc = b.c0 + k;
          if (cc < 0 || cc >= w) { continue; }
          double const wc = k == 0 ? 1.0 - b.fc : b.fc;
          out[static_cast<std::size_t>(rr * w + cc)] += (wr * wc) * r_in[i];
        }
      }
    }
  }
}

template <typename T>
auto warp_apply(Image<T> const &x, MotionField const &u) -> Image<T>
{
  detail::check_warp(x.grid(), u);
  Image<T> out(x.grid());
  if (u.is_zero()) { return x; }
  warp_apply<T>(x.data(), out.data(), u);
  return out;
}

template <typename T>
auto warp_adjoint(Image<T> const &r, MotionField const &u) -> Image<T>
{
  detail::check_warp(r.grid(), u);
  Image<T> out(r.grid());
  if (u.is_zero()) { return r; }
  warp_adjoint<T>(r.data(), out.data(), u);
  return out;
}

/// A linear map on flat complex vectors together with its adjoint.
struct LinearOperator
{
  std::vector<std::size_t> in_shape;
  std::vector<std::size_t> out_shape;
  std::function<CVec(CVec const &)> apply;
  std::function<CVec(CVec const &)> apply_adjoint;

  auto in_size() const -> std::size_t { return product(in_shape); }
  auto out_size() const -> std::size_t { return product(out_shape); }

private:
  static auto product(std::vector<std::size_t> const &s) -> std::size_t
  {
    std::size_t n = 1;
    for (auto d : s) { n *= d; }
    return n;
  }
};

inline auto fft_operator(Grid g) -> LinearOperator
{
  return {{g.height, g.width},
          {g.height, g.width},
          [g](CVec const &x) {
            CVec y(g.size());
            fft::fft2c(x, y, g);
            return y;
          },
          [g](CVec const &y) {
            CVec x(g.size());
            fft::ifft2c(y, x, g);
            return x;
          }};
}

inline auto encode_operator(CoilMaps coils, RowMask mask) -> LinearOperator
{
  Grid const g = coils.grid();
  std::size_t const q = coils.n_coils();
  auto shared = std::make_shared<std::pair<CoilMaps, RowMask>>(std::move(coils), std::move(mask));
  return {{g.height, g.width},
          {q, g.height, g.width},
          [g, shared](CVec const &x) {
            return encode_frame(ComplexImage(g.height, g.width, x), shared->first, shared->second).data;
          },
          [shared](CVec const &k) { return decode_frame(std::span<cplx const>(k), shared->first, shared->second).vec(); }};
}

inline auto warp_operator(MotionField u) -> LinearOperator
{
  Grid const g = u.grid;
  auto shared = std::make_shared<MotionField>(std::move(u));
  return {{g.height, g.width},
          {g.height, g.width},
          [g, shared](CVec const &x) {
            CVec y(g.size());
            warp_apply<cplx>(x, y, *shared);
            return y;
          },
          [g, shared](CVec const &y) {
            CVec x(g.size());
            warp_adjoint<cplx>(y, x, *shared);
            return x;
          }};
}

inline auto random_cvec(std::size_t n, Rng &rng) -> CVec
{
  CVec v(n);
  for (auto &e : v) { e = rng.complex_normal(); }
  return v;
}

/// Max over trials of |<Ax, y> - <x, A^H y>| / (|Ax| |y|) for seeded random x, y.
inline auto adjoint_dot_test(LinearOperator const &op, std::size_t trials, std::uint64_t seed) -> double
{
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    auto const x = random_cvec(op.in_size(), rng);
    auto const y = random_cvec(op.out_size(), rng);
    auto const ax = op.apply(x);
    auto const ahy = op.apply_adjoint(y);
    double const denom = norm2(ax) * norm2(y);
    if (denom == 0.0) { continue; }
    double const d = std::abs(dot(ax, y) - dot(x, ahy)) / denom;
    worst = std::max(worst, d);
  }
  return worst;
}

} // namespace mcmr
