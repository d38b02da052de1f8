#pragma once

#include "core.hpp"

#include <limits>
#include <sstream>

namespace mcmr {

struct Violation
{
  std::string type_name;
  std::string field;
  std::string invariant;
  std::string measured;
};

inline auto to_string(Violation const &v) -> std::string
{
  return v.type_name + "." + v.field + ": " + v.invariant + " (measured " + v.measured + ")";
}

namespace detail {

template <typename T>
auto fmt(T const &v) -> std::string
{
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline auto finite(cplx v) -> bool { return std::isfinite(v.real()) && std::isfinite(v.imag()); }

} // namespace detail

inline constexpr double kCoilNormTolerance = 1e-6;

/// Checks every type invariant of a dataset; an empty result means valid.
inline auto validate(Dataset const &d) -> std::vector<Violation>
{
  std::vector<Violation> out;
  auto add = [&](std::string t, std::string f, std::string inv, std::string m) {
    out.push_back({std::move(t), std::move(f), std::move(inv), std::move(m)});
  };

  Grid const g = d.coils.grid();
  if (g.height < 8 || g.width < 8) { add("CoilMaps", "grid", "height and width >= 8", to_string(g)); }

  // KSpaceSet
  auto const &k = d.kspace;
  if (k.grid() != g) { add("KSpaceSet", "grid", "matches coil maps", to_string(k.grid())); }
  if (k.n_coils() != d.coils.n_coils()) { add("KSpaceSet", "n_coils", "matches coil maps", detail::fmt(k.n_coils())); }
  if (k.n_frames() != d.masks.n_frames()) { add("KSpaceSet", "n_frames", "matches masks", detail::fmt(k.n_frames())); }
  if (k.n_frames() < 2) { add("KSpaceSet", "n_frames", "N >= 2", detail::fmt(k.n_frames())); }
  bool const kspace_shape_ok = k.grid() == g && k.n_frames() == d.masks.n_frames() && d.masks.grid() == g;
  for (std::size_t i = 0; i < k.data().size(); ++i) {
    if (!detail::finite(k.data()[i])) {
      add("KSpaceSet", "data", "all components finite", "index " + detail::fmt(i));
      break;
    }
  }
  if (kspace_shape_ok) {
    for (std::size_t t = 0; t < k.n_frames(); ++t) {
      auto const mask = d.masks.row_mask(t);
      bool reported = false;
      for (std::size_t q = 0; q < k.n_coils() && !reported; ++q) {
        auto coil = k.coil(t, q);
        for (std::size_t r = 0; r < g.height && !reported; ++r) {
          if (mask[r] != 0) { continue; }
          for (std::size_t c = 0; c < g.width; ++c) {
            auto v = coil[r * g.width + c];
            if (v != cplx{0.0, 0.0}) {
              add("KSpaceSet", "data", "zero at unsampled rows",
                  "frame " + detail::fmt(t) + " coil " + detail::fmt(q) + " row " + detail::fmt(r) + " |v|=" +
                    detail::fmt(std::abs(v)));
              reported = true;
              break;
            }
          }
        }
      }
    }
  }

  // CoilMaps
  auto const &cm = d.coils;
  if (cm.n_coils() < 1) { add("CoilMaps", "n_coils", "Q >= 1", detail::fmt(cm.n_coils())); }
  double worst_norm = 0.0;
  std::size_t worst_pixel = 0;
  bool outside_nonzero = false;
  std::size_t outside_pixel = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double ss = 0.0;
    for (std::size_t q = 0; q < cm.n_coils(); ++q) {
      auto v = cm.coil(q)[i];
      if (!detail::finite(v)) { ss = std::numeric_limits<double>::infinity(); }
      ss += std::norm(v);
    }
    if (cm.support()[i] != 0) {
      double const dev = std::abs(ss - 1.0);
      if (!(dev <= worst_norm)) {
        worst_norm = dev;
        worst_pixel = i;
      }
    } else if (ss != 0.0 && !outside_nonzero) {
      outside_nonzero = true;
      outside_pixel = i;
    }
  }
  if (!(worst_norm <= kCoilNormTolerance)) {
    add("CoilMaps", "data", "coil normalization violated",
        "|sum_q |c_q|^2 - 1| = " + detail::fmt(worst_norm) + " at pixel " + detail::fmt(worst_pixel));
  }
  if (outside_nonzero) {
    add("CoilMaps", "data", "zero outside support", "pixel " + detail::fmt(outside_pixel));
  }

  // SamplingMaskSet
  auto const &m = d.masks;
  if (m.grid() != g) { add("SamplingMaskSet", "grid", "matches coil maps", to_string(m.grid())); }
  for (std::size_t t = 0; t < m.n_frames(); ++t) {
    auto const &lines = m.lines(t);
    if (lines.empty()) { add("SamplingMaskSet", "lines", "at least one sampled line per frame", "frame " + detail::fmt(t)); }
    for (auto r : lines) {
      if (r >= m.grid().height) {
        add("SamplingMaskSet", "lines", "indices in [0, H)", "frame " + detail::fmt(t) + " row " + detail::fmt(r));
      }
    }
    if (m.center_lines() > 0) {
      auto const mask = m.row_mask(t);
      for (std::uint32_t r = m.center_start(); r < m.center_start() + m.center_lines(); ++r) {
        if (r >= mask.size() || mask[r] == 0) {
          add("SamplingMaskSet", "lines", "center band sampled in every frame",
              "frame " + detail::fmt(t) + " row " + detail::fmt(r));
          break;
        }
      }
    }
  }

  // ImageSequence
  if (d.reference) {
    auto const &x = *d.reference;
    if (x.n_frames() != k.n_frames()) { add("ImageSequence", "n_frames", "matches k-space", detail::fmt(x.n_frames())); }
    if (x.n_frames() < 2) { add("ImageSequence", "n_frames", "N >= 2", detail::fmt(x.n_frames())); }
    if (x.grid() != g) { add("ImageSequence", "grid", "matches coil maps", to_string(x.grid())); }
    for (std::size_t t = 0; t < x.n_frames(); ++t) {
      auto data = x[t].data();
      if (!std::all_of(data.begin(), data.end(), detail::finite)) {
        add("ComplexImage", "data", "all components finite", "frame " + detail::fmt(t));
      }
    }
  }

  // MotionFieldSet
  if (d.gt_motion) {
    auto const &u = *d.gt_motion;
    if (u.n_frames() != k.n_frames()) { add("MotionFieldSet", "n_frames", "matches k-space", detail::fmt(u.n_frames())); }
    if (u.grid() != g) { add("MotionFieldSet", "grid", "matches coil maps", to_string(u.grid())); }
    double const bound = static_cast<double>(std::max(g.height, g.width));
    for (std::size_t t1 = 0; t1 < u.n_frames(); ++t1) {
      for (std::size_t t2 = 0; t2 < u.n_frames(); ++t2) {
        auto const &f = u.at(t1, t2);
        std::string const where = "(" + detail::fmt(t1) + "," + detail::fmt(t2) + ")";
        if (!f.all_finite()) {
          add("MotionField", "dy/dx", "all finite", where);
          continue;
        }
        double peak = 0.0;
        for (std::size_t i = 0; i < f.dy.size(); ++i) { peak = std::max({peak, std::abs(f.dy[i]), std::abs(f.dx[i])}); }
        if (peak > bound) { add("MotionField", "dy/dx", "|d| <= max(H, W)", where + " " + detail::fmt(peak)); }
        if (t1 == t2 && !f.is_zero()) { add("MotionFieldSet", "fields", "zero diagonal", where); }
      }
    }
  }
  return out;
}

} // namespace mcmr
