#pragma once

#include <mcmr/mcmr.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

namespace report {

using Json = nlohmann::ordered_json;

inline void write_json(std::string const &path, Json const &j)
{
  std::ofstream f(path, std::ios::trunc);
  if (!f) { throw mcmr::Error("cannot open '" + path + "' for writing"); }
  f << j.dump(2) << "\n";
}

inline auto read_json(std::string const &path) -> Json
{
  std::ifstream f(path);
  if (!f) { throw mcmr::FormatError("cannot open '" + path + "'", 0); }
  try {
    return Json::parse(f);
  } catch (Json::exception const &e) {
    throw mcmr::FormatError("'" + path + "' is not valid JSON: " + e.what(), 0);
  }
}

// 64-bit FNV-1a, as hex.
inline auto checksum(std::string_view bytes) -> std::string
{
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

inline auto file_checksum(std::string const &path) -> std::string
{
  std::ifstream f(path, std::ios::binary);
  if (!f) { throw mcmr::FormatError("cannot open '" + path + "'", 0); }
  std::ostringstream s;
  s << f.rdbuf();
  return checksum(s.str());
}

// A dB value, or "exact" for a zero-error comparison.
inline auto db(double v) -> Json
{
  if (mcmr::PsnrReport::is_exact(v)) { return "exact"; }
  return v;
}

inline auto fmt(double v, int digits = 15) -> std::string
{
  if (mcmr::PsnrReport::is_exact(v)) { return "exact"; }
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

struct Stats
{
  double mean = 0.0;
  double std = 0.0; // population, over the finite values
};

inline auto stats(std::vector<double> const &v) -> Stats
{
  Stats s;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      s.mean += x;
      ++n;
    }
  }
  if (n == 0) { return {std::numeric_limits<double>::infinity(), 0.0}; }
  s.mean /= static_cast<double>(n);
  for (double x : v) {
    if (std::isfinite(x)) { s.std += (x - s.mean) * (x - s.mean); }
  }
  s.std = std::sqrt(s.std / static_cast<double>(n));
  return s;
}

inline auto history_json(mcmr::UnrollHistory const &h) -> Json
{
  Json its = Json::array();
  for (auto const &it : h.iterations) {
    Json e;
    e["iteration"] = it.iteration;
    e["eq1_data_fidelity"] = it.eq1_data_fidelity;
    if (it.motion_energy) {
      e["motion_energy"] = {{"data", it.motion_energy->data_term},
                            {"spatial", it.motion_energy->spatial_term},
                            {"temporal", it.motion_energy->temporal_term},
                            {"total", it.motion_energy->total}};
    } else {
      e["motion_energy"] = nullptr;
    }
    e["psnr_vs_reference"] = it.psnr_vs_reference ? db(*it.psnr_vs_reference) : Json(nullptr);
    Json cg = Json::array();
    for (auto const &r : it.cg_reports) {
      cg.push_back({{"iterations", r.iterations_run},
                    {"final_relative_residual",
                     r.relative_residual_history.empty() ? 0.0 : r.relative_residual_history.back()},
                    {"converged", r.converged},
                    {"breakdown", r.breakdown}});
    }
    e["cg"] = std::move(cg);
    e["wall_time"] = it.wall_time;
    its.push_back(std::move(e));
  }
  return {{"stopped_early", h.stopped_early}, {"iterations", std::move(its)}};
}

// Pixels where any reference frame is non-zero.
inline auto object_roi(mcmr::ImageSequence const &ref) -> std::vector<std::uint8_t>
{
  std::vector<std::uint8_t> roi(ref.grid().size(), 0);
  for (auto const &f : ref) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f[i] != mcmr::cplx(0.0, 0.0)) { roi[i] = 1; }
    }
  }
  return roi;
}

struct Quality
{
  mcmr::PsnrReport psnr;
  std::vector<double> ssim;
  std::optional<double> epe;
};

inline auto quality(mcmr::ImageSequence const &x, mcmr::ImageSequence const &ref,
                    mcmr::MotionFieldSet const *motion = nullptr, mcmr::MotionFieldSet const *gt = nullptr) -> Quality
{
  Quality q;
  q.psnr = mcmr::psnr(x, ref);
  for (std::size_t t = 0; t < x.n_frames(); ++t) { q.ssim.push_back(mcmr::ssim(x[t], ref[t])); }
  if (motion != nullptr && gt != nullptr) { q.epe = mcmr::end_point_error(*motion, *gt, object_roi(ref)).mean; }
  return q;
}

inline auto quality_json(Quality const &q) -> Json
{
  Json pf = Json::array(), sf = Json::array();
  for (double v : q.psnr.per_frame) { pf.push_back(db(v)); }
  for (double v : q.ssim) { sf.push_back(v); }
  auto const ps = stats(q.psnr.per_frame);
  auto const ss = stats(q.ssim);
  Json j;
  j["psnr"] = {{"per_frame", pf}, {"mean", db(ps.mean)}, {"std", ps.std}};
  j["ssim"] = {{"per_frame", sf}, {"mean", ss.mean}, {"std", ss.std}};
  j["epe"] = q.epe ? Json(*q.epe) : Json(nullptr);
  return j;
}

// Largest absolute difference between numeric leaves of two documents;
// +inf when their shapes or non-numeric leaves disagree.
inline auto max_numeric_diff(Json const &a, Json const &b) -> double
{
  auto const inf = std::numeric_limits<double>::infinity();
  if (a.is_number() && b.is_number()) { return std::abs(a.get<double>() - b.get<double>()); }
  if (a.type() != b.type() || a.size() != b.size()) { return inf; }
  double worst = 0.0;
  if (a.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key())) { return inf; }
      worst = std::max(worst, max_numeric_diff(it.value(), b.at(it.key())));
    }
    return worst;
  }
  if (a.is_array()) {
    for (std::size_t i = 0; i < a.size(); ++i) { worst = std::max(worst, max_numeric_diff(a[i], b[i])); }
    return worst;
  }
  return a == b ? 0.0 : inf;
}

} // namespace report
