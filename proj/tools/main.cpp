#include "raster.hpp"
#include "report.hpp"

#include <CLI11.hpp>
#include <fftw3.h>

#include <iostream>

#ifndef MCMR_VERSION
#define MCMR_VERSION "dev"
#endif

using namespace mcmr;
using report::Json;

namespace {

// Exit codes.
constexpr int kOk = 0, kUsage = 1, kData = 2, kBreakdown = 3;

// Each argument struct lists its fields once; the list drives flag
// registration, the manifest and replay.
struct PhantomArgs
{
  std::size_t frames = 25, size = 128, coils = 8;
  double accel = 8.0;
  std::size_t center_lines = 4;
  double amplitude = 3.0, sigma = 0.002;
  std::uint64_t seed = 7;
  std::string out;

  template <typename F>
  void fields(F &&f)
  {
    f("frames", frames, "cardiac phases N");
    f("size", size, "image height and width");
    f("coils", coils, "receiver coils Q");
    f("accel", accel, "acceleration R");
    f("center-lines", center_lines, "fully sampled central ky rows");
    f("amplitude", amplitude, "peak contraction in pixels");
    f("sigma", sigma, "complex noise standard deviation");
    f("seed", seed, "phantom seed; masks use seed+1, noise seed+2");
    f("out", out, "dataset file");
  }
};

struct ReconArgs
{
  std::string in, mode = "unrolled";
  std::size_t iters = 3;
  double lambda = 2.0, alpha = 10.0, beta = 10.0, gamma = 0.6;
  std::size_t cg_iters = 20, first_cg_iters = 10;
  double cg_tol = 1e-6, stop_delta = 0.1;
  bool psnr_stop = false;
  std::size_t threads = 1;
  std::string out;

  template <typename F>
  void fields(F &&f)
  {
    f("in", in, "dataset file");
    f("mode", mode, "unrolled | fixed-motion | none | oracle");
    f("iters", iters, "unrolled iterations I");
    f("lambda", lambda, "proximal weight");
    f("alpha", alpha, "spatial smoothness weight");
    f("beta", beta, "temporal smoothness weight");
    f("gamma", gamma, "iteration loss decay");
    f("cg-iters", cg_iters, "CG iteration cap per block");
    f("first-cg-iters", first_cg_iters, "CG iterations of the motion-free first block");
    f("cg-tol", cg_tol, "CG relative residual tolerance");
    f("stop-delta", stop_delta, "PSNR gain (dB) below which --psnr-stop halts");
    f("psnr-stop", psnr_stop, "stop early on small PSNR gains against the embedded reference");
    f("threads", threads, "worker threads");
    f("out", out, "reconstruction file");
  }
};

struct EvalArgs
{
  std::string recon, data, out;

  template <typename F>
  void fields(F &&f)
  {
    f("recon", recon, "reconstruction file");
    f("data", data, "dataset holding the reference");
    f("out", out, "JSON report");
  }
};

struct PlotArgs
{
  std::string data;
  std::vector<std::string> recon;
  std::size_t frame = 0;
  long column = -1;
  std::size_t scale = 2, stretch = 4;
  std::string out;

  template <typename F>
  void fields(F &&f)
  {
    f("data", data, "dataset holding the reference");
    f("recon", recon, "reconstruction files, one panel each");
    f("frame", frame, "phase shown in the x-y panels");
    f("column", column, "column of the y-t profile (default W/2)");
    f("scale", scale, "pixel upscaling");
    f("stretch", stretch, "extra upscaling of the time axis");
    f("out", out, "output prefix; writes <out>_xy.pgm and <out>_yt.pgm");
  }
};

struct BenchArgs
{
  std::size_t frames = 25, size = 128, coils = 8, center_lines = 4;
  double amplitude = 3.0, sigma = 0.002;
  std::uint64_t seed = 7;
  std::vector<double> accels = {8.0, 12.0, 16.0};
  std::vector<std::string> modes = {"unrolled", "fixed-motion", "none"};
  std::size_t iters = 3, threads = 1;
  std::string out;

  template <typename F>
  void fields(F &&f)
  {
    f("frames", frames, "cardiac phases N");
    f("size", size, "image height and width");
    f("coils", coils, "receiver coils Q");
    f("center-lines", center_lines, "fully sampled central ky rows");
    f("amplitude", amplitude, "peak contraction in pixels");
    f("sigma", sigma, "complex noise standard deviation");
    f("seed", seed, "phantom seed");
    f("accels", accels, "acceleration rates");
    f("modes", modes, "methods to compare");
    f("iters", iters, "unrolled iterations I");
    f("threads", threads, "worker threads");
    f("out", out, "JSON report");
  }
};

template <typename T>
void add_flag(CLI::App *app, std::string const &name, T &v, std::string const &desc)
{
  if constexpr (std::is_same_v<T, bool>) {
    app->add_flag("--" + name, v, desc);
  } else {
    app->add_option("--" + name, v, desc)->capture_default_str();
  }
}

template <typename A>
void register_args(CLI::App *app, A &a)
{
  a.fields([&](char const *name, auto &v, char const *desc) { add_flag(app, name, v, desc); });
}

template <typename A>
auto args_json(A a) -> Json
{
  Json j = Json::object();
  a.fields([&](char const *name, auto &v, char const *) { j[name] = v; });
  return j;
}

template <typename A>
auto args_from_json(Json const &j) -> A
{
  A a;
  a.fields([&](char const *name, auto &v, char const *) {
    if (!j.contains(name)) { throw ConfigError(std::string("manifest lacks argument '") + name + "'"); }
    j.at(name).get_to(v);
  });
  return a;
}

auto manifest(std::string const &command, Json args, Json results) -> Json
{
  return {{"tool", "mcmr"},
          {"version", MCMR_VERSION},
          {"fftw", std::string(fftw_version)},
          {"command", command},
          {"args", std::move(args)},
          {"results", std::move(results)}};
}

auto manifest_path(std::string const &out) -> std::string { return out + ".manifest.json"; }

auto make_dataset(std::size_t frames, std::size_t size, std::size_t coils, double accel, std::size_t center_lines,
                  double amplitude, double sigma, std::uint64_t seed) -> std::pair<Dataset, Phantom>
{
  PhantomSpec ps;
  ps.n_frames = frames;
  ps.height = ps.width = size;
  ps.motion_amplitude = amplitude;
  ps.seed = seed;
  auto ph = make_phantom(ps);
  Grid const g{size, size};
  auto maps = make_coil_maps(coils, size, size, dilate(ph.body, g, 3));
  auto masks = make_masks(frames, size, size, accel, center_lines, seed + 1);
  auto y = simulate_kspace(ph.frames, maps, masks, sigma, seed + 2);
  Dataset d{std::move(y), std::move(maps), std::move(masks), ph.frames, ph.motion};
  return {std::move(d), std::move(ph)};
}

// ---- phantom ---------------------------------------------------------------

auto run_phantom(PhantomArgs const &a) -> Json
{
  auto [d, ph] = make_dataset(a.frames, a.size, a.coils, a.accel, a.center_lines, a.amplitude, a.sigma, a.seed);
  write_dataset(a.out, d);
  std::size_t lines = 0;
  for (std::size_t t = 0; t < d.masks.n_frames(); ++t) { lines += d.masks.lines(t).size(); }
  std::cout << "wrote " << a.out << ": " << a.frames << " frames, " << a.size << "x" << a.size << ", " << a.coils
            << " coils, " << lines << " sampled lines\n";
  return {{"metrics", {{"sampled_lines", lines}}}, {"checksum", report::file_checksum(a.out)}};
}

// ---- recon -----------------------------------------------------------------

struct ReconOutcome
{
  Json results;
  bool breakdown = false;
};

auto run_recon(ReconArgs const &a) -> ReconOutcome
{
  if (a.mode != "unrolled" && a.mode != "fixed-motion" && a.mode != "none" && a.mode != "oracle") {
    throw ConfigError("unknown mode '" + a.mode + "'");
  }
  ReconConfig rc;
  rc.lambda = a.lambda;
  rc.unroll_iters = a.iters;
  rc.cg_max_iters = a.cg_iters;
  rc.first_block_cg_iters = a.first_cg_iters;
  rc.cg_tol = a.cg_tol;
  rc.psnr_stop_delta = a.stop_delta;
  rc.early_stop = a.psnr_stop;
  rc.threads = a.threads;
  MotionConfig mc;
  mc.alpha = a.alpha;
  mc.beta = a.beta;
  mc.gamma = a.gamma;
  mc.threads = a.threads;
  rc.validate();
  mc.validate();

  auto const d = read_dataset(a.in);
  auto const start = std::chrono::steady_clock::now();
  ReconResult r;
  if (a.mode == "unrolled") {
    r = reconstruct(d.kspace, d.coils, d.masks, rc, mc, VariationalEstimator{}, d.reference);
  } else if (a.mode == "fixed-motion") {
    auto const u0 = estimate_all(zero_filled(d.kspace, d.coils, d.masks), mc);
    r = precomputed_motion_reconstruct(d.kspace, d.coils, d.masks, u0, rc, d.reference, mc);
  } else if (a.mode == "oracle") {
    if (!d.gt_motion) { throw ValidationError("ground-truth motion present", "'" + a.in + "' has no gt_motion section"); }
    r = precomputed_motion_reconstruct(d.kspace, d.coils, d.masks, *d.gt_motion, rc, d.reference, mc);
  } else {
    r = plain_sense(d.kspace, d.coils, d.masks, rc, d.reference);
  }
  double const wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  ReconstructionFile f;
  f.images = r.images;
  f.motion = r.motion;
  f.meta = {{"mode", a.mode}, {"wall_time", wall}, {"source", a.in}};
  write_reconstruction(a.out, f);
  auto hist = report::history_json(r.history);
  hist["mode"] = a.mode;
  hist["wall_time"] = wall;
  report::write_json(a.out + ".history.json", hist);

  Json metrics = Json::object();
  if (d.reference) {
    auto const q = report::quality(r.images, *d.reference, &r.motion, d.gt_motion ? &*d.gt_motion : nullptr);
    metrics = report::quality_json(q);
    std::cout << a.mode << ": PSNR " << report::fmt(q.psnr.mean, 6) << " dB over " << r.history.size()
              << " iterations, " << std::setprecision(4) << wall << " s\n";
  } else {
    std::cout << a.mode << ": " << r.history.size() << " iterations, " << std::setprecision(4) << wall << " s\n";
  }
  bool const breakdown = r.history.any_breakdown();
  if (breakdown) { std::cerr << "warning: CG breakdown recorded in the history\n"; }
  return {{{"metrics", metrics}, {"breakdown", breakdown},
           {"checksum", report::checksum(io::sequence_bytes(r.images) + io::motion_bytes(r.motion))}}, breakdown};
}

// ---- eval ------------------------------------------------------------------

auto run_eval(EvalArgs const &a) -> Json
{
  auto const d = read_dataset(a.data);
  if (!d.reference) { throw ValidationError("reference present", "'" + a.data + "' has no reference section"); }
  auto const r = read_reconstruction(a.recon);
  bool const with_epe = r.motion && d.gt_motion;
  auto const q = report::quality(r.images, *d.reference, with_epe ? &*r.motion : nullptr,
                                 with_epe ? &*d.gt_motion : nullptr);
  Json j = report::quality_json(q);
  j["wall_time"] = r.meta.contains("wall_time") ? r.meta["wall_time"] : Json(nullptr);
  j["mode"] = r.meta.value("mode", "");
  report::write_json(a.out, j);

  auto const ps = report::stats(q.psnr.per_frame);
  auto const ss = report::stats(q.ssim);
  std::cout << "frame\tpsnr_db\tssim\n";
  for (std::size_t t = 0; t < q.ssim.size(); ++t) {
    std::cout << t << "\t" << report::fmt(q.psnr.per_frame[t]) << "\t" << report::fmt(q.ssim[t]) << "\n";
  }
  std::cout << "mean\t" << report::fmt(ps.mean) << "\t" << report::fmt(ss.mean) << "\n";
  std::cout << "std\t" << report::fmt(ps.std) << "\t" << report::fmt(ss.std) << "\n";
  if (q.epe) { std::cout << "epe_px\t" << report::fmt(*q.epe) << "\n"; }
  if (j["wall_time"].is_number()) { std::cout << "wall_time_s\t" << report::fmt(j["wall_time"].get<double>()) << "\n"; }

  Json metrics = j;
  metrics.erase("wall_time");
  return {{"metrics", metrics}, {"checksum", report::file_checksum(a.out)}};
}

// ---- plot ------------------------------------------------------------------

auto run_plot(PlotArgs const &a) -> Json
{
  auto const d = read_dataset(a.data);
  if (!d.reference) { throw ValidationError("reference present", "'" + a.data + "' has no reference section"); }
  auto const &ref = *d.reference;
  Grid const g = ref.grid();
  std::size_t const column = a.column < 0 ? g.width / 2 : static_cast<std::size_t>(a.column);
  if (column >= g.width) {
    throw ConfigError("column " + std::to_string(a.column) + " outside [0, " + std::to_string(g.width) + ")");
  }
  if (a.frame >= ref.n_frames()) { throw ConfigError("frame " + std::to_string(a.frame) + " out of range"); }
  if (a.scale < 1 || a.stretch < 1) { throw ConfigError("scale and stretch must be >= 1"); }

  double peak = 0.0;
  for (auto const &f : ref) {
    for (auto v : f.data()) { peak = std::max(peak, std::abs(v)); }
  }
  std::vector<raster::Canvas> xy, yt;
  xy.push_back(raster::xy_panel(ref[a.frame], peak, a.scale));
  yt.push_back(raster::yt_panel(ref, column, peak, a.scale, a.stretch));
  Json psnrs = Json::array();
  for (auto const &path : a.recon) {
    auto const r = read_reconstruction(path);
    if (r.images.n_frames() != ref.n_frames()) { throw DimensionError("'" + path + "' frame count differs from the reference"); }
    require_grid(r.images.grid(), g, path.c_str());
    double const p = psnr(r.images, ref).mean;
    psnrs.push_back(report::db(p));
    std::string const label = PsnrReport::is_exact(p) ? "EXACT" : report::fmt(p, 4);
    xy.push_back(raster::xy_panel(r.images[a.frame], peak, a.scale));
    raster::stamp(xy.back(), "PSNR " + label, a.scale);
    yt.push_back(raster::yt_panel(r.images, column, peak, a.scale, a.stretch));
  }
  std::string const xy_path = a.out + "_xy.pgm", yt_path = a.out + "_yt.pgm";
  raster::side_by_side(xy).write_pgm(xy_path);
  raster::side_by_side(yt).write_pgm(yt_path);
  std::cout << "wrote " << xy_path << " and " << yt_path << "\n";
  return {{"metrics", {{"psnr", psnrs}}},
          {"checksum", report::file_checksum(xy_path) + report::file_checksum(yt_path)}};
}

// ---- bench -----------------------------------------------------------------

auto run_bench(BenchArgs const &a) -> Json
{
  for (auto const &m : a.modes) {
    if (m != "unrolled" && m != "fixed-motion" && m != "none" && m != "oracle") {
      throw ConfigError("unknown mode '" + m + "'");
    }
  }
  ReconConfig rc;
  rc.unroll_iters = a.iters;
  rc.early_stop = false;
  rc.threads = a.threads;
  MotionConfig mc;
  mc.threads = a.threads;

  Json rows = Json::array();
  std::map<std::string, std::map<double, report::Quality>> table;
  for (double R : a.accels) {
    auto [d, ph] = make_dataset(a.frames, a.size, a.coils, R, a.center_lines, a.amplitude, a.sigma, a.seed);
    for (auto const &m : a.modes) {
      auto const start = std::chrono::steady_clock::now();
      ReconResult r;
      if (m == "unrolled") {
        r = reconstruct(d.kspace, d.coils, d.masks, rc, mc, VariationalEstimator{}, d.reference);
      } else if (m == "fixed-motion") {
        auto const u0 = estimate_all(zero_filled(d.kspace, d.coils, d.masks), mc);
        r = precomputed_motion_reconstruct(d.kspace, d.coils, d.masks, u0, rc, d.reference, mc);
      } else if (m == "oracle") {
        r = precomputed_motion_reconstruct(d.kspace, d.coils, d.masks, ph.motion, rc, d.reference, mc);
      } else {
        r = plain_sense(d.kspace, d.coils, d.masks, rc, d.reference);
      }
      double const wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      auto q = report::quality(r.images, ph.frames);
      Json row = report::quality_json(q);
      row.erase("epe");
      Json series = Json::array();
      for (double p : r.history.psnr_series()) { series.push_back(report::db(p)); }
      rows.push_back({{"accel", R}, {"mode", m}, {"psnr_by_iteration", series}, {"quality", row}, {"wall_time", wall}});
      table[m][R] = std::move(q);
      std::cerr << "R=" << R << " " << m << " done in " << std::setprecision(4) << wall << " s\n";
    }
  }

  std::cout << "method";
  for (double R : a.accels) { std::cout << "\tR=" << R << " PSNR\tR=" << R << " SSIM"; }
  std::cout << "\n";
  for (auto const &m : a.modes) {
    std::cout << m;
    for (double R : a.accels) {
      auto const &q = table[m][R];
      auto const ps = report::stats(q.psnr.per_frame);
      auto const ss = report::stats(q.ssim);
      std::cout << std::fixed << std::setprecision(2) << "\t" << ps.mean << " +- " << ps.std << std::setprecision(4)
                << "\t" << ss.mean << " +- " << ss.std;
    }
    std::cout << std::defaultfloat << "\n";
  }
  Json j = {{"rows", rows}};
  report::write_json(a.out, j);

  Json metrics = Json::array();
  for (auto const &row : rows) { metrics.push_back({{"accel", row["accel"]}, {"mode", row["mode"]}, {"quality", row["quality"]}}); }
  return {{"metrics", metrics}};
}

// ---- dispatch --------------------------------------------------------------

struct Outcome
{
  Json results;
  int code = kOk;
};

auto dispatch(std::string const &command, Json const &args) -> Outcome
{
  if (command == "phantom") { return {run_phantom(args_from_json<PhantomArgs>(args))}; }
  if (command == "recon") {
    auto o = run_recon(args_from_json<ReconArgs>(args));
    return {std::move(o.results), o.breakdown ? kBreakdown : kOk};
  }
  if (command == "eval") { return {run_eval(args_from_json<EvalArgs>(args))}; }
  if (command == "plot") { return {run_plot(args_from_json<PlotArgs>(args))}; }
  if (command == "bench") { return {run_bench(args_from_json<BenchArgs>(args))}; }
  throw ConfigError("unknown command '" + command + "'");
}

auto run_and_record(std::string const &command, Json const &args) -> int
{
  auto o = dispatch(command, args);
  report::write_json(manifest_path(args.at("out").get<std::string>()), manifest(command, args, o.results));
  return o.code;
}

// Re-runs a manifest, optionally into a new output path, and compares metrics.
auto run_replay(std::string const &path, std::string const &out, double tol) -> int
{
  auto const m = report::read_json(path);
  if (!m.contains("command") || !m.contains("args") || !m.contains("results")) {
    throw FormatError("'" + path + "' is not a manifest", 0);
  }
  Json args = m["args"];
  if (!out.empty()) { args["out"] = out; }
  std::string const command = m["command"];
  auto o = dispatch(command, args);
  report::write_json(manifest_path(args["out"].get<std::string>()), manifest(command, args, o.results));

  double const diff = report::max_numeric_diff(m["results"]["metrics"], o.results["metrics"]);
  bool const same_bytes = m["results"].value("checksum", "") == o.results.value("checksum", "");
  std::cout << "replay " << command << ": max metric difference " << report::fmt(diff, 6)
            << (same_bytes ? ", outputs bit-identical" : ", outputs differ in bytes") << "\n";
  if (!(diff <= tol)) {
    std::cerr << "error: metrics differ from the manifest by more than " << tol << "\n";
    return kData;
  }
  return o.code;
}

template <typename A>
auto add_command(CLI::App &app, char const *name, char const *desc, A &args) -> CLI::App *
{
  auto *sub = app.add_subcommand(name, desc);
  register_args(sub, args);
  sub->get_option("--out")->required();
  return sub;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Motion-compensated MR reconstruction on synthetic CINE phantoms"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MCMR_VERSION);

  PhantomArgs pa;
  ReconArgs ra;
  EvalArgs ea;
  PlotArgs pl;
  BenchArgs ba;
  auto *phantom = add_command(app, "phantom", "generate a synthetic dataset", pa);
  auto *recon = add_command(app, "recon", "reconstruct a dataset", ra);
  recon->get_option("--in")->required();
  auto *eval = add_command(app, "eval", "score a reconstruction against the reference", ea);
  eval->get_option("--recon")->required();
  eval->get_option("--data")->required();
  auto *plot = add_command(app, "plot", "render x-y and y-t panels", pl);
  plot->get_option("--data")->required();
  auto *bench = add_command(app, "bench", "acceleration sweep across methods", ba);
  std::string manifest_in, replay_out;
  double replay_tol = 1e-6;
  auto *replay = app.add_subcommand("replay", "re-run a manifest and compare its metrics");
  replay->add_option("--manifest", manifest_in, "manifest to replay")->required();
  replay->add_option("--out", replay_out, "write outputs here instead of the recorded path");
  replay->add_option("--tol", replay_tol, "allowed metric difference")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const &e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*phantom) { return run_and_record("phantom", args_json(pa)); }
    if (*recon) { return run_and_record("recon", args_json(ra)); }
    if (*eval) { return run_and_record("eval", args_json(ea)); }
    if (*plot) { return run_and_record("plot", args_json(pl)); }
    if (*bench) { return run_and_record("bench", args_json(ba)); }
    if (*replay) { return run_replay(manifest_in, replay_out, replay_tol); }
  } catch (ConfigError const &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (PipelineError const &e) {
    std::cerr << "error: reconstruction failed after " << e.history.size() << " iterations: " << e.what() << "\n";
    return kBreakdown;
  } catch (std::exception const &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
