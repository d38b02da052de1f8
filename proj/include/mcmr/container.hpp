#pragma once

#include "core.hpp"
#include "validate.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace mcmr {

// Binary container, little-endian:
//   "MCMR0001" | u32 header length | UTF-8 JSON header | sections...
// The header lists {name, offset, byte_len} per section; offsets count from
// the first byte after the header.
inline constexpr char kMagic[] = "MCMR";
inline constexpr char kVersion[] = "0001";

namespace io {

using Json = nlohmann::ordered_json;

class Writer
{
public:
  void f64(double v)
  {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) { buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff)); }
  }
  void u32(std::uint32_t v)
  {
    for (int i = 0; i < 4; ++i) { buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff)); }
  }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void complex(std::span<cplx const> v)
  {
    if constexpr (std::endian::native == std::endian::little) {
      auto const *p = reinterpret_cast<char const *>(v.data());
      buf_.insert(buf_.end(), p, p + v.size() * sizeof(cplx));
    } else {
      for (auto c : v) {
        f64(c.real());
        f64(c.imag());
      }
    }
  }
  void reals(std::span<double const> v)
  {
    for (auto d : v) { f64(d); }
  }
  auto bytes() -> std::string & { return buf_; }

private:
  std::string buf_;
};

class Reader
{
public:
  Reader(std::string_view data, std::uint64_t base, std::string section)
    : data_(data)
    , base_(base)
    , section_(std::move(section))
  {
  }
  auto f64() -> double { return std::bit_cast<double>(take<std::uint64_t>(8)); }
  auto u32() -> std::uint32_t { return take<std::uint32_t>(4); }
  auto u8() -> std::uint8_t { return take<std::uint8_t>(1); }
  void complex(std::span<cplx> out)
  {
    if constexpr (std::endian::native == std::endian::little) {
      need(out.size() * sizeof(cplx));
      std::memcpy(out.data(), data_.data() + pos_, out.size() * sizeof(cplx));
      pos_ += out.size() * sizeof(cplx);
    } else {
      for (auto &c : out) {
        double const re = f64();
        c = {re, f64()};
      }
    }
  }
  auto remaining() const -> std::size_t { return data_.size() - pos_; }
  auto position() const -> std::uint64_t { return base_ + pos_; }

private:
  template <typename T>
  auto take(int n) -> T
  {
    need(static_cast<std::size_t>(n));
    T v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i));
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  void need(std::size_t n) const
  {
    if (pos_ + n > data_.size()) {
      throw FormatError("section '" + section_ + "' is shorter than its contents require", base_ + pos_);
    }
  }

  std::string_view data_;
  std::uint64_t base_;
  std::string section_;
  std::size_t pos_ = 0;
};

struct Section
{
  std::string name;
  std::string bytes;
};

inline void write_container(std::string const &path, Json header, std::vector<Section> const &sections)
{
  Json list = Json::array();
  std::uint64_t offset = 0;
  for (auto const &s : sections) {
    list.push_back({{"name", s.name}, {"offset", offset}, {"byte_len", s.bytes.size()}});
    offset += s.bytes.size();
  }
  header["sections"] = list;
  std::string const text = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) { throw Error("cannot open '" + path + "' for writing"); }
  Writer pre;
  pre.bytes().append(kMagic, 4);
  pre.bytes().append(kVersion, 4);
  pre.u32(static_cast<std::uint32_t>(text.size()));
  f.write(pre.bytes().data(), static_cast<std::streamsize>(pre.bytes().size()));
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto const &s : sections) { f.write(s.bytes.data(), static_cast<std::streamsize>(s.bytes.size())); }
  if (!f) { throw Error("failed writing '" + path + "'"); }
}

struct Container
{
  Json header;
  std::string file;
  std::uint64_t data_start = 0;
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> sections; // name -> (absolute offset, length)

  auto has(std::string const &name) const -> bool { return sections.contains(name); }

  auto reader(std::string const &name, std::uint64_t expected_len) const -> Reader
  {
    auto it = sections.find(name);
    if (it == sections.end()) { throw FormatError("missing required section '" + name + "'", data_start); }
    auto [off, len] = it->second;
    if (len != expected_len) {
      throw FormatError("section '" + name + "' has " + std::to_string(len) + " bytes, expected " +
                          std::to_string(expected_len),
                        off);
    }
    if (off + len > file.size()) {
      throw FormatError("section '" + name + "' truncated: file ends at byte " + std::to_string(file.size()) +
                          ", section needs " + std::to_string(off + len),
                        file.size());
    }
    return Reader(std::string_view(file).substr(off, len), off, name);
  }

  auto reader(std::string const &name) const -> Reader
  {
    auto it = sections.find(name);
    if (it == sections.end()) { throw FormatError("missing required section '" + name + "'", data_start); }
    return reader(name, it->second.second);
  }
};

inline auto read_container(std::string const &path) -> Container
{
  std::ifstream f(path, std::ios::binary);
  if (!f) { throw Error("cannot open '" + path + "' for reading"); }
  Container c;
  c.file.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  if (c.file.size() < 12) { throw FormatError("file too short for the container preamble", c.file.size()); }
  for (std::size_t i = 0; i < 4; ++i) {
    if (c.file[i] != kMagic[i]) { throw FormatError("bad magic: not an MCMR container", i); }
  }
  if (c.file.compare(4, 4, kVersion) != 0) {
    throw FormatError("unsupported container version '" + c.file.substr(4, 4) + "' (expected " + kVersion + ")", 4);
  }
  Reader pre(std::string_view(c.file).substr(8, 4), 8, "preamble");
  std::uint32_t const len = pre.u32();
  if (12 + static_cast<std::uint64_t>(len) > c.file.size()) {
    throw FormatError("header truncated: declares " + std::to_string(len) + " bytes", 12);
  }
  try {
    c.header = Json::parse(c.file.substr(12, len));
  } catch (nlohmann::json::exception const &e) {
    throw FormatError(std::string("header is not valid JSON: ") + e.what(), 12);
  }
  c.data_start = 12 + len;
  try {
    for (auto const &s : c.header.at("sections")) {
      auto off = s.at("offset").get<std::uint64_t>();
      c.sections[s.at("name").get<std::string>()] = {c.data_start + off, s.at("byte_len").get<std::uint64_t>()};
    }
  } catch (nlohmann::json::exception const &e) {
    throw FormatError(std::string("malformed section table: ") + e.what(), 12);
  }
  return c;
}

inline auto header_size(Container const &c, char const *key) -> std::size_t
{
  try {
    return c.header.at(key).get<std::size_t>();
  } catch (nlohmann::json::exception const &) {
    throw FormatError(std::string("header field '") + key + "' missing or invalid", 12);
  }
}

inline auto sequence_bytes(ImageSequence const &x) -> std::string
{
  Writer w;
  for (auto const &f : x) { w.complex(f.data()); }
  return std::move(w.bytes());
}

inline auto read_sequence(Container const &c, std::string const &name, std::size_t n, Grid g) -> ImageSequence
{
  auto r = c.reader(name, n * g.size() * 16);
  std::vector<ComplexImage> frames;
  for (std::size_t t = 0; t < n; ++t) {
    ComplexImage img(g);
    r.complex(img.data());
    frames.push_back(std::move(img));
  }
  return ImageSequence(std::move(frames));
}

inline auto motion_bytes(MotionFieldSet const &u) -> std::string
{
  Writer w;
  for (std::size_t t1 = 0; t1 < u.n_frames(); ++t1) {
    for (std::size_t t2 = 0; t2 < u.n_frames(); ++t2) {
      w.reals(u.at(t1, t2).dy);
      w.reals(u.at(t1, t2).dx);
    }
  }
  return std::move(w.bytes());
}

inline auto read_motion(Container const &c, std::string const &name, std::size_t n, Grid g) -> MotionFieldSet
{
  auto r = c.reader(name, n * n * 2 * g.size() * 8);
  MotionFieldSet u(n, g);
  for (std::size_t t1 = 0; t1 < n; ++t1) {
    for (std::size_t t2 = 0; t2 < n; ++t2) {
      auto &f = u.at(t1, t2);
      for (auto &v : f.dy) { v = r.f64(); }
      for (auto &v : f.dx) { v = r.f64(); }
    }
  }
  return u;
}

} // namespace io

/// Writes a dataset container; optional sections are omitted when absent.
inline void write_dataset(std::string const &path, Dataset const &d)
{
  Grid const g = d.coils.grid();
  std::size_t const n = d.kspace.n_frames();
  std::size_t const q = d.coils.n_coils();
  if (d.kspace.grid() != g || d.masks.grid() != g || d.kspace.n_coils() != q || d.masks.n_frames() != n) {
    throw DimensionError("write_dataset: k-space, coil maps and masks have inconsistent dimensions");
  }
  if (d.reference && (d.reference->n_frames() != n || d.reference->grid() != g)) {
    throw DimensionError("write_dataset: reference dimensions disagree with k-space");
  }
  if (d.gt_motion && (d.gt_motion->n_frames() != n || d.gt_motion->grid() != g)) {
    throw DimensionError("write_dataset: ground-truth motion dimensions disagree with k-space");
  }

  std::vector<io::Section> sections;
  {
    io::Writer w;
    w.complex(d.kspace.data());
    sections.push_back({"kspace", std::move(w.bytes())});
  }
  {
    io::Writer w;
    w.complex(d.coils.data());
    sections.push_back({"coils", std::move(w.bytes())});
  }
  {
    io::Writer w;
    for (auto v : d.coils.support()) { w.u8(v != 0 ? 1 : 0); }
    sections.push_back({"support", std::move(w.bytes())});
  }
  {
    io::Writer w;
    for (std::size_t t = 0; t < n; ++t) {
      w.u32(static_cast<std::uint32_t>(d.masks.lines(t).size()));
      for (auto r : d.masks.lines(t)) { w.u32(r); }
    }
    sections.push_back({"masks", std::move(w.bytes())});
  }
  if (d.reference) { sections.push_back({"reference", io::sequence_bytes(*d.reference)}); }
  if (d.gt_motion) { sections.push_back({"gt_motion", io::motion_bytes(*d.gt_motion)}); }

  io::Json header = {{"N", n}, {"Q", q}, {"H", g.height}, {"W", g.width}, {"center_lines", d.masks.center_lines()},
                     {"kind", "dataset"}};
  io::write_container(path, std::move(header), sections);
}

/// Reads a dataset without validating its invariants.
inline auto read_dataset_unchecked(std::string const &path) -> Dataset
{
  auto const c = io::read_container(path);
  std::size_t const n = io::header_size(c, "N");
  std::size_t const q = io::header_size(c, "Q");
  Grid const g{io::header_size(c, "H"), io::header_size(c, "W")};
  auto const center = static_cast<std::uint32_t>(io::header_size(c, "center_lines"));

  Dataset d;
  {
    CVec data(n * q * g.size());
    c.reader("kspace", data.size() * 16).complex(data);
    d.kspace = KSpaceSet(n, q, g, std::move(data));
  }
  CVec coil_data(q * g.size());
  c.reader("coils", coil_data.size() * 16).complex(coil_data);
  std::vector<std::uint8_t> support(g.size());
  {
    auto r = c.reader("support", g.size());
    for (auto &v : support) { v = r.u8(); }
  }
  d.coils = CoilMaps(q, g, std::move(coil_data), std::move(support));
  {
    auto r = c.reader("masks");
    std::vector<std::vector<std::uint32_t>> lines(n);
    for (auto &l : lines) {
      std::uint32_t const count = r.u32();
      if (count > g.height) { throw FormatError("mask line count exceeds H", r.position() - 4); }
      for (std::uint32_t k = 0; k < count; ++k) { l.push_back(r.u32()); }
    }
    if (r.remaining() != 0) { throw FormatError("trailing bytes in section 'masks'", r.position()); }
    d.masks = SamplingMaskSet(g, std::move(lines), center);
  }
  if (c.has("reference")) { d.reference = io::read_sequence(c, "reference", n, g); }
  if (c.has("gt_motion")) { d.gt_motion = io::read_motion(c, "gt_motion", n, g); }
  return d;
}

/// Reads a dataset and re-checks every type invariant; the first violation is
/// raised as a ValidationError naming the invariant.
inline auto read_dataset(std::string const &path) -> Dataset
{
  auto d = read_dataset_unchecked(path);
  auto const violations = validate(d);
  if (!violations.empty()) { throw ValidationError(violations.front().invariant, to_string(violations.front())); }
  return d;
}

/// A reconstructed sequence, optionally with the motion set it was produced with.
struct ReconstructionFile
{
  ImageSequence images;
  std::optional<MotionFieldSet> motion;
  io::Json meta = io::Json::object();
};

inline void write_reconstruction(std::string const &path, ReconstructionFile const &r)
{
  std::vector<io::Section> sections;
  sections.push_back({"images", io::sequence_bytes(r.images)});
  if (r.motion) { sections.push_back({"motion", io::motion_bytes(*r.motion)}); }
  Grid const g = r.images.grid();
  io::Json header = {{"N", r.images.n_frames()}, {"Q", 0}, {"H", g.height}, {"W", g.width}, {"center_lines", 0},
                     {"kind", "reconstruction"}, {"meta", r.meta}};
  io::write_container(path, std::move(header), sections);
}

inline auto read_reconstruction(std::string const &path) -> ReconstructionFile
{
  auto const c = io::read_container(path);
  if (c.header.value("kind", "") != "reconstruction") {
    throw FormatError("'" + path + "' is not a reconstruction container", 12);
  }
  std::size_t const n = io::header_size(c, "N");
  Grid const g{io::header_size(c, "H"), io::header_size(c, "W")};
  ReconstructionFile r;
  r.images = io::read_sequence(c, "images", n, g);
  if (c.has("motion")) { r.motion = io::read_motion(c, "motion", n, g); }
  r.meta = c.header.value("meta", io::Json::object());
  if (!r.meta.is_object()) { r.meta = io::Json::object(); }
  return r;
}

} // namespace mcmr
