#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "tactile/config.hpp"
#include "tactile/dataset.hpp"
#include "tactile/lut.hpp"
#include "tactile/psnn.hpp"
#include "tactile/raster.hpp"

namespace tactile {

namespace fs = std::filesystem;

// --- byte streams -------------------------------------------------------------

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { buf_.append(s); }
  const std::string& str() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string data, std::string what) : data_(std::move(data)), what_(std::move(what)) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_end() const {
    if (pos_ != data_.size()) throw FormatError(what_ + ": trailing bytes");
  }
  [[noreturn]] void fail(const std::string& msg) const { throw FormatError(what_ + ": " + msg); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(what_ + ": truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string data_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

// --- TRAS rasters --------------------------------------------------------------

inline constexpr std::uint16_t kRasterVersion = 1;

/// Multi-channel float raster with an optional validity mask.
struct RasterFile {
  int width = 0;
  int height = 0;
  std::vector<Grid<double>> channels;
  bool has_mask = false;
  Mask mask;
};

inline std::string encode_raster(const RasterFile& r) {
  require(r.width > 0 && r.height > 0, "raster: empty dimensions");
  require(!r.channels.empty() && r.channels.size() <= 255, "raster: channel count must be 1..255");
  for (const auto& c : r.channels)
    require(c.width() == r.width && c.height() == r.height, "raster: channel shape mismatch");
  if (r.has_mask) require(r.mask.width() == r.width && r.mask.height() == r.height, "raster: mask shape mismatch");
  ByteWriter w;
  w.bytes("TRAS");
  w.u16(kRasterVersion);
  w.u32(static_cast<std::uint32_t>(r.width));
  w.u32(static_cast<std::uint32_t>(r.height));
  w.u8(static_cast<std::uint8_t>(r.channels.size()));
  w.u8(r.has_mask ? 1 : 0);
  for (const auto& c : r.channels)
    for (double v : c.data()) w.f32(static_cast<float>(v));
  if (r.has_mask) {
    const std::size_t n = r.mask.size();
    for (std::size_t i = 0; i < n; i += 8) {
      std::uint8_t byte = 0;
      for (std::size_t b = 0; b < 8 && i + b < n; ++b)
        if (r.mask[i + b]) byte |= static_cast<std::uint8_t>(1u << b);
      w.u8(byte);
    }
  }
  return w.str();
}

inline RasterFile decode_raster(std::string bytes, const std::string& what = "raster") {
  ByteReader rd(std::move(bytes), what);
  if (rd.bytes(4) != "TRAS") rd.fail("bad magic");
  if (rd.u16() != kRasterVersion) rd.fail("unsupported version");
  RasterFile r;
  const std::uint32_t w = rd.u32(), h = rd.u32();
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) rd.fail("bad dimensions");
  r.width = static_cast<int>(w);
  r.height = static_cast<int>(h);
  const int nc = rd.u8();
  if (nc == 0) rd.fail("no channels");
  const std::uint8_t flag = rd.u8();
  if (flag > 1) rd.fail("bad mask flag");
  r.has_mask = flag == 1;
  for (int c = 0; c < nc; ++c) {
    Grid<double> g(r.width, r.height, 0.0);
    for (auto& v : g.data()) v = static_cast<double>(rd.f32());
    r.channels.push_back(std::move(g));
  }
  if (r.has_mask) {
    r.mask = Mask(r.width, r.height, 0);
    const std::size_t n = r.mask.size();
    for (std::size_t i = 0; i < n; i += 8) {
      const std::uint8_t byte = rd.u8();
      for (std::size_t b = 0; b < 8 && i + b < n; ++b) r.mask[i + b] = (byte >> b) & 1u;
      if (n - i < 8 && (byte >> (n - i)) != 0) rd.fail("padding bits set");
    }
  }
  rd.expect_end();
  return r;
}

inline void write_raster(const fs::path& path, const RasterFile& r) { write_file(path, encode_raster(r)); }
inline RasterFile read_raster(const fs::path& path) { return decode_raster(read_file(path), path.string()); }

inline RasterFile raster_from(const RasterGrid& g) {
  return {g.values.width(), g.values.height(), {g.values}, true, g.mask};
}

// --- PSNN checkpoints -------------------------------------------------------------

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Binary checkpoint: header, layer widths, then every tensor as float64 in
/// PsnnParameters visit order (matrices row-major), then running mean/var.
inline std::string encode_psnn(const PsnnModel& m) {
  m.validate();
  ByteWriter w;
  w.bytes("PSNN");
  w.u16(kCheckpointVersion);
  w.u8(m.channel_mode == ChannelMode::RgbNir ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(m.encoding.n_frequencies));
  w.u8(m.encoding.include_raw ? 1 : 0);
  w.f64(m.dropout_rate);
  w.f64(m.bn_epsilon);
  w.f64(m.bn_momentum);
  const auto widths = m.layer_widths();
  w.u32(static_cast<std::uint32_t>(widths.size()));
  for (int x : widths) w.u32(static_cast<std::uint32_t>(x));
  auto put = [&](const auto& t) {
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) w.f64(t(i, j));
  };
  m.params.for_each(put);
  for (int k = 0; k < kHiddenLayers; ++k) put(m.running_mean[k]);
  for (int k = 0; k < kHiddenLayers; ++k) put(m.running_var[k]);
  return w.str();
}

inline PsnnModel decode_psnn(std::string bytes, const std::string& what = "checkpoint") {
  ByteReader rd(std::move(bytes), what);
  if (rd.bytes(4) != "PSNN") rd.fail("bad magic");
  if (rd.u16() != kCheckpointVersion) rd.fail("unsupported version");
  PsnnModel m;
  const std::uint8_t mode = rd.u8();
  if (mode > 1) rd.fail("bad channel mode");
  m.channel_mode = mode ? ChannelMode::RgbNir : ChannelMode::RgbOnly;
  const std::uint32_t nf = rd.u32();
  if (nf > 30) rd.fail("bad encoding");
  m.encoding.n_frequencies = static_cast<int>(nf);
  const std::uint8_t raw = rd.u8();
  if (raw > 1) rd.fail("bad encoding flag");
  m.encoding.include_raw = raw == 1;
  m.dropout_rate = rd.f64();
  m.bn_epsilon = rd.f64();
  m.bn_momentum = rd.f64();
  if (rd.u32() != kHiddenLayers + 2) rd.fail("layer count mismatch");
  std::vector<int> widths;
  for (int k = 0; k < kHiddenLayers + 2; ++k) {
    const std::uint32_t x = rd.u32();
    if (x == 0 || x > 65536) rd.fail("bad layer width");
    widths.push_back(static_cast<int>(x));
  }
  if (widths[0] != channel_count(m.channel_mode) + static_cast<int>(m.encoding.length()))
    rd.fail("input width does not match channel mode and encoding");
  for (int k = 0; k <= kHiddenLayers; ++k) {
    m.params.weights[k].resize(widths[k + 1], widths[k]);
    m.params.biases[k].resize(widths[k + 1]);
  }
  for (int k = 0; k < kHiddenLayers; ++k) {
    const int n = widths[k + 1];
    m.params.bn_scale[k].resize(n);
    m.params.bn_shift[k].resize(n);
    m.running_mean[k].resize(n);
    m.running_var[k].resize(n);
  }
  auto get = [&](auto& t) {
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) {
        t(i, j) = rd.f64();
        if (!std::isfinite(t(i, j))) rd.fail("non-finite parameter");
      }
  };
  m.params.for_each(get);
  for (int k = 0; k < kHiddenLayers; ++k) get(m.running_mean[k]);
  for (int k = 0; k < kHiddenLayers; ++k) get(m.running_var[k]);
  rd.expect_end();
  try {
    m.validate();
  } catch (const ContractViolation& e) {
    rd.fail(e.what());
  }
  return m;
}

inline void save_psnn(const fs::path& path, const PsnnModel& m) { write_file(path, encode_psnn(m)); }
inline PsnnModel load_psnn(const fs::path& path) { return decode_psnn(read_file(path), path.string()); }

// --- lookup tables -------------------------------------------------------------

inline constexpr std::uint16_t kLutVersion = 1;

inline std::string encode_lut(const LookupTable& t) {
  ByteWriter w;
  w.bytes("TLUT");
  w.u16(kLutVersion);
  w.u32(static_cast<std::uint32_t>(t.bins_per_channel));
  w.u8(t.channel_mode == ChannelMode::RgbNir ? 1 : 0);
  w.u64(t.cells.size());
  for (const auto& [key, cell] : t.cells) {
    w.u64(key);
    w.f64(cell.gx);
    w.f64(cell.gy);
    w.u64(cell.count);
  }
  return w.str();
}

inline LookupTable decode_lut(std::string bytes, const std::string& what = "lookup table") {
  ByteReader rd(std::move(bytes), what);
  if (rd.bytes(4) != "TLUT") rd.fail("bad magic");
  if (rd.u16() != kLutVersion) rd.fail("unsupported version");
  const std::uint32_t bins = rd.u32();
  const std::uint8_t mode = rd.u8();
  if (bins == 0 || bins > 4096 || mode > 1) rd.fail("bad header");
  LookupTable t;
  try {
    t = make_lookup_table(static_cast<int>(bins), mode ? ChannelMode::RgbNir : ChannelMode::RgbOnly);
  } catch (const ContractViolation& e) {
    rd.fail(e.what());
  }
  const double span = std::pow(static_cast<double>(bins), t.channels());
  const std::uint64_t n = rd.u64();
  std::uint64_t prev = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t key = rd.u64();
    if (static_cast<double>(key) >= span || (i > 0 && key <= prev)) rd.fail("bad key");
    prev = key;
    LookupTable::Cell c;
    c.gx = rd.f64();
    c.gy = rd.f64();
    c.count = rd.u64();
    if (!std::isfinite(c.gx) || !std::isfinite(c.gy) || c.count == 0) rd.fail("bad cell");
    t.cells.emplace(key, c);
  }
  rd.expect_end();
  return t;
}

inline void save_lut(const fs::path& path, const LookupTable& t) { write_file(path, encode_lut(t)); }
inline LookupTable load_lut(const fs::path& path) { return decode_lut(read_file(path), path.string()); }

// --- text outputs ----------------------------------------------------------------

/// Pretty JSON with a trailing newline; key order is sorted so output is stable.
inline void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError("'" + path.string() + "': invalid JSON: " + e.what());
  }
}

// --- dataset directories ----------------------------------------------------------

// Per-sample raster planes. Normal and depth planes hold NaN where undefined.
inline const std::vector<std::string>& sample_channel_names() {
  static const std::vector<std::string> names{"R", "G", "B", "NIR1", "NIR2", "NIR3", "nx", "ny", "nz", "contact", "depth_mm"};
  return names;
}

inline std::string sample_file_name(std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "sample_%03zu.tras", i);
  return buf;
}

inline RasterFile sample_to_raster(const CalibrationSample& s) {
  const int w = s.frame.mask.width(), h = s.frame.mask.height();
  RasterFile r{w, h, {}, true, s.frame.mask};
  for (const auto& c : s.frame.channels) r.channels.push_back(c);
  const double nan = std::nan("");
  Grid<double> nx(w, h, nan), ny(w, h, nan), nz(w, h, nan), contact(w, h, 0.0), depth(w, h, nan);
  for (std::size_t i = 0; i < nx.size(); ++i) {
    if (s.gt_normals.mask[i]) {
      nx[i] = s.gt_normals.nx[i];
      ny[i] = s.gt_normals.ny[i];
      nz[i] = s.gt_normals.nz[i];
    }
    contact[i] = s.contact_mask[i] ? 1.0 : 0.0;
    if (s.deformed_heights.mask[i]) depth[i] = s.deformed_heights.values[i];
  }
  for (auto* g : {&nx, &ny, &nz, &contact, &depth}) r.channels.push_back(std::move(*g));
  return r;
}

inline json dataset_metadata(const CalibrationDataset& ds) {
  SurfaceConfig sc{ds.surface.shape, ds.surface.grid.pixel_pitch, ds.surface.min_normal_z};
  json probes = json::array();
  for (const auto& s : ds.samples)
    probes.push_back({{"center", detail::vec_json(s.probe.center)},
                      {"radius", s.probe.radius},
                      {"indentation", s.probe.indentation}});
  json split = json::array();
  for (auto t : ds.split) split.push_back(t == Split::Train ? "train" : "test");
  json opts = probe_json(ds.options);
  opts["test_fraction"] = ds.options.test_fraction;
  opts["prior_band_width"] = ds.options.prior_band_width;
  opts["prior_weight"] = ds.options.prior_weight;
  return {{"format", "tactile-dataset"},
          {"version", 1},
          {"seed", ds.seed},
          {"n_samples", ds.samples.size()},
          {"has_nir", ds.samples.empty() ? true : ds.samples.front().frame.has_nir},
          {"channels", sample_channel_names()},
          {"surface", to_json(sc)},
          {"camera", to_json(ds.camera)},
          {"render", to_json(ds.render_config)},
          {"options", opts},
          {"probes", probes},
          {"split", split}};
}

/// Writes the dataset into `dir` via a sibling temp directory and a rename,
/// so readers never observe a half-written dataset.
inline void save_dataset(const fs::path& dir, const CalibrationDataset& ds) {
  const fs::path target = fs::absolute(dir).lexically_normal();
  const fs::path tmp = target.string() + ".tmp";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  if (!fs::create_directories(tmp, ec) && ec) throw IoError("cannot create '" + tmp.string() + "': " + ec.message());
  write_json(tmp / "metadata.json", dataset_metadata(ds));
  for (std::size_t i = 0; i < ds.samples.size(); ++i) write_raster(tmp / sample_file_name(i), sample_to_raster(ds.samples[i]));
  fs::remove_all(target, ec);
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot move dataset into '" + target.string() + "': " + ec.message());
}

inline CalibrationDataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' does not exist");
  const json meta = read_json(dir / "metadata.json");
  CalibrationDataset ds;
  try {
    if (meta.at("format") != "tactile-dataset" || meta.at("version") != 1)
      throw FormatError("'" + dir.string() + "': not a dataset directory");
    SurfaceConfig sc;
    detail::StrictReader sr(meta.at("surface"), "surface");
    read(sr, sc);
    sr.finish();
    detail::StrictReader cr(meta.at("camera"), "camera");
    read(cr, ds.camera);
    cr.finish();
    detail::StrictReader rr(meta.at("render"), "render");
    read(rr, ds.render_config);
    rr.finish();
    const json& o = meta.at("options");
    detail::StrictReader orr(o, "options");
    read_probe(orr, ds.options);
    orr.get("test_fraction", ds.options.test_fraction);
    orr.get("prior_band_width", ds.options.prior_band_width);
    orr.get("prior_weight", ds.options.prior_weight);
    orr.finish();
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.surface = make_sensor_surface(sc.shape, {ds.camera.width, ds.camera.height, sc.pixel_pitch}, sc.min_normal_z);
    const bool has_nir = meta.at("has_nir").get<bool>();
    const auto n = meta.at("n_samples").get<std::size_t>();
    const json& probes = meta.at("probes");
    const json& split = meta.at("split");
    if (probes.size() != n || split.size() != n) throw FormatError("'" + dir.string() + "': sample count mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      const std::string tag = split[i].get<std::string>();
      if (tag != "train" && tag != "test") throw FormatError("'" + dir.string() + "': bad split tag");
      ds.split.push_back(tag == "train" ? Split::Train : Split::Test);
      const RasterFile r = read_raster(dir / sample_file_name(i));
      if (r.channels.size() != sample_channel_names().size() || !r.has_mask || r.width != ds.surface.grid.width ||
          r.height != ds.surface.grid.height)
        throw FormatError("'" + sample_file_name(i) + "': unexpected raster layout");
      CalibrationSample s;
      for (int c = 0; c < kFrameChannels; ++c) s.frame.channels[static_cast<std::size_t>(c)] = r.channels[static_cast<std::size_t>(c)];
      s.frame.mask = r.mask;
      s.frame.has_nir = has_nir;
      s.gt_normals = NormalMap(r.width, r.height);
      s.contact_mask = Mask(r.width, r.height, 0);
      s.deformed_heights = RasterGrid(r.width, r.height, 0.0, false);
      for (std::size_t p = 0; p < r.mask.size(); ++p) {
        const double x = r.channels[6][p], y = r.channels[7][p], z = r.channels[8][p];
        if (std::isfinite(x) && std::isfinite(y) && std::isfinite(z)) {
          // float32 storage keeps |n|^2 within ~1e-7 of one; only rescale
          // normals outside the invariant tolerance so a re-save is lossless.
          const double norm2 = x * x + y * y + z * z;
          if (!(norm2 > 0.0) || !(z > 0.0)) throw FormatError("'" + sample_file_name(i) + "': invalid normal");
          const double len = std::abs(norm2 - 1.0) <= 1e-6 ? 1.0 : std::sqrt(norm2);
          s.gt_normals.nx[p] = x / len;
          s.gt_normals.ny[p] = y / len;
          s.gt_normals.nz[p] = z / len;
          s.gt_normals.mask[p] = 1;
        }
        s.contact_mask[p] = r.channels[9][p] > 0.5 ? 1 : 0;
        const double d = r.channels[10][p];
        if (std::isfinite(d)) {
          s.deformed_heights.values[p] = d;
          s.deformed_heights.mask[p] = 1;
        }
      }
      const json& pj = probes[i];
      s.probe.center = detail::vec_from(pj.at("center"), "probes");
      s.probe.radius = pj.at("radius").get<double>();
      s.probe.indentation = pj.at("indentation").get<double>();
      s.z_prior_edge = extract_boundary_prior(ds.surface, s.frame.mask, ds.options.prior_band_width, ds.options.prior_weight);
      ds.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw FormatError("'" + dir.string() + "': malformed metadata: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError("'" + dir.string() + "': malformed metadata: " + e.what());
  }
  return ds;
}

}  // namespace tactile
