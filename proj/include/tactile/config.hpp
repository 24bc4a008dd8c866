#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "tactile/camera.hpp"
#include "tactile/dataset.hpp"
#include "tactile/integration.hpp"
#include "tactile/render.hpp"
#include "tactile/surface.hpp"
#include "tactile/train.hpp"

namespace tactile {

using json = nlohmann::json;

namespace detail {

// Strict object reader: missing keys keep their defaults, unknown keys and
// wrongly typed values raise ConfigError naming the full key path.
class StrictReader {
 public:
  StrictReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + display() + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: bad value for '" + child(key) + "': " + e.what());
    }
  }

  template <typename F>
  void object(const char* key, F&& f) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    StrictReader sub(j_.at(key), child(key));
    f(sub);
    sub.finish();
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("config: unknown key '" + child(it.key().c_str()) + "'");
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Eigen::Vector3d vec_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("config: '" + where + "' must be a 3-element array");
  try {
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  } catch (const json::exception&) {
    throw ConfigError("config: '" + where + "' must hold numbers");
  }
}

template <typename F>
auto wrap_enum(F&& f, const std::string& where) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " at '" + where + "'");
  }
}

}  // namespace detail

// --- surface ---------------------------------------------------------------

struct SurfaceConfig {
  SurfaceShape shape{SurfaceKind::SphereCap, 40.0, 30.0, 25.0, 10.0, 0.0};
  double pixel_pitch = 0.05;
  double min_normal_z = 0.2;
};

inline json to_json(const SurfaceConfig& s) {
  return {{"kind", to_string(s.shape.kind)},
          {"radius", s.shape.radius},
          {"semi_axes", json::array({s.shape.semi_a, s.shape.semi_b, s.shape.semi_c})},
          {"apex_height", s.shape.apex_height},
          {"pixel_pitch", s.pixel_pitch},
          {"min_normal_z", s.min_normal_z}};
}

inline void read(detail::StrictReader& r, SurfaceConfig& s) {
  std::string kind = to_string(s.shape.kind);
  r.get("kind", kind);
  s.shape.kind = detail::wrap_enum([&] { return surface_kind_from_string(kind); }, r.child("kind"));
  r.get("radius", s.shape.radius);
  if (r.has("semi_axes")) {
    const Eigen::Vector3d a = detail::vec_from(r.raw("semi_axes"), r.child("semi_axes"));
    s.shape.semi_a = a.x();
    s.shape.semi_b = a.y();
    s.shape.semi_c = a.z();
  }
  r.get("apex_height", s.shape.apex_height);
  r.get("pixel_pitch", s.pixel_pitch);
  r.get("min_normal_z", s.min_normal_z);
  if (!(s.pixel_pitch > 0.0)) throw ConfigError("config: 'surface.pixel_pitch' must be positive");
  if (s.shape.kind != SurfaceKind::Plane && s.shape.kind != SurfaceKind::EllipsoidCap && !(s.shape.radius > 0.0))
    throw ConfigError("config: 'surface.radius' must be positive");
  if (s.shape.kind == SurfaceKind::EllipsoidCap && !(s.shape.semi_a > 0 && s.shape.semi_b > 0 && s.shape.semi_c > 0))
    throw ConfigError("config: 'surface.semi_axes' must be positive");
}

// --- camera ----------------------------------------------------------------

inline json to_json(const CameraModel& c) {
  json rot = json::array();
  for (int i = 0; i < 3; ++i) rot.push_back(json::array({c.rotation(i, 0), c.rotation(i, 1), c.rotation(i, 2)}));
  return {{"fx", c.fx},
          {"fy", c.fy},
          {"cx", c.cx},
          {"cy", c.cy},
          {"rotation", rot},
          {"translation", detail::vec_json(c.translation)},
          {"n_air", c.n_air},
          {"n_medium", c.n_medium},
          {"apply_medium_correction", c.apply_medium_correction},
          {"width", c.width},
          {"height", c.height}};
}

inline void read(detail::StrictReader& r, CameraModel& c) {
  r.get("fx", c.fx);
  r.get("fy", c.fy);
  r.get("cx", c.cx);
  r.get("cy", c.cy);
  if (r.has("rotation")) {
    const json& rot = r.raw("rotation");
    if (!rot.is_array() || rot.size() != 3) throw ConfigError("config: '" + r.child("rotation") + "' must be 3x3");
    for (int i = 0; i < 3; ++i) c.rotation.row(i) = detail::vec_from(rot[i], r.child("rotation")).transpose();
  }
  if (r.has("translation")) c.translation = detail::vec_from(r.raw("translation"), r.child("translation"));
  r.get("n_air", c.n_air);
  r.get("n_medium", c.n_medium);
  r.get("apply_medium_correction", c.apply_medium_correction);
  r.get("width", c.width);
  r.get("height", c.height);
  try {
    c.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

// --- render ----------------------------------------------------------------

inline json to_json(const RenderConfig& c) {
  json lights = json::array();
  for (const auto& l : c.illuminants)
    lights.push_back({{"position", detail::vec_json(l.position)},
                      {"channel", to_string(l.channel)},
                      {"radiant_intensity", l.radiant_intensity},
                      {"falloff", to_string(l.falloff)}});
  json response = json::array();
  for (int i = 0; i < kFrameChannels; ++i) {
    json row = json::array();
    for (int j = 0; j < kLightChannels; ++j) row.push_back(c.channel_response(i, j));
    response.push_back(row);
  }
  return {{"illuminants", lights},
          {"albedo", c.albedo},
          {"ambient", c.ambient},
          {"noise_sigma", c.noise_sigma},
          {"nir_gains", detail::vec_json(c.nir_gains)},
          {"channel_response", response}};
}

inline void read(detail::StrictReader& r, RenderConfig& c) {
  if (r.has("illuminants")) {
    const json& arr = r.raw("illuminants");
    if (!arr.is_array()) throw ConfigError("config: '" + r.child("illuminants") + "' must be an array");
    c.illuminants.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      detail::StrictReader lr(arr[i], r.child("illuminants") + "[" + std::to_string(i) + "]");
      Illuminant l;
      std::string channel = to_string(l.channel), falloff = to_string(l.falloff);
      if (lr.has("position")) l.position = detail::vec_from(lr.raw("position"), lr.child("position"));
      lr.get("channel", channel);
      lr.get("radiant_intensity", l.radiant_intensity);
      lr.get("falloff", falloff);
      lr.finish();
      l.channel = detail::wrap_enum([&] { return light_channel_from_string(channel); }, lr.child("channel"));
      l.falloff = detail::wrap_enum([&] { return falloff_from_string(falloff); }, lr.child("falloff"));
      c.illuminants.push_back(l);
    }
  }
  r.get("albedo", c.albedo);
  r.get("ambient", c.ambient);
  r.get("noise_sigma", c.noise_sigma);
  if (r.has("nir_gains")) c.nir_gains = detail::vec_from(r.raw("nir_gains"), r.child("nir_gains"));
  if (r.has("channel_response")) {
    const json& m = r.raw("channel_response");
    if (!m.is_array() || m.size() != kFrameChannels) throw ConfigError("config: 'render.channel_response' must be 6x4");
    for (int i = 0; i < kFrameChannels; ++i) {
      if (!m[i].is_array() || m[i].size() != kLightChannels)
        throw ConfigError("config: 'render.channel_response' must be 6x4");
      for (int j = 0; j < kLightChannels; ++j) c.channel_response(i, j) = m[i][j].get<double>();
    }
  }
  try {
    c.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

// --- probe / dataset -------------------------------------------------------

inline json probe_json(const DatasetOptions& d) {
  return {{"radius", d.probe_radius},
          {"indentation_min", d.indentation_min},
          {"indentation_max", d.indentation_max},
          {"smooth_crease", d.indent.smooth_crease},
          {"crease_sigma_px", d.indent.sigma_px},
          {"crease_band_px", d.indent.band_px}};
}

inline void read_probe(detail::StrictReader& r, DatasetOptions& d) {
  r.get("radius", d.probe_radius);
  r.get("indentation_min", d.indentation_min);
  r.get("indentation_max", d.indentation_max);
  r.get("smooth_crease", d.indent.smooth_crease);
  r.get("crease_sigma_px", d.indent.sigma_px);
  r.get("crease_band_px", d.indent.band_px);
  if (!(d.probe_radius > 0.0)) throw ConfigError("config: 'probe.radius' must be positive");
  if (!(d.indentation_min >= 0.0 && d.indentation_max >= d.indentation_min && d.indentation_max < d.probe_radius))
    throw ConfigError("config: probe indentation range must satisfy 0 <= min <= max < radius");
}

// --- training ----------------------------------------------------------------

inline json to_json(const PositionalEncodingConfig& e) {
  return {{"n_frequencies", e.n_frequencies}, {"include_raw", e.include_raw}};
}

inline void read(detail::StrictReader& r, PositionalEncodingConfig& e) {
  r.get("n_frequencies", e.n_frequencies);
  r.get("include_raw", e.include_raw);
  if (e.n_frequencies < 0) throw ConfigError("config: 'train.encoding.n_frequencies' must be >= 0");
}

inline json to_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"adam_epsilon", t.adam_epsilon},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"channel_mode", to_string(t.channel_mode)},
          {"background_sample_fraction", t.background_sample_fraction},
          {"hidden_widths", t.hidden_widths},
          {"dropout_rate", t.dropout_rate},
          {"final_learning_rate_fraction", t.final_learning_rate_fraction},
          {"encoding", to_json(t.encoding)}};
}

inline void read(detail::StrictReader& r, TrainConfig& t) {
  r.get("learning_rate", t.learning_rate);
  r.get("beta1", t.beta1);
  r.get("beta2", t.beta2);
  r.get("adam_epsilon", t.adam_epsilon);
  r.get("batch_size", t.batch_size);
  r.get("epochs", t.epochs);
  std::string mode = to_string(t.channel_mode);
  r.get("channel_mode", mode);
  t.channel_mode = detail::wrap_enum([&] { return channel_mode_from_string(mode); }, r.child("channel_mode"));
  r.get("background_sample_fraction", t.background_sample_fraction);
  r.get("hidden_widths", t.hidden_widths);
  r.get("dropout_rate", t.dropout_rate);
  r.get("final_learning_rate_fraction", t.final_learning_rate_fraction);
  r.object("encoding", [&](detail::StrictReader& er) { read(er, t.encoding); });
  try {
    t.validate();
    for (int w : t.hidden_widths) require(w > 0, "train: hidden widths must be positive");
    require(t.dropout_rate >= 0.0 && t.dropout_rate < 1.0, "train: dropout_rate must lie in [0, 1)");
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

// --- integration -------------------------------------------------------------

struct IntegrationSettings {
  double lambda = 1.0;
  int band_width = 10;
  IntegrationConfig solver;  // method, nz_floor, solver options
};

inline json to_json(const IntegrationSettings& s) {
  return {{"lambda", s.lambda},
          {"band_width", s.band_width},
          {"nz_floor", s.solver.nz_floor},
          {"solver", to_string(s.solver.solver.kind)},
          {"tolerance", s.solver.solver.tolerance},
          {"max_iterations", s.solver.solver.max_iterations}};
}

inline void read(detail::StrictReader& r, IntegrationSettings& s) {
  r.get("lambda", s.lambda);
  r.get("band_width", s.band_width);
  r.get("nz_floor", s.solver.nz_floor);
  std::string kind = to_string(s.solver.solver.kind);
  r.get("solver", kind);
  s.solver.solver.kind = detail::wrap_enum([&] { return solver_kind_from_string(kind); }, r.child("solver"));
  r.get("tolerance", s.solver.solver.tolerance);
  r.get("max_iterations", s.solver.solver.max_iterations);
  if (!(s.lambda >= 0.0)) throw ConfigError("config: 'integration.lambda' must be >= 0");
  if (s.band_width < 1) throw ConfigError("config: 'integration.band_width' must be >= 1");
  if (!(s.solver.nz_floor > 0.0)) throw ConfigError("config: 'integration.nz_floor' must be positive");
  if (!(s.solver.solver.tolerance > 0.0)) throw ConfigError("config: 'integration.tolerance' must be positive");
  if (s.solver.solver.max_iterations < 1) throw ConfigError("config: 'integration.max_iterations' must be >= 1");
}

// --- pipeline ----------------------------------------------------------------

struct PathsConfig {
  std::string dataset = "out/dataset";
  std::string model = "out/psnn.bin";
  std::string lut = "out/lut.bin";
  std::string out = "out";
};

/// The whole pipeline configuration: one JSON document, every field defaulted.
struct PipelineConfig {
  SurfaceConfig surface;
  CameraModel camera;
  RenderConfig render;
  DatasetOptions probe;  // probe geometry, indentation range and test split
  std::size_t n_samples = 50;
  TrainConfig train;
  int lut_bins = 16;
  ChannelMode lut_mode = ChannelMode::RgbOnly;
  IntegrationSettings integration;
  PathsConfig paths;
  std::uint64_t seed = 0;

  GridGeometry grid() const { return {camera.width, camera.height, surface.pixel_pitch}; }
  SensorSurface sensor_surface() const { return make_sensor_surface(surface.shape, grid(), surface.min_normal_z); }

  /// Dataset options with the prior band taken from the integration settings.
  DatasetOptions dataset_options() const {
    DatasetOptions d = probe;
    d.prior_band_width = integration.band_width;
    d.prior_weight = integration.lambda;
    return d;
  }
  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }
};

inline json to_json(const PipelineConfig& c) {
  return {{"surface", to_json(c.surface)},
          {"camera", to_json(c.camera)},
          {"render", to_json(c.render)},
          {"probe", probe_json(c.probe)},
          {"dataset", {{"n_samples", c.n_samples}, {"test_fraction", c.probe.test_fraction}}},
          {"train", to_json(c.train)},
          {"lut", {{"bins_per_channel", c.lut_bins}, {"channel_mode", to_string(c.lut_mode)}}},
          {"integration", to_json(c.integration)},
          {"paths", {{"dataset", c.paths.dataset}, {"model", c.paths.model}, {"lut", c.paths.lut}, {"out", c.paths.out}}},
          {"seed", c.seed}};
}

inline PipelineConfig parse_pipeline_config(const json& j) {
  PipelineConfig c;
  detail::StrictReader r(j, "");
  r.object("surface", [&](auto& s) { read(s, c.surface); });
  r.object("camera", [&](auto& s) { read(s, c.camera); });
  r.object("render", [&](auto& s) { read(s, c.render); });
  r.object("probe", [&](auto& s) { read_probe(s, c.probe); });
  r.object("dataset", [&](auto& s) {
    s.get("n_samples", c.n_samples);
    s.get("test_fraction", c.probe.test_fraction);
    if (c.n_samples < 1) throw ConfigError("config: 'dataset.n_samples' must be >= 1");
    if (!(c.probe.test_fraction >= 0.0 && c.probe.test_fraction < 1.0))
      throw ConfigError("config: 'dataset.test_fraction' must lie in [0, 1)");
  });
  r.object("train", [&](auto& s) { read(s, c.train); });
  r.object("lut", [&](auto& s) {
    s.get("bins_per_channel", c.lut_bins);
    std::string mode = to_string(c.lut_mode);
    s.get("channel_mode", mode);
    c.lut_mode = detail::wrap_enum([&] { return channel_mode_from_string(mode); }, s.child("channel_mode"));
    if (c.lut_bins < 1) throw ConfigError("config: 'lut.bins_per_channel' must be >= 1");
  });
  r.object("integration", [&](auto& s) { read(s, c.integration); });
  r.object("paths", [&](auto& s) {
    s.get("dataset", c.paths.dataset);
    s.get("model", c.paths.model);
    s.get("lut", c.paths.lut);
    s.get("out", c.paths.out);
  });
  r.get("seed", c.seed);
  r.finish();
  return c;
}

inline PipelineConfig parse_pipeline_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_pipeline_config(j);
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_pipeline_config(ss.str());
}

}  // namespace tactile
