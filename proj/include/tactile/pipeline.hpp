#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "tactile/config.hpp"
#include "tactile/estimate.hpp"
#include "tactile/io.hpp"
#include "tactile/metrics.hpp"
#include "tactile/png.hpp"
#include "tactile/pointcloud.hpp"
#include "tactile/train.hpp"

namespace tactile {

enum class PriorMode { None, CadEdges };

inline const char* to_string(PriorMode m) { return m == PriorMode::None ? "none" : "cad-edges"; }
inline PriorMode prior_mode_from_string(const std::string& s) {
  if (s == "none") return PriorMode::None;
  if (s == "cad-edges") return PriorMode::CadEdges;
  throw ConfigError("unknown prior mode '" + s + "' (expected none or cad-edges)");
}

/// Command-line overrides shared by every subcommand.
struct CommandOptions {
  std::optional<std::uint64_t> seed;
  std::optional<ChannelMode> channel_mode;
  PriorMode prior = PriorMode::CadEdges;
  std::optional<std::string> out;
  std::optional<std::string> input;      // frame / sample / depth raster
  std::optional<std::size_t> sample;     // dataset sample index for reconstruct
  std::string estimator = "psnn";        // reconstruct: psnn | lut
  std::vector<std::string> estimators;   // eval: KIND:PATH entries
};

inline PipelineConfig apply_overrides(PipelineConfig cfg, const CommandOptions& opt) {
  if (opt.seed) cfg.seed = *opt.seed;
  return cfg;
}

// --- estimators ---------------------------------------------------------------

using Estimator = std::variant<PsnnModel, LookupTable>;

inline Estimator load_estimator(const std::string& kind, const fs::path& path) {
  if (kind == "psnn") return load_psnn(path);
  if (kind == "lut") return load_lut(path);
  throw ConfigError("unknown estimator kind '" + kind + "' (expected psnn or lut)");
}

inline NormalMap estimate(const TactileFrame& frame, const Estimator& e) {
  return std::visit([&](const auto& m) { return estimate_normal_map(frame, m); }, e);
}

inline ChannelMode estimator_mode(const Estimator& e) {
  return std::visit([](const auto& x) { return x.channel_mode; }, e);
}

inline std::string estimator_label(const Estimator& e) {
  if (const auto* m = std::get_if<PsnnModel>(&e))
    return m->channel_mode == ChannelMode::RgbNir ? "PSNN RGB-NIR" : "PSNN RGB-only";
  const auto& t = std::get<LookupTable>(e);
  return t.channel_mode == ChannelMode::RgbNir ? "LUT RGB-NIR" : "LUT RGB-only";
}

// --- gen-dataset ------------------------------------------------------------------

inline CalibrationDataset make_dataset(const PipelineConfig& cfg) {
  return generate_calibration_dataset(cfg.sensor_surface(), cfg.camera, cfg.render, cfg.n_samples, cfg.dataset_options(),
                                      cfg.seed);
}

inline fs::path cmd_gen_dataset(const PipelineConfig& cfg, const CommandOptions& opt) {
  const fs::path dir = opt.out ? fs::path(*opt.out) : fs::path(cfg.paths.dataset);
  save_dataset(dir, make_dataset(cfg));
  return dir;
}

// --- train / build-lut ----------------------------------------------------------------

inline json training_history_json(const TrainConfig& tc, const TrainResult& r) {
  return {{"channel_mode", to_string(tc.channel_mode)},
          {"seed", tc.seed},
          {"train_config", to_json(tc)},
          {"layer_widths", r.model.layer_widths()},
          {"loss_history", r.history}};
}

inline fs::path cmd_train(const PipelineConfig& cfg, const CommandOptions& opt) {
  const CalibrationDataset ds = load_dataset(cfg.paths.dataset);
  TrainConfig tc = cfg.train_config();
  if (opt.channel_mode) tc.channel_mode = *opt.channel_mode;
  const TrainResult r = psnn_train(ds, tc);
  const fs::path path = opt.out ? fs::path(*opt.out) : fs::path(cfg.paths.model);
  save_psnn(path, r.model);
  write_json(path.string() + ".json", training_history_json(tc, r));
  return path;
}

inline fs::path cmd_build_lut(const PipelineConfig& cfg, const CommandOptions& opt) {
  const CalibrationDataset ds = load_dataset(cfg.paths.dataset);
  const ChannelMode mode = opt.channel_mode.value_or(cfg.lut_mode);
  const LookupTable t = lut_build(ds, cfg.lut_bins, mode, cfg.integration.solver.nz_floor);
  const fs::path path = opt.out ? fs::path(*opt.out) : fs::path(cfg.paths.lut);
  save_lut(path, t);
  return path;
}

// --- reconstruct -----------------------------------------------------------------------

/// Frame from a TRAS file: 3 channels (RGB only) or >= 6 (RGB + NIR first).
inline TactileFrame frame_from_raster(const RasterFile& r) {
  if (!r.has_mask) throw FormatError("frame raster carries no mask");
  if (r.channels.size() != 3 && r.channels.size() < 6) throw FormatError("frame raster needs 3 or at least 6 channels");
  TactileFrame f;
  f.mask = r.mask;
  f.has_nir = r.channels.size() >= 6;
  for (int c = 0; c < kFrameChannels; ++c)
    f.channels[static_cast<std::size_t>(c)] =
        c < static_cast<int>(r.channels.size()) ? r.channels[static_cast<std::size_t>(c)] : Grid<double>(r.width, r.height, 0.0);
  for (const auto& ch : f.channels)
    for (std::size_t i = 0; i < ch.size(); ++i)
      if (f.mask[i] && !(ch[i] >= 0.0 && ch[i] <= 1.0)) throw FormatError("frame intensity outside [0, 1]");
  return f;
}

struct Reconstruction {
  NormalMap normals;
  DepthMap depth;  // millimetres
  std::size_t clamped_pixels = 0;
};

inline Reconstruction reconstruct_frame(const PipelineConfig& cfg, const TactileFrame& frame, const Estimator& est,
                                        PriorMode prior_mode, IntegrationMethod method = IntegrationMethod::Poisson) {
  const SensorSurface surface = cfg.sensor_surface();
  if (!frame.mask.same_shape(surface.valid_mask())) throw ContractViolation("reconstruct: frame does not match the sensor grid");
  Reconstruction r;
  r.normals = estimate(frame, est);
  std::optional<DepthPrior> prior;
  if (prior_mode == PriorMode::CadEdges && method == IntegrationMethod::Poisson)
    prior = extract_boundary_prior(surface, frame.mask, cfg.integration.band_width, cfg.integration.lambda);
  IntegrationConfig ic = cfg.integration.solver;
  ic.method = method;
  const IntegrationResult res = integrate_normals_detailed(r.normals, prior ? &*prior : nullptr, ic, cfg.surface.pixel_pitch);
  r.depth = res.depth.to_millimetres();
  r.clamped_pixels = res.clamped_pixels;
  return r;
}

inline void write_reconstruction(const fs::path& dir, const Reconstruction& r, double pitch, double nz_floor) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  write_raster(dir / "depth.tras", {r.depth.width(), r.depth.height(), {r.depth.z}, true, r.depth.mask});
  write_ply((dir / "cloud.ply").string(), depth_to_pointcloud(r.depth, pitch));
  write_normals_png(dir / "normals.png", r.normals);
  write_heatmap_png(dir / "depth.png", r.depth.z, r.depth.mask);
  const GradientField g = normals_to_gradients(r.normals, nz_floor);
  Grid<double> mag(g.width(), g.height(), 0.0);
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::hypot(g.p[i], g.q[i]);
  write_heatmap_png(dir / "gradient.png", mag, g.mask);
}

inline fs::path cmd_reconstruct(const PipelineConfig& cfg, const CommandOptions& opt) {
  TactileFrame frame;
  if (opt.input) {
    frame = frame_from_raster(read_raster(*opt.input));
  } else {
    const CalibrationDataset ds = load_dataset(cfg.paths.dataset);
    std::size_t idx;
    if (opt.sample) {
      idx = *opt.sample;
      if (idx >= ds.samples.size()) throw ConfigError("sample index " + std::to_string(idx) + " out of range");
    } else {
      const auto test = ds.indices(Split::Test);
      if (test.empty()) throw ConfigError("dataset has no test samples; pass --sample");
      idx = test.front();
    }
    frame = ds.samples[idx].frame;
  }
  const Estimator est = opt.estimator == "lut" ? load_estimator("lut", cfg.paths.lut) : load_estimator(opt.estimator, cfg.paths.model);
  if (opt.channel_mode) {
    // --channel-mode rgb treats the capture as RGB-only.
    if (*opt.channel_mode == ChannelMode::RgbOnly) frame.has_nir = false;
    if (estimator_mode(est) != *opt.channel_mode)
      throw ModeMismatch(std::string("estimator expects ") + to_string(estimator_mode(est)) + ", --channel-mode is " +
                         to_string(*opt.channel_mode));
  }
  const Reconstruction r = reconstruct_frame(cfg, frame, est, opt.prior);
  const fs::path dir = opt.out ? fs::path(*opt.out) : fs::path(cfg.paths.out) / "reconstruct";
  write_reconstruction(dir, r, cfg.surface.pixel_pitch, cfg.integration.solver.nz_floor);
  return dir;
}

// --- eval ---------------------------------------------------------------------------

inline json to_json(const GradientError& e) {
  return {{"gx_mae", e.gx}, {"gy_mae", e.gy}, {"total_mae", e.total}, {"pixels", e.pixels}};
}

inline json to_json(const MetricsReport& m) {
  json g = json::array(), d = json::array();
  for (const auto& r : m.gradient_rows) g.push_back({{"method", r.method}, {"contact", to_json(r.contact)}, {"all_valid", to_json(r.all_valid)}});
  for (const auto& r : m.depth_rows)
    d.push_back({{"method", r.method}, {"contact_mae_mm", r.contact_mae_mm}, {"overall_mae_mm", r.overall_mae_mm}});
  return {{"gradient_mae", g},
          {"depth_mae", d},
          {"test_samples", m.test_samples},
          {"contact_pixels", m.contact_pixels},
          {"clamped_pixels", m.clamped_pixels}};
}

inline std::string metrics_table(const MetricsReport& m) {
  std::string out = "Gradient error on contact pixels (MAE)\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %12s %12s %12s\n", "Method", "Gx error", "Gy error", "Total error");
  out += buf;
  for (const auto& r : m.gradient_rows) {
    std::snprintf(buf, sizeof buf, "%-24s %12.4f %12.4f %12.4f\n", r.method.c_str(), r.contact.gx, r.contact.gy, r.contact.total);
    out += buf;
  }
  out += "\nDepth error (MAE, mm)\n";
  std::snprintf(buf, sizeof buf, "%-32s %12s %12s\n", "Method", "Contact", "Overall");
  out += buf;
  for (const auto& r : m.depth_rows) {
    std::snprintf(buf, sizeof buf, "%-32s %12.4f %12.4f\n", r.method.c_str(), r.contact_mae_mm, r.overall_mae_mm);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "\nTest samples: %zu   contact pixels: %zu   clamped pixels: %zu\n", m.test_samples,
                m.contact_pixels, m.clamped_pixels);
  out += buf;
  return out;
}

struct NamedEstimator {
  std::string name;
  Estimator estimator;
};

/// Gradient rows for every estimator, depth rows (fast Poisson, Poisson
/// without prior, Poisson with CAD prior) for the first one. Test split only.
inline MetricsReport evaluate(const PipelineConfig& cfg, const CalibrationDataset& ds, const std::vector<NamedEstimator>& ests) {
  using clock = std::chrono::steady_clock;
  const auto test = ds.indices(Split::Test);
  if (test.empty()) throw ConfigError("eval: dataset has no test samples");
  if (ests.empty()) throw ConfigError("eval: no estimators given");
  MetricsReport rep;
  rep.test_samples = test.size();
  const double nz_floor = cfg.integration.solver.nz_floor;

  std::vector<Mask> contact;
  for (auto s : test) {
    contact.push_back(extract_contact_mask(ds.samples[s]));
    rep.contact_pixels += count(contact.back());
  }
  auto pooled = [](std::vector<GradientError>& parts) {
    GradientError e;
    for (const auto& p : parts) {
      e.gx += p.gx * static_cast<double>(p.pixels);
      e.gy += p.gy * static_cast<double>(p.pixels);
      e.pixels += p.pixels;
    }
    e.gx /= static_cast<double>(e.pixels);
    e.gy /= static_cast<double>(e.pixels);
    e.total = e.gx + e.gy;
    return e;
  };

  std::vector<NormalMap> first_normals;
  for (std::size_t k = 0; k < ests.size(); ++k) {
    const auto t0 = clock::now();
    std::vector<GradientError> c_parts, v_parts;
    for (std::size_t j = 0; j < test.size(); ++j) {
      const auto& smp = ds.samples[test[j]];
      NormalMap est = estimate(smp.frame, ests[k].estimator);
      if (count(contact[j]) > 0) c_parts.push_back(mae_gradients(est, smp.gt_normals, contact[j], nz_floor));
      v_parts.push_back(mae_gradients(est, smp.gt_normals, smp.frame.mask, nz_floor));
      if (k == 0) first_normals.push_back(std::move(est));
    }
    if (c_parts.empty()) throw ConfigError("eval: test split has no contact pixels");
    rep.gradient_rows.push_back({ests[k].name, pooled(c_parts), pooled(v_parts)});
    rep.runtimes_s["estimate " + ests[k].name] = std::chrono::duration<double>(clock::now() - t0).count();
  }

  struct Variant {
    const char* name;
    IntegrationMethod method;
    bool prior;
  };
  const Variant variants[] = {{"Fast Poisson (rectangular)", IntegrationMethod::FastPoisson, false},
                              {"Poisson, no prior", IntegrationMethod::Poisson, false},
                              {"Poisson, CAD edge prior", IntegrationMethod::Poisson, true}};
  IntegrationConfig ic = cfg.integration.solver;
  for (const auto& v : variants) {
    const auto t0 = clock::now();
    double sc = 0.0, so = 0.0;
    std::size_t nc = 0;
    for (std::size_t j = 0; j < test.size(); ++j) {
      const auto& smp = ds.samples[test[j]];
      ic.method = v.method;
      const IntegrationResult res = integrate_normals_detailed(first_normals[j], v.prior ? &smp.z_prior_edge : nullptr, ic,
                                                               cfg.surface.pixel_pitch);
      if (v.prior) rep.clamped_pixels += res.clamped_pixels;
      const DepthMap truth{smp.deformed_heights.values, smp.deformed_heights.mask, DepthUnit::Millimetres,
                           cfg.surface.pixel_pitch};
      so += mae_depth(res.depth, truth, smp.frame.mask);
      if (count(contact[j]) > 0) {
        sc += mae_depth(res.depth, truth, contact[j]);
        ++nc;
      }
    }
    rep.depth_rows.push_back({v.name, sc / static_cast<double>(nc), so / static_cast<double>(test.size())});
    rep.runtimes_s[std::string("integrate ") + v.name] = std::chrono::duration<double>(clock::now() - t0).count();
  }
  return rep;
}

inline std::vector<NamedEstimator> resolve_estimators(const PipelineConfig& cfg, const CommandOptions& opt) {
  std::vector<NamedEstimator> out;
  if (opt.estimators.empty()) {
    for (const auto& [kind, path] : {std::pair<std::string, std::string>{"psnn", cfg.paths.model}, {"lut", cfg.paths.lut}})
      if (fs::exists(path)) {
        Estimator e = load_estimator(kind, path);
        out.push_back({estimator_label(e), std::move(e)});
      }
    if (out.empty()) throw IoError("eval: neither '" + cfg.paths.model + "' nor '" + cfg.paths.lut + "' exists");
    return out;
  }
  for (const auto& spec : opt.estimators) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw ConfigError("estimator '" + spec + "' must be KIND:PATH");
    Estimator e = load_estimator(spec.substr(0, colon), spec.substr(colon + 1));
    out.push_back({estimator_label(e), std::move(e)});
  }
  return out;
}

inline fs::path cmd_eval(const PipelineConfig& cfg, const CommandOptions& opt) {
  const CalibrationDataset ds = load_dataset(cfg.paths.dataset);
  const MetricsReport rep = evaluate(cfg, ds, resolve_estimators(cfg, opt));
  const fs::path dir = opt.out ? fs::path(*opt.out) : fs::path(cfg.paths.out) / "eval";
  std::error_code ec;
  fs::create_directories(dir, ec);
  write_json(dir / "metrics.json", to_json(rep));
  write_file(dir / "metrics.txt", metrics_table(rep));
  write_json(dir / "timings.json", json(rep.runtimes_s));
  return dir;
}

// --- export-ply / plot -------------------------------------------------------------------

inline DepthMap depth_from_raster(const RasterFile& r, double pitch) {
  if (r.channels.size() != 1 || !r.has_mask) throw FormatError("depth raster must have one channel and a mask");
  return {r.channels[0], r.mask, DepthUnit::Millimetres, pitch};
}

inline fs::path cmd_export_ply(const PipelineConfig& cfg, const CommandOptions& opt) {
  const fs::path in = opt.input ? fs::path(*opt.input) : fs::path(cfg.paths.out) / "reconstruct" / "depth.tras";
  const DepthMap d = depth_from_raster(read_raster(in), cfg.surface.pixel_pitch);
  const fs::path out = opt.out ? fs::path(*opt.out) : fs::path(in).replace_extension(".ply");
  if (out.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(out.parent_path(), ec);
  }
  write_ply(out.string(), depth_to_pointcloud(d, cfg.surface.pixel_pitch));
  return out;
}

/// One viridis heatmap per raster channel; without --input, the first test
/// sample of the dataset is plotted with 16-bit intensity PNGs as well.
inline fs::path cmd_plot(const PipelineConfig& cfg, const CommandOptions& opt) {
  const fs::path dir = opt.out ? fs::path(*opt.out) : fs::path(cfg.paths.out) / "plot";
  std::error_code ec;
  fs::create_directories(dir, ec);
  RasterFile r;
  if (opt.input) {
    r = read_raster(*opt.input);
  } else {
    const CalibrationDataset ds = load_dataset(cfg.paths.dataset);
    const auto test = ds.indices(Split::Test);
    const std::size_t idx = opt.sample.value_or(test.empty() ? 0 : test.front());
    if (idx >= ds.samples.size()) throw ConfigError("sample index " + std::to_string(idx) + " out of range");
    r = sample_to_raster(ds.samples[idx]);
    const auto& names = sample_channel_names();
    for (int c = 0; c < kFrameChannels; ++c)
      write_channel_png16(dir / (names[static_cast<std::size_t>(c)] + "_16bit.png"), r.channels[static_cast<std::size_t>(c)], r.mask);
  }
  const Mask all(r.width, r.height, 1);
  const bool named = !opt.input;
  for (std::size_t c = 0; c < r.channels.size(); ++c) {
    char name[32];
    std::snprintf(name, sizeof name, "channel_%02zu", c);
    const std::string stem = named ? sample_channel_names()[c] : name;
    write_heatmap_png(dir / (stem + ".png"), r.channels[c], r.has_mask ? r.mask : all);
  }
  return dir;
}

}  // namespace tactile
