#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "tactile/dataset.hpp"
#include "tactile/io.hpp"
#include "tactile/render.hpp"

using namespace tactile;

namespace {

RenderConfig far_lights() {
  RenderConfig c;
  c.illuminants.clear();
  const double d = 1e9;
  for (auto ch : {LightChannel::R, LightChannel::G, LightChannel::B, LightChannel::NIR})
    c.illuminants.push_back({Eigen::Vector3d(0, 0, d), ch, 0.5, Falloff::None});
  return c;
}

CameraModel camera_for(const GridGeometry& g) {
  CameraModel cam;
  cam.width = g.width;
  cam.height = g.height;
  cam.cx = 0.5 * (g.width - 1);
  cam.cy = 0.5 * (g.height - 1);
  return cam;
}

SurfaceShape cap40() {
  SurfaceShape s;
  s.kind = SurfaceKind::SphereCap;
  s.radius = 40;
  return s;
}

RenderConfig single_light(const Eigen::Vector3d& pos, Falloff f = Falloff::None) {
  RenderConfig c;
  c.illuminants = {{pos, LightChannel::R, 1.0, f}, {Eigen::Vector3d(0, 0, 100), LightChannel::NIR, 0.0, f}};
  c.ambient.fill(0.0);
  return c;
}

}  // namespace

TEST(Shade, OverheadOnAxis) {
  const RenderConfig c = single_light({0, 0, 50});
  EXPECT_DOUBLE_EQ(shade_pixel({0, 0, 1}, {0, 0, 0}, c, 0), 1.0);
}

TEST(Shade, BackFacingIsDark) {
  const RenderConfig c = single_light({0, 0, 50});
  EXPECT_DOUBLE_EQ(shade_pixel(Eigen::Vector3d(1, 0, -1).normalized(), {0, 0, 0}, c, 0), 0.0);
  EXPECT_DOUBLE_EQ(shade_pixel(Eigen::Vector3d(0, 0, -1), {0, 0, 0}, c, 0), 0.0);
}

TEST(Shade, LambertCosine) {
  const RenderConfig c = single_light({50, 0, 50});
  EXPECT_NEAR(shade_pixel({0, 0, 1}, {0, 0, 0}, c, 0), std::cos(M_PI / 4), 1e-12);
  EXPECT_NEAR(shade_pixel({0, 0, 1}, {0, 0, 0}, c, 0), 0.7071, 1e-4);
}

TEST(Shade, InverseSquareInTenMillimetreUnits) {
  const RenderConfig c = single_light({0, 0, 20}, Falloff::InverseSquare);
  EXPECT_NEAR(shade_pixel_unclamped({0, 0, 1}, {0, 0, 0}, c, 0), 0.25, 1e-12);
}

TEST(Shade, NirGainsAndCrosstalk) {
  RenderConfig c;
  c.illuminants = {{Eigen::Vector3d(0, 0, 10), LightChannel::NIR, 0.5, Falloff::None},
                   {Eigen::Vector3d(0, 0, 10), LightChannel::G, 0.0, Falloff::None}};
  c.ambient.fill(0.0);
  EXPECT_DOUBLE_EQ(shade_pixel({0, 0, 1}, {0, 0, 0}, c, 0), 0.0);  // no cross-talk by default
  EXPECT_NEAR(shade_pixel({0, 0, 1}, {0, 0, 0}, c, 3), 0.5, 1e-12);
  EXPECT_NEAR(shade_pixel({0, 0, 1}, {0, 0, 0}, c, 4), 0.5 * 0.97, 1e-12);
  EXPECT_NEAR(shade_pixel({0, 0, 1}, {0, 0, 0}, c, 5), 0.5 * 0.94, 1e-12);
  c.channel_response(0, 3) = 0.2;
  EXPECT_NEAR(shade_pixel({0, 0, 1}, {0, 0, 0}, c, 0), 0.1, 1e-12);
}

TEST(Shade, RejectsNonUnitNormal) {
  const RenderConfig c = single_light({0, 0, 50});
  EXPECT_THROW(shade_pixel({0, 0, 1.01}, {0, 0, 0}, c, 0), ContractViolation);
  EXPECT_NO_THROW(shade_pixel({0, 0, 1.0 + 5e-7}, {0, 0, 0}, c, 0));
}

TEST(Shade, MonotoneInAlbedo) {
  RenderConfig c;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d n(g(rng), g(rng), std::abs(g(rng)) + 0.1);
    n.normalize();
    const Eigen::Vector3d p(g(rng), g(rng), 0.0);
    for (int ch = 0; ch < kFrameChannels; ++ch) {
      c.albedo = 0.4;
      const double lo = shade_pixel_unclamped(n, p, c, ch);
      c.albedo = 0.8;
      EXPECT_GE(shade_pixel_unclamped(n, p, c, ch), lo);
    }
  }
}

TEST(Render, FlatPlaneUniform) {
  const GridGeometry g{40, 30, 0.1};
  const SensorSurface s = make_sensor_surface(SurfaceShape{}, g);
  const IndentResult flat = indent_surface(s, place_probe(s.shape, 0, 0, 2.5, 0.0));
  const TactileFrame f = render_frame(flat.deformed, flat.normals, camera_for(g), far_lights(), g);
  for (const auto& ch : f.channels)
    for (std::size_t i = 0; i < ch.size(); ++i) EXPECT_NEAR(ch[i], ch[0], 1e-9);
}

TEST(Render, DeterministicForSeed) {
  const GridGeometry g{60, 40, 0.1};
  const SensorSurface s = make_sensor_surface(cap40(), g);
  const IndentResult r = indent_surface(s, place_probe(s.shape, 0, 0, 2.5, 0.5));
  RenderConfig c;
  c.noise_sigma.fill(0.01);
  c.rng_seed = 77;
  const TactileFrame a = render_frame(r.deformed, r.normals, camera_for(g), c, g);
  const TactileFrame b = render_frame(r.deformed, r.normals, camera_for(g), c, g);
  EXPECT_EQ(a, b);
  c.rng_seed = 78;
  EXPECT_NE(a, render_frame(r.deformed, r.normals, camera_for(g), c, g));
  for (const auto& ch : a.channels)
    for (double v : ch.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
}

TEST(Render, BrightestRedOnBumpFacingRedLed) {
  const GridGeometry g{160, 120, 0.05};
  const SensorSurface s = make_sensor_surface(cap40(), g);
  const SphereProbe probe = place_probe(s.shape, 0, 0, 2.5, 0.8);
  const IndentResult r = indent_surface(s, probe);
  const RenderConfig c;  // R LED sits on the +x axis
  const TactileFrame f = render_frame(r.deformed, r.normals, camera_for(g), c, g);
  std::size_t best = 0;
  for (std::size_t i = 0; i < f.channels[0].size(); ++i)
    if (f.mask[i] && f.channels[0][i] > f.channels[0][best]) best = i;
  const int bx = static_cast<int>(best % g.width), by = static_cast<int>(best / g.width);
  EXPECT_TRUE(r.contact(bx, by));
  EXPECT_GT(g.x_mm(bx), probe.center.x());
}

TEST(Render, IdenticalNormalsAndDirectionsShadeIdentically) {
  const RenderConfig c = far_lights();
  const Eigen::Vector3d n = Eigen::Vector3d(0.2, -0.1, 1).normalized();
  for (int ch = 0; ch < kFrameChannels; ++ch)
    EXPECT_EQ(shade_pixel(n, {1, 2, 0}, c, ch), shade_pixel(n, {1, 2, 0}, c, ch));
}

TEST(Render, ShapeMismatchRejected) {
  const GridGeometry g{40, 30, 0.1};
  const SensorSurface s = make_sensor_surface(SurfaceShape{}, g);
  const IndentResult r = indent_surface(s, place_probe(s.shape, 0, 0, 2.5, 0.0));
  EXPECT_THROW(render_frame(r.deformed, r.normals, CameraModel{}, RenderConfig{}, g), ContractViolation);
}

// --- dataset ---

namespace {

CalibrationDataset small_dataset(std::size_t n, std::uint64_t seed, double noise = 0.01) {
  const GridGeometry g{120, 90, 0.1};
  RenderConfig c;
  c.noise_sigma.fill(noise);
  return generate_calibration_dataset(make_sensor_surface(cap40(), g), camera_for(g), c, n, DatasetOptions{}, seed);
}

}  // namespace

TEST(Dataset, FiftySamplesEightyTwentySplit) {
  const CalibrationDataset ds = small_dataset(50, 1);
  EXPECT_EQ(ds.samples.size(), 50u);
  EXPECT_EQ(ds.indices(Split::Test).size(), 10u);
  EXPECT_EQ(ds.indices(Split::Train).size(), 40u);
  for (const auto& s : ds.samples) {
    EXPECT_DOUBLE_EQ(s.probe.radius, 2.5);
    EXPECT_TRUE(is_subset(s.contact_mask, s.frame.mask));
    EXPECT_TRUE(s.gt_normals.satisfies_invariants());
    EXPECT_GT(count(s.contact_mask), 0u);
    EXPECT_GE(s.probe.indentation, 0.3);
    EXPECT_LE(s.probe.indentation, 1.0);
  }
}

TEST(Dataset, ZeroIndentationSampleMatchesUndeformedRender) {
  const GridGeometry g{80, 60, 0.1};
  const SensorSurface s = make_sensor_surface(cap40(), g);
  DatasetOptions o;
  o.indentation_min = o.indentation_max = 0.0;
  const RenderConfig c;
  const CalibrationDataset ds = generate_calibration_dataset(s, camera_for(g), c, 1, o, 3);
  ASSERT_EQ(ds.samples.size(), 1u);
  EXPECT_EQ(count(extract_contact_mask(ds.samples[0])), 0u);
  const IndentResult base = indent_surface(s, ds.samples[0].probe);
  EXPECT_EQ(ds.samples[0].frame, render_frame(s.heights, base.normals, camera_for(g), c, g));
}

TEST(Dataset, DeterministicBytes) {
  const CalibrationDataset a = small_dataset(4, 9), b = small_dataset(4, 9);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_EQ(encode_raster(sample_to_raster(a.samples[i])), encode_raster(sample_to_raster(b.samples[i])));
  EXPECT_EQ(dataset_metadata(a).dump(), dataset_metadata(b).dump());
}

TEST(Dataset, SampleContentDependsOnlyOnSeedAndIndex) {
  const CalibrationDataset five = small_dataset(5, 21), eight = small_dataset(8, 21);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(five.samples[i].frame, eight.samples[i].frame);
    // Re-rendering sample i alone reproduces it.
    const CalibrationSample again = render_sample(eight.surface, eight.camera, eight.render_config, eight.samples[i].probe,
                                                  eight.options, detail::splitmix64(sample_seed(21, i)));
    EXPECT_EQ(again.frame, eight.samples[i].frame);
  }
}

TEST(Dataset, PlaneContactAreaMatchesDisc) {
  const GridGeometry g{200, 200, 0.02};
  const SensorSurface s = make_sensor_surface(SurfaceShape{}, g);
  const CalibrationSample smp =
      render_sample(s, camera_for(g), RenderConfig{}, place_probe(s.shape, 0.013, -0.007, 2.5, 0.5), DatasetOptions{}, 1);
  const double expect = M_PI * std::pow(1.5 / g.pixel_pitch, 2);
  const double boundary = 2 * M_PI * 1.5 / g.pixel_pitch;
  const auto n = static_cast<double>(count(extract_contact_mask(smp)));
  // Pixel-centre rasterisation of a disc: the count may differ from the area by a few boundary pixels.
  EXPECT_NEAR(n, expect, std::max(4.0, 0.02 * boundary));
}

TEST(Dataset, Preconditions) {
  const GridGeometry g{40, 30, 0.1};
  const SensorSurface s = make_sensor_surface(cap40(), g);
  DatasetOptions o;
  EXPECT_THROW(generate_calibration_dataset(s, camera_for(g), RenderConfig{}, 0, o, 1), ContractViolation);
  o.indentation_max = 3.0;
  EXPECT_THROW(generate_calibration_dataset(s, camera_for(g), RenderConfig{}, 1, o, 1), ContractViolation);
}

TEST(Dataset, SaveLoadRoundTrip) {
  const CalibrationDataset ds = small_dataset(5, 4);
  const auto dir = std::filesystem::temp_directory_path() / "tactile_test_dataset";
  save_dataset(dir, ds);
  const CalibrationDataset back = load_dataset(dir);
  ASSERT_EQ(back.samples.size(), ds.samples.size());
  EXPECT_EQ(back.split, ds.split);
  EXPECT_EQ(back.surface.heights, ds.surface.heights);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& a = ds.samples[i];
    const auto& b = back.samples[i];
    EXPECT_EQ(a.frame.mask, b.frame.mask);
    EXPECT_EQ(a.contact_mask, b.contact_mask);
    EXPECT_EQ(a.gt_normals.mask, b.gt_normals.mask);
    EXPECT_TRUE(b.gt_normals.satisfies_invariants());
    for (std::size_t p = 0; p < a.frame.mask.size(); ++p) {
      EXPECT_NEAR(a.frame.channels[3][p], b.frame.channels[3][p], 1e-7);
      EXPECT_NEAR(a.gt_normals.nx[p], b.gt_normals.nx[p], 1e-6);
    }
    EXPECT_EQ(a.probe.center, b.probe.center);
    EXPECT_EQ(a.z_prior_edge.entries.size(), b.z_prior_edge.entries.size());
  }
  // Saving what was loaded reproduces the files exactly.
  const auto dir2 = std::filesystem::temp_directory_path() / "tactile_test_dataset2";
  save_dataset(dir2, back);
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    EXPECT_EQ(read_file(dir / sample_file_name(i)), read_file(dir2 / sample_file_name(i)));
  EXPECT_EQ(read_file(dir / "metadata.json"), read_file(dir2 / "metadata.json"));
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}
