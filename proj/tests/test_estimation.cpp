#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"
#include "tactile/estimate.hpp"
#include "tactile/io.hpp"
#include "tactile/train.hpp"

using namespace tactile;
using namespace tactile::testing;

namespace {

PositionalEncodingConfig no_encoding() { return {0, false}; }

PsnnModel tiny_model(std::uint64_t seed, double dropout = 0.0) {
  return make_psnn(ChannelMode::RgbNir, no_encoding(), {4, 3, 5}, dropout, seed);
}

CameraModel camera_for(const GridGeometry& g) {
  CameraModel cam;
  cam.width = g.width;
  cam.height = g.height;
  cam.cx = 0.5 * (g.width - 1);
  cam.cy = 0.5 * (g.height - 1);
  return cam;
}

CalibrationDataset plane_dataset(std::size_t n, std::uint64_t seed) {
  const GridGeometry g{100, 80, 0.1};
  return generate_calibration_dataset(make_sensor_surface(SurfaceShape{}, g), camera_for(g), RenderConfig{}, n,
                                      DatasetOptions{}, seed);
}

}  // namespace

// --- positional encoding ---

TEST(Encoding, OriginOneFrequency) {
  EXPECT_EQ(positional_encoding(0, 0, {1, true}), (std::vector<double>{0, 0, 0, 1, 0, 1}));
}

TEST(Encoding, OddSymmetryOfSines) {
  const PositionalEncodingConfig c{4, true};
  const auto a = positional_encoding(1, -1, c), b = positional_encoding(-1, 1, c);
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(a[2 + 4 * k], -b[2 + 4 * k], 1e-15);  // sin u
    EXPECT_NEAR(a[4 + 4 * k], -b[4 + 4 * k], 1e-15);  // sin v
  }
}

TEST(Encoding, Lengths) {
  EXPECT_EQ(positional_encoding(0.3, -0.2, {4, true}).size(), 18u);
  EXPECT_EQ((PositionalEncodingConfig{0, true}.length()), 2u);
  EXPECT_EQ((PositionalEncodingConfig{3, false}.length()), 12u);
}

TEST(Encoding, RejectsOutOfRange) {
  EXPECT_THROW(positional_encoding(1.0001, 0, {}), ContractViolation);
  EXPECT_THROW(positional_encoding(0, -2, {}), ContractViolation);
  EXPECT_NEAR(normalized_coordinate(0, 320), -1.0, 0);
  EXPECT_NEAR(normalized_coordinate(319, 320), 1.0, 1e-15);
}

// --- forward pass ---

TEST(Psnn, ZeroWeightsFallBackToUp) {
  PsnnModel m = tiny_model(1);
  m.params.for_each([](auto& t) { t.setZero(); });
  const std::vector<double> in{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  EXPECT_EQ(psnn_forward(m, in, {}), Eigen::Vector3d(0, 0, 1));
}

TEST(Psnn, HandComputedForward) {
  // widths [6, 2, 2, 2, 3], every value set by hand.
  PsnnModel m = make_psnn(ChannelMode::RgbNir, no_encoding(), {2, 2, 2}, 0.1, 0);
  m.params.weights[0] << 0.1, -0.2, 0.3, 0.0, 0.5, -0.1,  //
      -0.3, 0.2, 0.1, 0.4, -0.2, 0.2;
  m.params.biases[0] << 0.05, -0.1;
  m.params.weights[1] << 1.0, -0.5, 0.25, 0.75;
  m.params.biases[1] << 0.0, 0.1;
  m.params.weights[2] << -0.4, 0.9, 0.6, 0.3;
  m.params.biases[2] << 0.2, -0.05;
  m.params.weights[3] << 0.5, -0.3, 0.2, 0.4, 0.1, 0.7;
  m.params.biases[3] << 0.01, 0.02, 0.3;
  for (int k = 0; k < 3; ++k) {
    m.params.bn_scale[k] << 1.5, 0.8;
    m.params.bn_shift[k] << 0.1, -0.2;
    m.running_mean[k] << 0.05 * (k + 1), -0.02;
    m.running_var[k] << 0.9, 1.2 + 0.1 * k;
  }
  const double in[6] = {0.9, 0.1, 0.4, 0.7, 0.2, 0.6};

  // Scalar evaluation, one neuron at a time.
  double a[6];
  for (int i = 0; i < 6; ++i) a[i] = in[i];
  int n_in = 6;
  for (int k = 0; k < 3; ++k) {
    double next[2];
    for (int j = 0; j < 2; ++j) {
      double z = m.params.biases[k](j);
      for (int i = 0; i < n_in; ++i) z += m.params.weights[k](j, i) * a[i];
      z = (z - m.running_mean[k](j)) / std::sqrt(m.running_var[k](j) + 1e-5) * m.params.bn_scale[k](j) + m.params.bn_shift[k](j);
      next[j] = z > 0 ? z : 0;
    }
    a[0] = next[0];
    a[1] = next[1];
    n_in = 2;
  }
  double raw[3], norm = 0;
  for (int j = 0; j < 3; ++j) {
    raw[j] = m.params.biases[3](j) + m.params.weights[3](j, 0) * a[0] + m.params.weights[3](j, 1) * a[1];
    norm += raw[j] * raw[j];
  }
  norm = std::sqrt(norm);
  const Eigen::Vector3d got = psnn_forward(m, std::span<const double>(in, 6), {});
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(got(j), raw[j] / norm, 1e-9);
}

TEST(Psnn, OutputsAreUnit) {
  const PsnnModel m = make_psnn(ChannelMode::RgbNir, {}, {16, 16, 16}, 0.1, 5);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1), c(-1, 1);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> in(6);
    for (auto& v : in) v = u(rng);
    const auto enc = positional_encoding(c(rng), c(rng), m.encoding);
    EXPECT_NEAR(psnn_forward(m, in, enc).norm(), 1.0, 1e-6);
  }
}

TEST(Psnn, InferenceIsPure) {
  const PsnnModel m = make_psnn(ChannelMode::RgbOnly, {}, {8, 8, 8}, 0.5, 2);
  const std::vector<double> in{0.3, 0.6, 0.2};
  const auto enc = positional_encoding(0.1, -0.4, m.encoding);
  const Eigen::Vector3d a = psnn_forward(m, in, enc, true, 1), b = psnn_forward(m, in, enc, true, 999);
  EXPECT_EQ(a, b);
}

TEST(Psnn, WidthMismatchRejected) {
  const PsnnModel m = make_psnn(ChannelMode::RgbOnly, {}, {8, 8, 8}, 0.1, 2);
  const std::vector<double> six(6, 0.5);
  const auto enc = positional_encoding(0, 0, m.encoding);
  EXPECT_THROW(psnn_forward(m, six, enc), ContractViolation);
  EXPECT_THROW(psnn_forward(m, std::vector<double>(3, 0.5), std::vector<double>(3, 0.0)), ContractViolation);
  EXPECT_EQ(m.input_width(), 3 + 18);
  EXPECT_EQ(make_psnn(ChannelMode::RgbNir, {}, {8, 8, 8}, 0.1, 2).input_width(), 6 + 18);
}

// --- backprop ---

TEST(Psnn, GradientsMatchFiniteDifferences) {
  const PsnnModel m = tiny_model(3);
  EXPECT_LT(psnn_gradient_check(m, random_batch(m, 8, 4), 0), 1e-4);
}

TEST(Psnn, GradientsMatchFiniteDifferencesWithDropout) {
  const PsnnModel m = tiny_model(7, 0.3);
  EXPECT_LT(psnn_gradient_check(m, random_batch(m, 8, 8), 42), 1e-4);
}

TEST(Psnn, LossGradDeterministic) {
  const PsnnModel m = tiny_model(3, 0.2);
  const PsnnBatch b = random_batch(m, 8, 4);
  const PsnnLossGrad x = psnn_loss_grad(m, b, 5), y = psnn_loss_grad(m, b, 5);
  EXPECT_EQ(x.loss, y.loss);
  for (int k = 0; k <= kHiddenLayers; ++k) EXPECT_EQ(x.gradients.weights[k], y.gradients.weights[k]);
}

TEST(Psnn, LossZeroAtOwnOutputs) {
  PsnnModel m = tiny_model(3);
  PsnnBatch b = random_batch(m, 8, 4);
  const PsnnLossGrad stats = psnn_loss_grad(m, b, 0);
  m.running_mean = stats.batch_mean;
  m.running_var = stats.batch_var;
  m.bn_epsilon = 1e-5;
  b.targets = psnn_infer_raw(m, b.inputs);
  EXPECT_LT(psnn_loss_grad(m, b, 0).loss, 1e-12);
}

TEST(Psnn, EmptyBatchRejected) {
  const PsnnModel m = tiny_model(3);
  EXPECT_THROW(psnn_loss_grad(m, PsnnBatch{Eigen::MatrixXd(6, 0), Eigen::MatrixXd(3, 0)}, 0), ContractViolation);
}

// --- training ---

TEST(Train, PlaneDatasetLossDropsTenfold) {
  const CalibrationDataset ds = plane_dataset(5, 2);
  TrainConfig c;
  c.epochs = 40;
  c.batch_size = 256;
  c.hidden_widths = {32, 32, 32};
  c.seed = 3;
  const TrainResult r = psnn_train(ds, c);
  ASSERT_EQ(r.history.size(), 40u);
  EXPECT_LE(r.history.back() * 10.0, r.history.front());
}

TEST(Train, SameSeedSameWeights) {
  const CalibrationDataset ds = plane_dataset(3, 2);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 128;
  c.hidden_widths = {16, 16, 16};
  c.seed = 9;
  EXPECT_EQ(encode_psnn(psnn_train(ds, c).model), encode_psnn(psnn_train(ds, c).model));
  const TrainConfig other = [&] {
    TrainConfig o = c;
    o.seed = 10;
    return o;
  }();
  EXPECT_NE(encode_psnn(psnn_train(ds, c).model), encode_psnn(psnn_train(ds, other).model));
}

TEST(Train, RgbOnlyModelHasThreeChannelInputs) {
  const CalibrationDataset ds = plane_dataset(3, 2);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 64;
  c.hidden_widths = {8, 8, 8};
  c.channel_mode = ChannelMode::RgbOnly;
  const PsnnModel m = psnn_train(ds, c).model;
  EXPECT_EQ(m.input_width(), 3 + static_cast<int>(c.encoding.length()));
  EXPECT_THROW(psnn_forward(m, std::vector<double>(6, 0.5), positional_encoding(0, 0, m.encoding)), ContractViolation);
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = {};
  c.background_sample_fraction = 1.5;
  EXPECT_THROW(c.validate(), ContractViolation);
}

// --- lookup table ---

TEST(Lut, RunningMeanPerBin) {
  LookupTable t = make_lookup_table(16, ChannelMode::RgbOnly);
  const std::vector<double> a{0.50, 0.20, 0.70}, b{0.51, 0.21, 0.71};
  lut_add(t, a, 0.1, 0.0);
  lut_add(t, b, 0.3, 0.0);
  ASSERT_EQ(t.cells.size(), 1u);
  EXPECT_NEAR(t.cells.begin()->second.gx, 0.2, 1e-15);
  EXPECT_EQ(t.cells.begin()->second.gy, 0.0);
  EXPECT_EQ(t.cells.begin()->second.count, 2u);
}

TEST(Lut, TopEdgeIsLastBin) {
  EXPECT_EQ(lut_bin(1.0, 16), 15);
  EXPECT_EQ(lut_bin(0.0, 16), 0);
  EXPECT_EQ(lut_bin(0.9999, 16), 15);
  EXPECT_EQ(lut_bin(-0.1, 16), 0);
}

TEST(Lut, SinglePixelDataset) {
  CalibrationDataset ds = plane_dataset(1, 1);
  ds.split = {Split::Train};
  auto& smp = ds.samples[0];
  smp.contact_mask = Mask(smp.contact_mask.width(), smp.contact_mask.height(), 0);
  smp.contact_mask(50, 40) = 1;
  const LookupTable t = lut_build(ds, 16, ChannelMode::RgbOnly);
  EXPECT_EQ(t.cells.size(), 1u);
}

TEST(Lut, QueryExactNeighbourAndEmpty) {
  LookupTable t = make_lookup_table(8, ChannelMode::RgbOnly);
  EXPECT_THROW(lut_query(t, std::vector<double>{0.1, 0.1, 0.1}), ContractViolation);
  lut_add(t, std::vector<double>{0.1, 0.1, 0.1}, 0.4, -0.2);
  EXPECT_EQ(lut_query(t, std::vector<double>{0.12, 0.05, 0.02}), Eigen::Vector2d(0.4, -0.2));
  EXPECT_EQ(lut_query(t, std::vector<double>{0.26, 0.1, 0.1}), Eigen::Vector2d(0.4, -0.2));
  EXPECT_THROW(lut_query(t, std::vector<double>{0.1, 0.1}), ContractViolation);
}

TEST(Lut, TiesMatchBruteForceLowestKey) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    LookupTable t = make_lookup_table(4, ChannelMode::RgbOnly);
    for (int i = 0; i < 6; ++i) lut_add(t, std::vector<double>{u(rng), u(rng), u(rng)}, u(rng), u(rng));
    const std::vector<double> q{u(rng), u(rng), u(rng)};
    // Brute force over every populated key in ascending order.
    const auto target = lut_decode(t, lut_key(t, q));
    long best = 1 << 30;
    Eigen::Vector2d expect;
    for (const auto& [key, cell] : t.cells) {
      const auto b = lut_decode(t, key);
      long d = 0;
      for (int c = 0; c < 3; ++c) d += std::labs(b[c] - target[c]);
      if (d < best) {
        best = d;
        expect = {cell.gx, cell.gy};
      }
    }
    EXPECT_EQ(lut_query(t, q), expect);
    EXPECT_EQ(lut_query(t, q), lut_query(t, q));
  }
  LookupTable t = make_lookup_table(4, ChannelMode::RgbOnly);
  lut_add(t, std::vector<double>{0.3, 0.1, 0.1}, 1.0, 0.0);  // bins (1,0,0), key 1
  lut_add(t, std::vector<double>{0.1, 0.3, 0.1}, 2.0, 0.0);  // bins (0,1,0), key 4
  EXPECT_EQ(lut_query(t, std::vector<double>{0.3, 0.3, 0.1}).x(), 1.0);  // distance 1 to both
}

TEST(Lut, FineBinsNoWorseThanCoarseOnTrainingData) {
  const GridGeometry g{100, 80, 0.1};
  SurfaceShape s;
  s.kind = SurfaceKind::SphereCap;
  s.radius = 40;
  const CalibrationDataset ds =
      generate_calibration_dataset(make_sensor_surface(s, g), camera_for(g), RenderConfig{}, 6, DatasetOptions{}, 5);
  auto err = [&](int bins) {
    const LookupTable t = lut_build(ds, bins, ChannelMode::RgbOnly);
    double total = 0.0;
    std::size_t n = 0;
    for (auto i : ds.indices(Split::Train)) {
      const GradientError e = mae_gradients(estimate_normal_map(ds.samples[i].frame, t), ds.samples[i].gt_normals,
                                            extract_contact_mask(ds.samples[i]));
      total += e.total * static_cast<double>(e.pixels);
      n += e.pixels;
    }
    return total / static_cast<double>(n);
  };
  EXPECT_LE(err(32), err(8));
}

// --- estimation ---

TEST(Estimate, LutSelfConsistentOnFlatFrame) {
  const CalibrationDataset ds = [] {
    const GridGeometry g{60, 40, 0.1};
    DatasetOptions o;
    o.indentation_min = o.indentation_max = 0.0;
    return generate_calibration_dataset(make_sensor_surface(SurfaceShape{}, g), camera_for(g), RenderConfig{}, 1, o, 1);
  }();
  const auto& smp = ds.samples[0];
  LookupTable t = make_lookup_table(16, ChannelMode::RgbOnly);
  const GradientField gt = normals_to_gradients(smp.gt_normals);
  for (std::size_t i = 0; i < smp.frame.mask.size(); ++i)
    if (smp.frame.mask[i]) {
      const std::vector<double> v{smp.frame.channels[0][i], smp.frame.channels[1][i], smp.frame.channels[2][i]};
      lut_add(t, v, gt.p[i], gt.q[i]);
    }
  const NormalMap est = estimate_normal_map(smp.frame, t);
  EXPECT_TRUE(est.satisfies_invariants());
  std::size_t ok = 0, n = 0;
  for (std::size_t i = 0; i < est.mask.size(); ++i) {
    if (!est.mask[i]) continue;
    ++n;
    const double dot = est.nx[i] * smp.gt_normals.nx[i] + est.ny[i] * smp.gt_normals.ny[i] + est.nz[i] * smp.gt_normals.nz[i];
    if (std::acos(std::min(1.0, dot)) < M_PI / 180.0) ++ok;
  }
  EXPECT_GE(static_cast<double>(ok), 0.99 * static_cast<double>(n));
}

TEST(Estimate, PsnnOutputSatisfiesInvariants) {
  const CalibrationDataset ds = plane_dataset(1, 4);
  const PsnnModel m = make_psnn(ChannelMode::RgbNir, {}, {8, 8, 8}, 0.1, 1);
  EXPECT_TRUE(estimate_normal_map(ds.samples[0].frame, m).satisfies_invariants());
}

TEST(Estimate, ModeMismatchRejected) {
  CalibrationDataset ds = plane_dataset(1, 4);
  TactileFrame f = ds.samples[0].frame;
  f.has_nir = false;
  EXPECT_THROW(estimate_normal_map(f, make_psnn(ChannelMode::RgbNir, {}, {8, 8, 8}, 0.1, 1)), ModeMismatch);
  LookupTable t = make_lookup_table(8, ChannelMode::RgbNir);
  lut_add(t, std::vector<double>(6, 0.5), 0, 0);
  EXPECT_THROW(estimate_normal_map(f, t), ModeMismatch);
  EXPECT_NO_THROW(estimate_normal_map(f, make_psnn(ChannelMode::RgbOnly, {}, {8, 8, 8}, 0.1, 1)));
}
