#pragma once

// Oracles and scenarios shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "tactile/indentation.hpp"
#include "tactile/integration.hpp"
#include "tactile/metrics.hpp"
#include "tactile/psnn.hpp"
#include "tactile/ransac.hpp"

namespace tactile::testing {

inline Mask random_mask(int w, int h, double fill, std::mt19937_64& rng) {
  std::bernoulli_distribution on(fill);
  Mask m(w, h, 0);
  for (auto& v : m.data()) v = on(rng) ? 1 : 0;
  return m;
}

inline GradientField random_gradients(const Mask& mask, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  GradientField f(mask.width(), mask.height());
  f.mask = mask;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      f.p[i] = g(rng);
      f.q[i] = g(rng);
    }
  return f;
}

/// Dense construction of the masked Poisson system written directly from the
/// definition: for each valid pixel, sum over valid 4-neighbours n of
/// (z_n - z_c) = sum of the average gradient along the edge c -> n.
struct DensePoisson {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
};

inline DensePoisson dense_poisson(const GradientField& g) {
  const int w = g.width(), h = g.height();
  std::vector<int> id(g.mask.size(), -1);
  int n = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (g.mask(x, y)) id[static_cast<std::size_t>(y * w + x)] = n++;
  DensePoisson d{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int r = id[static_cast<std::size_t>(y * w + x)];
      if (r < 0) continue;
      auto edge = [&](int nx, int ny, double grad_c, double grad_n, double sign) {
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) return;
        const int c = id[static_cast<std::size_t>(ny * w + nx)];
        if (c < 0) return;
        d.a(r, c) += 1.0;
        d.a(r, r) -= 1.0;
        d.b(r) += sign * 0.5 * (grad_c + grad_n);
      };
      if (x + 1 < w) edge(x + 1, y, g.p(x, y), g.p(x + 1, y), 1.0);
      if (x > 0) edge(x - 1, y, g.p(x, y), g.p(x - 1, y), -1.0);
      if (y + 1 < h) edge(x, y + 1, g.q(x, y), g.q(x, y + 1), 1.0);
      if (y > 0) edge(x, y - 1, g.q(x, y), g.q(x, y - 1), -1.0);
    }
  return d;
}

inline DensePoisson sparse_as_dense(const PoissonSystem& s) {
  DensePoisson d{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.rows()), static_cast<Eigen::Index>(s.unknowns())),
                 Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.rows()))};
  for (std::size_t r = 0; r < s.rows(); ++r) {
    for (std::size_t k = s.row_offsets[r]; k < s.row_offsets[r + 1]; ++k)
      d.a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s.columns[k])) += s.values[k];
    d.b(static_cast<Eigen::Index>(r)) = s.rhs[r];
  }
  return d;
}

/// Largest entry-wise difference between the sparse system and the dense
/// oracle over `n_masks` random masks no larger than 16 x 16.
inline double poisson_oracle_gap(int n_masks, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim(1, 16);
  std::uniform_real_distribution<double> fill(0.3, 1.0);
  double worst = 0.0;
  for (int t = 0; t < n_masks; ++t) {
    Mask m = random_mask(dim(rng), dim(rng), fill(rng), rng);
    if (count(m) == 0) m[0] = 1;
    const GradientField g = random_gradients(m, rng);
    const DensePoisson ref = dense_poisson(g);
    const DensePoisson got = sparse_as_dense(assemble_poisson(g));
    if (got.a.rows() != ref.a.rows() || got.a.cols() != ref.a.cols()) return INFINITY;
    worst = std::max({worst, (got.a - ref.a).cwiseAbs().maxCoeff(), (got.b - ref.b).cwiseAbs().maxCoeff()});
  }
  return worst;
}

// --- analytic integration scenes ---

inline NormalMap normals_from_slopes(int w, int h, const auto& slope) {
  NormalMap n(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector2d g = slope(x, y);
      n.set(x, y, normal_from_gradient(g.x(), g.y()));
      n.mask(x, y) = 1;
    }
  return n;
}

inline DepthPrior exact_band_prior(int w, int h, int band, const auto& height) {
  RasterGrid z(w, h, 0.0, true);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) z.values(x, y) = height(x, y);
  return extract_boundary_prior(z, z.mask, band, 1.0, 1.0);
}

/// Max |z - truth| in grid units after integrating an exact field with an
/// exact 10-pixel edge prior on a 64 x 64 grid.
struct AnalyticErrors {
  double paraboloid = 0.0;
  double plane = 0.0;
};

inline AnalyticErrors analytic_integration_errors() {
  const int n = 64;
  auto para_z = [](int x, int y) { return 0.5 * (x * x + y * y); };
  auto para_g = [](int x, int y) { return Eigen::Vector2d(x, y); };
  auto plane_z = [&](int x, int y) { return 0.3 * x - 0.2 * y + 5.0; };
  auto plane_g = [&](int, int) { return Eigen::Vector2d(0.3, -0.2); };
  AnalyticErrors e;
  auto run = [&](const auto& zf, const auto& gf) {
    const NormalMap nm = normals_from_slopes(n, n, gf);
    const DepthPrior prior = exact_band_prior(n, n, 10, zf);
    const DepthMap d = integrate_normals(nm, &prior);
    double worst = 0.0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) worst = std::max(worst, std::abs(d.z(x, y) - zf(x, y)));
    return worst;
  };
  e.paraboloid = run(para_z, para_g);
  e.plane = run(plane_z, plane_g);
  return e;
}

// --- prior ablation on a curved base ---

struct AblationResult {
  double with_prior = 0.0;  // mean depth MAE over seeds, mm
  double no_prior = 0.0;
  double fast_poisson = 0.0;
  double no_prior_mean_aligned = 0.0;  // diagnostic: no-prior after removing the best constant offset
};

inline DepthMap truth_depth(const SensorSurface& s) {
  return {s.heights.values, s.heights.mask, DepthUnit::Millimetres, s.pixel_pitch()};
}

/// SphereCap base, true gradients plus white noise, integrated three ways.
inline AblationResult prior_ablation(const SensorSurface& surface, double sigma, int seeds) {
  AblationResult r;
  const Mask& mask = surface.valid_mask();
  const DepthMap truth = truth_depth(surface);
  const DepthPrior prior = extract_boundary_prior(surface, mask, 10, 1.0);
  NormalMap base(surface.grid.width, surface.grid.height);
  base.mask = mask;
  for (int y = 0; y < surface.grid.height; ++y)
    for (int x = 0; x < surface.grid.width; ++x)
      if (mask(x, y)) base.set(x, y, surface_normal_analytic(surface.shape, surface.grid.x_mm(x), surface.grid.y_mm(y)));
  const GradientField clean = normals_to_gradients(base);
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(s));
    std::normal_distribution<double> g(0.0, sigma);
    NormalMap noisy = base;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) {
        const Eigen::Vector3d nrm = normal_from_gradient(clean.p[i] + g(rng), clean.q[i] + g(rng));
        noisy.nx[i] = nrm.x();
        noisy.ny[i] = nrm.y();
        noisy.nz[i] = nrm.z();
      }
    IntegrationConfig fp;
    fp.method = IntegrationMethod::FastPoisson;
    auto mm = [&](DepthMap d) {
      d.pixel_pitch = surface.pixel_pitch();
      return d;
    };
    const DepthMap with = mm(integrate_normals(noisy, &prior));
    const DepthMap without = mm(integrate_normals(noisy, nullptr));
    const DepthMap rect = mm(integrate_normals(noisy, nullptr, fp));
    r.with_prior += mae_depth(with, truth, mask) / seeds;
    r.no_prior += mae_depth(without, truth, mask) / seeds;
    r.fast_poisson += mae_depth(rect, truth, mask) / seeds;
    // Best constant offset for an L1 error is the median residual.
    const DepthMap wmm = without.to_millimetres();
    std::vector<double> res;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) res.push_back(truth.z[i] - wmm.z[i]);
    std::nth_element(res.begin(), res.begin() + static_cast<std::ptrdiff_t>(res.size() / 2), res.end());
    DepthMap shifted = wmm;
    for (auto& v : shifted.z.data()) v += res[res.size() / 2];
    r.no_prior_mean_aligned += mae_depth(shifted, truth, mask) / seeds;
  }
  return r;
}

// --- sphere press ---

struct PressResult {
  double contact_mae_mm = 0.0;
  double indentation_mm = 0.0;
};

/// Ground-truth normals of a sphere press integrated with the CAD edge prior.
inline PressResult sphere_press(const SensorSurface& surface, double radius, double indentation) {
  const SphereProbe probe = place_probe(surface.shape, 0.0, 0.0, radius, indentation);
  const IndentResult ind = indent_surface(surface, probe);
  const DepthPrior prior = extract_boundary_prior(surface, ind.deformed.mask, 10, 1.0);
  DepthMap d = integrate_normals(ind.normals, &prior, {}, surface.pixel_pitch());
  const DepthMap truth{ind.deformed.values, ind.deformed.mask, DepthUnit::Millimetres, surface.pixel_pitch()};
  return {mae_depth(d, truth, ind.contact), indentation};
}

// --- RANSAC ---

inline Eigen::Matrix3d test_homography() {
  Eigen::Matrix3d h;
  h << 1.02, 0.05, 12.0, -0.03, 0.98, -7.0, 1e-4, -5e-5, 1.0;
  return h;
}

inline CorrespondenceSet homography_pairs(std::uint64_t seed, double outlier_fraction, std::vector<bool>* is_inlier) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 640.0);
  const Eigen::Matrix3d h = test_homography();
  CorrespondenceSet set;
  set.model = TransformModel::Homography;
  const int n = 100;
  const int outliers = static_cast<int>(outlier_fraction * n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d a(u(rng), u(rng) * 0.75);
    Eigen::Vector2d b = apply_transform(h, a);
    const bool inl = i >= outliers;
    if (!inl) b = {u(rng), u(rng) * 0.75};
    set.pairs.emplace_back(a, b);
    if (is_inlier) is_inlier->push_back(inl);
  }
  return set;
}

/// Worst distance between the true and recovered homography over the four
/// corners of a 640 x 480 image.
inline double corner_error(const Eigen::Matrix3d& recovered) {
  const Eigen::Matrix3d truth = test_homography();
  double worst = 0.0;
  for (const Eigen::Vector2d c : {Eigen::Vector2d(0, 0), Eigen::Vector2d(639, 0), Eigen::Vector2d(0, 479), Eigen::Vector2d(639, 479)})
    worst = std::max(worst, (apply_transform(recovered, c) - apply_transform(truth, c)).norm());
  return worst;
}

// --- gradient check ---

/// Max relative error between backprop and central differences over every
/// parameter entry. Relative error is |a - n| / max(|a|, |n|, floor).
inline double psnn_gradient_check(const PsnnModel& model, const PsnnBatch& batch, std::uint64_t dropout_seed,
                                  double step = 1e-4, double floor = 1e-7) {
  const PsnnLossGrad lg = psnn_loss_grad(model, batch, dropout_seed);
  std::vector<double> analytic;
  lg.gradients.for_each([&](const auto& t) {
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) analytic.push_back(t(i, j));
  });
  double worst = 0.0;
  std::size_t k = 0;
  PsnnModel probe = model;
  std::vector<double*> slots;
  probe.params.for_each([&](auto& t) {
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) slots.push_back(&t(i, j));
  });
  for (double* slot : slots) {
    const double keep = *slot;
    *slot = keep + step;
    const double up = psnn_loss_grad(probe, batch, dropout_seed).loss;
    *slot = keep - step;
    const double down = psnn_loss_grad(probe, batch, dropout_seed).loss;
    *slot = keep;
    const double numeric = (up - down) / (2 * step);
    const double a = analytic[k++];
    worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor}));
  }
  return worst;
}

inline PsnnBatch random_batch(const PsnnModel& m, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  PsnnBatch b{Eigen::MatrixXd(m.input_width(), size), Eigen::MatrixXd(3, size)};
  for (int c = 0; c < size; ++c) {
    for (int r = 0; r < m.input_width(); ++r) b.inputs(r, c) = g(rng);
    Eigen::Vector3d t(g(rng), g(rng), std::abs(g(rng)) + 0.2);
    b.targets.col(c) = t.normalized();
  }
  return b;
}

}  // namespace tactile::testing
