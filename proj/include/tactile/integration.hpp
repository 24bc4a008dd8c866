#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <fftw3.h>

#include "tactile/normal_map.hpp"
#include "tactile/surface.hpp"

namespace tactile {

/// Depth slopes p = dz/dx, q = dz/dy in grid units.
struct GradientField {
  Grid<double> p, q;
  Mask mask;
  std::size_t clamped_pixels = 0;  // pixels whose nz was raised to nz_floor

  GradientField() = default;
  GradientField(int width, int height) : p(width, height, 0.0), q(width, height, 0.0), mask(width, height, 0) {}
  int width() const noexcept { return mask.width(); }
  int height() const noexcept { return mask.height(); }
};

inline constexpr double kDefaultNzFloor = 1e-3;

inline GradientField normals_to_gradients(const NormalMap& normals, double nz_floor = kDefaultNzFloor) {
  GradientField g(normals.width(), normals.height());
  g.mask = normals.mask;
  for (std::size_t i = 0; i < g.mask.size(); ++i) {
    if (!g.mask[i]) continue;
    double nz = normals.nz[i];
    if (nz < nz_floor) {
      nz = nz_floor;
      ++g.clamped_pixels;
    }
    g.p[i] = -normals.nx[i] / nz;
    g.q[i] = -normals.ny[i] / nz;
  }
  return g;
}

/// Soft depth constraints. `z` is in grid units (mm / pixel_pitch), the unit
/// the integrator works in.
struct DepthPrior {
  struct Entry {
    std::size_t pixel;  // row-major pixel index
    double z;
  };
  std::vector<Entry> entries;
  double weight = 1.0;  // lambda
  int band_width = 10;
};

/// Collects valid pixels closer than `band_width` to the raster border and
/// pairs them with the CAD height converted to grid units.
inline DepthPrior extract_boundary_prior(const RasterGrid& cad_heights_mm, const Mask& mask, int band_width,
                                         double weight, double pixel_pitch) {
  if (band_width < 1) throw ContractViolation("extract_boundary_prior: band_width must be >= 1");
  if (!(weight >= 0.0)) throw ContractViolation("extract_boundary_prior: weight must be >= 0");
  if (!(pixel_pitch > 0.0)) throw ContractViolation("extract_boundary_prior: pixel_pitch must be positive");
  require(cad_heights_mm.values.same_shape(mask), "extract_boundary_prior: shape mismatch");
  const int w = mask.width();
  const int h = mask.height();
  DepthPrior prior;
  prior.weight = weight;
  prior.band_width = band_width;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int border = std::min({x, y, w - 1 - x, h - 1 - y});
      if (border >= band_width || !mask(x, y) || !cad_heights_mm.valid(x, y)) continue;
      prior.entries.push_back({mask.index(x, y), cad_heights_mm(x, y) / pixel_pitch});
    }
  }
  if (prior.entries.empty()) throw ContractViolation("extract_boundary_prior: band covers no valid pixel");
  return prior;
}

inline DepthPrior extract_boundary_prior(const SensorSurface& surface, const Mask& mask, int band_width = 10,
                                         double weight = 1.0) {
  return extract_boundary_prior(surface.heights, mask, band_width, weight, surface.pixel_pitch());
}

/// Sparse least-squares system over the depths of the valid pixels, stored
/// as CSR. Rows [0, base_rows) are Poisson rows, the rest prior rows.
struct PoissonSystem {
  int width = 0;
  int height = 0;
  std::vector<std::int64_t> pixel_to_unknown;  // -1 for invalid pixels
  std::vector<std::size_t> unknown_to_pixel;
  std::vector<std::size_t> row_offsets{0};
  std::vector<std::size_t> columns;
  std::vector<double> values;
  std::vector<double> rhs;
  std::size_t base_rows = 0;

  std::size_t rows() const noexcept { return rhs.size(); }
  std::size_t unknowns() const noexcept { return unknown_to_pixel.size(); }

  void append_row(const std::vector<std::pair<std::size_t, double>>& entries, double b) {
    for (const auto& [col, val] : entries) {
      columns.push_back(col);
      values.push_back(val);
    }
    row_offsets.push_back(columns.size());
    rhs.push_back(b);
  }
};

/// One Poisson row per valid pixel in row-major order. The left side is the
/// five-point Laplacian reduced to the valid 4-neighbours (centre coefficient
/// = -degree). The right side sums the face fluxes (g_c + g_n)/2 over the
/// same neighbours, which equals the central-difference divergence
/// (p[x+1]-p[x-1])/2 + (q[y+1]-q[y-1])/2 wherever all four neighbours are
/// valid and keeps every masked row consistent with its Neumann stencil.
inline PoissonSystem assemble_poisson(const GradientField& grad) {
  const int w = grad.width();
  const int h = grad.height();
  PoissonSystem sys;
  sys.width = w;
  sys.height = h;
  sys.pixel_to_unknown.assign(grad.mask.size(), -1);
  for (std::size_t i = 0; i < grad.mask.size(); ++i) {
    if (!grad.mask[i]) continue;
    sys.pixel_to_unknown[i] = static_cast<std::int64_t>(sys.unknown_to_pixel.size());
    sys.unknown_to_pixel.push_back(i);
  }
  if (sys.unknown_to_pixel.empty()) throw ContractViolation("assemble_poisson: mask is empty");

  std::vector<std::pair<std::size_t, double>> row;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t c = grad.mask.index(x, y);
      if (!grad.mask[c]) continue;
      row.clear();
      double b = 0.0;
      int degree = 0;
      // Neighbours in ascending pixel index: up, left, right, down.
      const struct { int dx, dy; } nbrs[] = {{0, -1}, {-1, 0}, {1, 0}, {0, 1}};
      const std::size_t centre_col = static_cast<std::size_t>(sys.pixel_to_unknown[c]);
      bool centre_placed = false;
      for (const auto& nb : nbrs) {
        const int nx = x + nb.dx;
        const int ny = y + nb.dy;
        if (!grad.mask.contains(nx, ny) || !grad.mask(nx, ny)) continue;
        const std::size_t n = grad.mask.index(nx, ny);
        const std::size_t col = static_cast<std::size_t>(sys.pixel_to_unknown[n]);
        if (!centre_placed && col > centre_col) {
          row.emplace_back(centre_col, 0.0);
          centre_placed = true;
        }
        row.emplace_back(col, 1.0);
        ++degree;
        if (nb.dx != 0) b += nb.dx * 0.5 * (grad.p[c] + grad.p[n]);
        else b += nb.dy * 0.5 * (grad.q[c] + grad.q[n]);
      }
      if (!centre_placed) row.emplace_back(centre_col, 0.0);
      for (auto& [col, val] : row)
        if (col == centre_col) val = -static_cast<double>(degree);
      sys.append_row(row, b);
    }
  }
  sys.base_rows = sys.rows();
  return sys;
}

/// Appends sqrt(lambda) * I_prior rows with right side sqrt(lambda) * z_prior.
inline PoissonSystem augment_with_prior(PoissonSystem system, const DepthPrior& prior) {
  if (!(prior.weight >= 0.0)) throw ContractViolation("augment_with_prior: weight must be >= 0");
  const double s = std::sqrt(prior.weight);
  for (const auto& e : prior.entries) {
    if (e.pixel >= system.pixel_to_unknown.size() || system.pixel_to_unknown[e.pixel] < 0)
      throw ContractViolation("augment_with_prior: prior pixel is not an unknown of the system");
    if (!std::isfinite(e.z)) throw ContractViolation("augment_with_prior: non-finite prior depth");
    system.append_row({{static_cast<std::size_t>(system.pixel_to_unknown[e.pixel]), s}}, s * e.z);
  }
  return system;
}

enum class DepthUnit { GridUnits, Millimetres };

struct DepthMap {
  Grid<double> z;
  Mask mask;
  DepthUnit unit = DepthUnit::GridUnits;
  double pixel_pitch = 1.0;  // mm per pixel

  int width() const noexcept { return mask.width(); }
  int height() const noexcept { return mask.height(); }

  DepthMap to_millimetres() const {
    if (unit == DepthUnit::Millimetres) return *this;
    DepthMap out = *this;
    for (auto& v : out.z.data()) v *= pixel_pitch;
    out.unit = DepthUnit::Millimetres;
    return out;
  }
};

enum class SolverKind { SparseCholesky, ConjugateGradient };

inline const char* to_string(SolverKind k) { return k == SolverKind::SparseCholesky ? "cholesky" : "cg"; }
inline SolverKind solver_kind_from_string(const std::string& s) {
  if (s == "cholesky") return SolverKind::SparseCholesky;
  if (s == "cg") return SolverKind::ConjugateGradient;
  throw ConfigError("unknown solver '" + s + "'");
}

struct SolverOptions {
  SolverKind kind = SolverKind::SparseCholesky;
  double tolerance = 1e-10;  // relative residual of the normal equations
  int max_iterations = 10000;
};

struct SolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
  std::size_t gauge_fixed_components = 0;
};

namespace detail {

using SparseMat = Eigen::SparseMatrix<double, Eigen::ColMajor, std::int64_t>;

inline SparseMat to_eigen(const PoissonSystem& sys) {
  std::vector<Eigen::Triplet<double, std::int64_t>> trips;
  trips.reserve(sys.values.size());
  for (std::size_t r = 0; r < sys.rows(); ++r)
    for (std::size_t k = sys.row_offsets[r]; k < sys.row_offsets[r + 1]; ++k)
      trips.emplace_back(static_cast<std::int64_t>(r), static_cast<std::int64_t>(sys.columns[k]), sys.values[k]);
  SparseMat a(static_cast<std::int64_t>(sys.rows()), static_cast<std::int64_t>(sys.unknowns()));
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

// 4-connected components of the unknowns; returns component id per unknown.
inline std::vector<std::size_t> unknown_components(const PoissonSystem& sys, std::size_t& count) {
  const std::size_t n = sys.unknowns();
  std::vector<std::size_t> comp(n, SIZE_MAX);
  std::vector<std::size_t> stack;
  count = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] != SIZE_MAX) continue;
    comp[s] = count;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      const std::size_t pix = sys.unknown_to_pixel[u];
      const int x = static_cast<int>(pix % static_cast<std::size_t>(sys.width));
      const int y = static_cast<int>(pix / static_cast<std::size_t>(sys.width));
      const int nbrs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      for (const auto& d : nbrs) {
        const int nx = x + d[0], ny = y + d[1];
        if (nx < 0 || ny < 0 || nx >= sys.width || ny >= sys.height) continue;
        const std::int64_t v = sys.pixel_to_unknown[static_cast<std::size_t>(ny) * sys.width + nx];
        if (v < 0 || comp[static_cast<std::size_t>(v)] != SIZE_MAX) continue;
        comp[static_cast<std::size_t>(v)] = count;
        stack.push_back(static_cast<std::size_t>(v));
      }
    }
    ++count;
  }
  return comp;
}

}  // namespace detail

/// Least-squares depth from the (possibly augmented) system via the normal
/// equations. Components of the mask without an active prior row are pinned
/// during the solve and shifted to zero mean afterwards.
inline DepthMap solve_depth(const PoissonSystem& system, const SolverOptions& options = {},
                            SolveReport* report = nullptr) {
  const std::size_t n = system.unknowns();
  if (n == 0) throw ContractViolation("solve_depth: system has no unknowns");
  const detail::SparseMat a = detail::to_eigen(system);
  const Eigen::Map<const Eigen::VectorXd> b(system.rhs.data(), static_cast<Eigen::Index>(system.rhs.size()));
  detail::SparseMat normal = detail::SparseMat(a.transpose()) * a;
  Eigen::VectorXd atb = a.transpose() * b;

  std::size_t n_comp = 0;
  const auto comp = detail::unknown_components(system, n_comp);
  std::vector<bool> anchored(n_comp, false);
  for (std::size_t r = system.base_rows; r < system.rows(); ++r)
    for (std::size_t k = system.row_offsets[r]; k < system.row_offsets[r + 1]; ++k)
      if (system.values[k] != 0.0) anchored[comp[system.columns[k]]] = true;
  std::vector<bool> pinned(n_comp, false);
  SolveReport local;
  for (std::size_t u = 0; u < n; ++u) {
    const std::size_t c = comp[u];
    if (anchored[c] || pinned[c]) continue;
    pinned[c] = true;
    normal.coeffRef(static_cast<std::int64_t>(u), static_cast<std::int64_t>(u)) += 1.0;
    ++local.gauge_fixed_components;
  }
  normal.makeCompressed();

  const double rhs_norm = atb.norm();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (rhs_norm > 0.0) {
    if (options.kind == SolverKind::SparseCholesky) {
      Eigen::SimplicialLDLT<detail::SparseMat> ldlt(normal);
      if (ldlt.info() != Eigen::Success) throw ConvergenceError("solve_depth: factorisation failed", 1.0, 0);
      z = ldlt.solve(atb);
      // A few steps of iterative refinement against the tolerance.
      for (int step = 0; step < 5; ++step) {
        const Eigen::VectorXd r = atb - normal * z;
        local.relative_residual = r.norm() / rhs_norm;
        local.iterations = step;
        if (local.relative_residual <= options.tolerance) break;
        z += ldlt.solve(r);
      }
      if (!(local.relative_residual <= options.tolerance))
        throw ConvergenceError("solve_depth: direct solve missed the residual tolerance", local.relative_residual,
                               local.iterations);
    } else {
      // Jacobi-preconditioned conjugate gradient, sequential reductions.
      const Eigen::VectorXd inv_diag = normal.diagonal().cwiseInverse();
      Eigen::VectorXd r = atb;
      Eigen::VectorXd s = inv_diag.cwiseProduct(r);
      Eigen::VectorXd d = s;
      double rs = r.dot(s);
      int it = 0;
      double rel = 1.0;
      for (; it < options.max_iterations; ++it) {
        rel = r.norm() / rhs_norm;
        if (rel <= options.tolerance) break;
        const Eigen::VectorXd nd = normal * d;
        const double alpha = rs / d.dot(nd);
        z += alpha * d;
        r -= alpha * nd;
        s = inv_diag.cwiseProduct(r);
        const double rs_next = r.dot(s);
        d = s + (rs_next / rs) * d;
        rs = rs_next;
      }
      rel = r.norm() / rhs_norm;
      local.iterations = it;
      local.relative_residual = rel;
      if (!(rel <= options.tolerance))
        throw ConvergenceError("solve_depth: conjugate gradient did not converge", rel, it);
    }
  }

  // Zero-mean gauge for components that carry no prior.
  std::vector<double> sum(n_comp, 0.0);
  std::vector<std::size_t> cnt(n_comp, 0);
  for (std::size_t u = 0; u < n; ++u) {
    sum[comp[u]] += z[static_cast<Eigen::Index>(u)];
    ++cnt[comp[u]];
  }
  for (std::size_t u = 0; u < n; ++u)
    if (pinned[comp[u]]) z[static_cast<Eigen::Index>(u)] -= sum[comp[u]] / static_cast<double>(cnt[comp[u]]);

  DepthMap out;
  out.z = Grid<double>(system.width, system.height, 0.0);
  out.mask = Mask(system.width, system.height, 0);
  for (std::size_t u = 0; u < n; ++u) {
    out.z[system.unknown_to_pixel[u]] = z[static_cast<Eigen::Index>(u)];
    out.mask[system.unknown_to_pixel[u]] = 1;
  }
  if (report) *report = local;
  return out;
}

/// Planar-sensor baseline: Poisson solve on the full rectangle with zero
/// Dirichlet boundary, diagonalised by a type-I discrete sine transform.
/// Gradients outside the mask are treated as zero.
inline DepthMap fast_poisson_integrate(const GradientField& grad) {
  const int w = grad.width();
  const int h = grad.height();
  DepthMap out;
  out.z = Grid<double>(w, h, 0.0);
  out.mask = grad.mask;
  const int nx = w - 2;
  const int ny = h - 2;
  if (nx <= 0 || ny <= 0) return out;

  auto p = [&](int x, int y) { return grad.mask(x, y) ? grad.p(x, y) : 0.0; };
  auto q = [&](int x, int y) { return grad.mask(x, y) ? grad.q(x, y) : 0.0; };
  std::vector<double> f(static_cast<std::size_t>(nx) * ny);
  for (int y = 1; y <= ny; ++y)
    for (int x = 1; x <= nx; ++x)
      f[static_cast<std::size_t>(y - 1) * nx + (x - 1)] =
          0.5 * (p(x + 1, y) - p(x - 1, y)) + 0.5 * (q(x, y + 1) - q(x, y - 1));

  std::vector<double> spec(f.size());
  fftw_plan fwd = fftw_plan_r2r_2d(ny, nx, f.data(), spec.data(), FFTW_RODFT00, FFTW_RODFT00, FFTW_ESTIMATE);
  fftw_execute(fwd);
  fftw_destroy_plan(fwd);
  const double pi = 3.14159265358979323846;
  for (int l = 0; l < ny; ++l) {
    for (int k = 0; k < nx; ++k) {
      const double eig = 2.0 * std::cos(pi * (k + 1) / (nx + 1)) - 2.0 + 2.0 * std::cos(pi * (l + 1) / (ny + 1)) - 2.0;
      spec[static_cast<std::size_t>(l) * nx + k] /= eig;
    }
  }
  std::vector<double> sol(f.size());
  fftw_plan inv = fftw_plan_r2r_2d(ny, nx, spec.data(), sol.data(), FFTW_RODFT00, FFTW_RODFT00, FFTW_ESTIMATE);
  fftw_execute(inv);
  fftw_destroy_plan(inv);
  const double scale = 1.0 / (4.0 * (nx + 1) * (ny + 1));
  for (int y = 1; y <= ny; ++y)
    for (int x = 1; x <= nx; ++x) out.z(x, y) = sol[static_cast<std::size_t>(y - 1) * nx + (x - 1)] * scale;
  return out;
}

enum class IntegrationMethod { Poisson, FastPoisson };

struct IntegrationConfig {
  IntegrationMethod method = IntegrationMethod::Poisson;
  double nz_floor = kDefaultNzFloor;
  SolverOptions solver;
};

struct IntegrationResult {
  DepthMap depth;
  std::size_t clamped_pixels = 0;
  SolveReport solve;
};

/// normals -> gradients -> Poisson system (+ prior) -> depth, in grid units.
inline IntegrationResult integrate_normals_detailed(const NormalMap& normals, const DepthPrior* prior,
                                                    const IntegrationConfig& config = {}, double pixel_pitch = 1.0) {
  const GradientField grad = normals_to_gradients(normals, config.nz_floor);
  IntegrationResult res;
  res.clamped_pixels = grad.clamped_pixels;
  if (config.method == IntegrationMethod::FastPoisson) {
    res.depth = fast_poisson_integrate(grad);
  } else {
    PoissonSystem sys = assemble_poisson(grad);
    if (prior) sys = augment_with_prior(std::move(sys), *prior);
    res.depth = solve_depth(sys, config.solver, &res.solve);
  }
  res.depth.pixel_pitch = pixel_pitch;
  return res;
}

inline DepthMap integrate_normals(const NormalMap& normals, const DepthPrior* prior, const IntegrationConfig& config = {},
                                  double pixel_pitch = 1.0) {
  return integrate_normals_detailed(normals, prior, config, pixel_pitch).depth;
}

inline DepthMap integrate_normals(const NormalMap& normals, const std::optional<DepthPrior>& prior,
                                  const IntegrationConfig& config = {}, double pixel_pitch = 1.0) {
  return integrate_normals(normals, prior ? &*prior : nullptr, config, pixel_pitch);
}

}  // namespace tactile
