#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "elastident/constitutive.hpp"
#include "elastident/error.hpp"
#include "elastident/linalg.hpp"
#include "elastident/material.hpp"

namespace elastident {

/// Lagrangian material point.
struct Particle {
  Vec3 x = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  double mass = 0.0;
  double volume = 0.0;  // rest volume
  Mat3 F = Mat3::Identity();
  Mat3 C = Mat3::Zero();
  ObjectId object_id = 0;
};

struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

/// Body force per unit mass applied to grid nodes inside `region` while
/// t_start <= t < t_end.
struct ForceEvent {
  Box region;
  Vec3 force_density = Vec3::Zero();  // m/s^2
  double t_start = 0.0;
  double t_end = 0.0;

  bool active(double t) const { return t >= t_start && t < t_end; }
};

enum class WallKind { sticky, slip };

/// Faces ordered -x, +x, -y, +y, -z, +z.
struct Boundary {
  std::array<WallKind, 6> faces{WallKind::sticky, WallKind::sticky, WallKind::sticky,
                                WallKind::sticky, WallKind::sticky, WallKind::sticky};
};

struct SimConfig {
  int grid_n = 50;
  double dt = 2e-4;
  int substeps_per_frame = 25;
  Vec3 gravity{0.0, -9.8, 0.0};
  std::vector<ForceEvent> forces;
  Boundary boundary;

  /// Domain is the unit cube.
  double spacing() const { return 1.0 / static_cast<double>(grid_n - 1); }
  double frame_dt() const { return dt * substeps_per_frame; }

  void validate() const {
    if (grid_n < 8) fail(ErrorCategory::validation, "sim.grid_n must be >= 8");
    if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorCategory::validation, "sim.dt must be positive");
    if (substeps_per_frame < 1) fail(ErrorCategory::validation, "sim.substeps_per_frame must be >= 1");
    for (const auto& f : forces) {
      if (!(f.t_start < f.t_end)) fail(ErrorCategory::validation, "force t_start must be < t_end");
      if ((f.region.min.array() < 0.0).any() || (f.region.max.array() > 1.0).any() ||
          (f.region.min.array() > f.region.max.array()).any())
        fail(ErrorCategory::validation, "force region must be an ordered box inside the unit domain");
    }
  }
};

/// Width of the wall band, in cells, in which boundary conditions apply.
inline constexpr int kBoundaryBand = 2;
inline constexpr double kMassEpsilon = 1e-12;

class Grid {
 public:
  explicit Grid(int n)
      : n_(n),
        h_(1.0 / static_cast<double>(n - 1)),
        mass_(static_cast<std::size_t>(n) * n * n, 0.0),
        velocity_(mass_.size(), Vec3::Zero()),
        force_(mass_.size(), Vec3::Zero()) {}

  int n() const { return n_; }
  double spacing() const { return h_; }
  std::size_t size() const { return mass_.size(); }

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n_ + j) * n_ + k;
  }
  Vec3 node_position(int i, int j, int k) const { return Vec3(i, j, k) * h_; }

  void clear() {
    std::fill(mass_.begin(), mass_.end(), 0.0);
    std::fill(velocity_.begin(), velocity_.end(), Vec3::Zero());
    std::fill(force_.begin(), force_.end(), Vec3::Zero());
  }

  std::vector<double>& mass() { return mass_; }
  const std::vector<double>& mass() const { return mass_; }
  /// Momentum during P2G accumulation, velocity afterwards.
  std::vector<Vec3>& velocity() { return velocity_; }
  const std::vector<Vec3>& velocity() const { return velocity_; }
  /// Internal-force scratch used by grid_update.
  std::vector<Vec3>& force() { return force_; }

  double total_mass() const {
    double m = 0.0;
    for (double mi : mass_) m += mi;
    return m;
  }
  /// Sum of m_i v_i; valid once velocities are normalized.
  Vec3 total_momentum() const {
    Vec3 p = Vec3::Zero();
    for (std::size_t i = 0; i < mass_.size(); ++i) p += mass_[i] * velocity_[i];
    return p;
  }

 private:
  int n_;
  double h_;
  std::vector<double> mass_;
  std::vector<Vec3> velocity_;
  std::vector<Vec3> force_;
};

/// Quadratic B-spline stencil of one particle: 3 nodes per axis starting at
/// `base`. weights[k](a) is the weight of node base(a)+k along axis a and
/// gradients[k](a) its derivative with respect to the particle coordinate.
struct Stencil {
  Vec3i base;
  std::array<Vec3, 3> weights;
  std::array<Vec3, 3> gradients;

  double weight(int a, int b, int c) const { return weights[a](0) * weights[b](1) * weights[c](2); }

  Vec3 gradient(int a, int b, int c) const {
    return {gradients[a](0) * weights[b](1) * weights[c](2),
            weights[a](0) * gradients[b](1) * weights[c](2),
            weights[a](0) * weights[b](1) * gradients[c](2)};
  }
};

inline Stencil bspline_weights(const Vec3& xp, double h, int n) {
  Stencil s;
  for (int a = 0; a < 3; ++a) {
    const double xi = xp(a) / h;
    const double b = std::floor(xi - 0.5);
    if (!std::isfinite(xi) || b < 0.0 || b + 2.0 > static_cast<double>(n - 1))
      fail(ErrorCategory::out_of_domain, "particle stencil leaves the grid (axis " + std::to_string(a) +
                                             ", x = " + std::to_string(xp(a)) + ")");
    s.base(a) = static_cast<int>(b);
    const double fx = xi - b;
    s.weights[0](a) = 0.5 * (1.5 - fx) * (1.5 - fx);
    s.weights[1](a) = 0.75 - (fx - 1.0) * (fx - 1.0);
    s.weights[2](a) = 0.5 * (fx - 0.5) * (fx - 0.5);
    s.gradients[0](a) = -(1.5 - fx) / h;
    s.gradients[1](a) = -2.0 * (fx - 1.0) / h;
    s.gradients[2](a) = (fx - 0.5) / h;
  }
  return s;
}

/// Lame constants indexed by object id.
class LameTable {
 public:
  LameTable() = default;
  explicit LameTable(const MaterialField& field) {
    for (const auto& [id, entry] : field.entries()) {
      if (id >= table_.size()) {
        table_.resize(id + 1);
        present_.resize(id + 1, false);
      }
      table_[id] = lame_from_params(entry.params);
      present_[id] = true;
    }
  }

  const LameParams& operator[](ObjectId id) const {
    if (id >= table_.size() || !present_[id])
      fail(ErrorCategory::missing_material, "no material for object " + std::to_string(id));
    return table_[id];
  }

 private:
  std::vector<LameParams> table_;
  std::vector<bool> present_;
};

namespace detail {

/// Per-axis node offsets (x_i - x_p) for the three stencil nodes.
inline std::array<Vec3, 3> stencil_offsets(const Stencil& s, const Vec3& xp, double h) {
  std::array<Vec3, 3> d;
  for (int k = 0; k < 3; ++k) d[k] = (s.base.cast<double>() + Vec3::Constant(k)) * h - xp;
  return d;
}

inline std::vector<Stencil> compute_stencils(const std::vector<Particle>& particles, const Grid& grid) {
  std::vector<Stencil> out;
  out.reserve(particles.size());
  for (const Particle& p : particles) out.push_back(bspline_weights(p.x, grid.spacing(), grid.n()));
  return out;
}

inline void p2g(const std::vector<Particle>& particles, const std::vector<Stencil>& stencils, Grid& grid) {
  const double h = grid.spacing();
  auto& mass = grid.mass();
  auto& mom = grid.velocity();
  for (std::size_t n = 0; n < particles.size(); ++n) {
    const Particle& p = particles[n];
    const Stencil& s = stencils[n];
    const auto d = stencil_offsets(s, p.x, h);
    for (int a = 0; a < 3; ++a) {
      const double wa = s.weights[a](0) * p.mass;
      const Vec3 va = p.v + p.C.col(0) * d[a](0);
      for (int b = 0; b < 3; ++b) {
        const double wab = wa * s.weights[b](1);
        const Vec3 vab = va + p.C.col(1) * d[b](1);
        std::size_t idx = grid.index(s.base(0) + a, s.base(1) + b, s.base(2));
        for (int c = 0; c < 3; ++c, ++idx) {
          const double wm = wab * s.weights[c](2);
          mass[idx] += wm;
          mom[idx] += wm * (vab + p.C.col(2) * d[c](2));
        }
      }
    }
  }
  for (std::size_t i = 0; i < mass.size(); ++i)
    mom[i] = mass[i] > kMassEpsilon ? Vec3(mom[i] / mass[i]) : Vec3::Zero();
}

inline void scatter_stress(const std::vector<Particle>& particles, const std::vector<Stencil>& stencils,
                           const LameTable& lame, Grid& grid) {
  auto& force = grid.force();
  std::fill(force.begin(), force.end(), Vec3::Zero());
  for (std::size_t n = 0; n < particles.size(); ++n) {
    const Particle& p = particles[n];
    const Stencil& s = stencils[n];
    const Mat3 stress = -p.volume * kirchhoff_stress(p.F, lame[p.object_id]);
    for (int a = 0; a < 3; ++a) {
      const double wx = s.weights[a](0), gx = s.gradients[a](0);
      for (int b = 0; b < 3; ++b) {
        const double wy = s.weights[b](1), gy = s.gradients[b](1);
        const Vec3 sx = stress.col(0) * (gx * wy);
        const Vec3 sy = stress.col(1) * (wx * gy);
        const Vec3 sz = stress.col(2) * (wx * wy);
        std::size_t idx = grid.index(s.base(0) + a, s.base(1) + b, s.base(2));
        for (int c = 0; c < 3; ++c, ++idx)
          force[idx] += (sx + sy) * s.weights[c](2) + sz * s.gradients[c](2);
      }
    }
  }
}

inline void apply_forces(Grid& grid, const SimConfig& config, double t) {
  std::vector<const ForceEvent*> active;
  for (const auto& f : config.forces)
    if (f.active(t)) active.push_back(&f);

  const double dt = config.dt;
  const int n = grid.n();
  const auto& mass = grid.mass();
  const auto& force = grid.force();
  auto& vel = grid.velocity();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const std::size_t idx = grid.index(i, j, k);
        if (mass[idx] <= kMassEpsilon) continue;
        Vec3 accel = config.gravity;
        if (!active.empty()) {
          const Vec3 xi = grid.node_position(i, j, k);
          for (const ForceEvent* f : active)
            if (f->region.contains(xi)) accel += f->force_density;
        }
        vel[idx] += dt * (force[idx] / mass[idx] + accel);
      }
}

inline void g2p(const Grid& grid, const std::vector<Stencil>& stencils, std::vector<Particle>& particles,
                double dt) {
  const double h = grid.spacing();
  const double inv_d = 4.0 / (h * h);
  const double lo = kBoundaryBand * h;
  const double hi = (grid.n() - 1 - kBoundaryBand) * h;
  const auto& vel = grid.velocity();
  for (std::size_t n = 0; n < particles.size(); ++n) {
    Particle& p = particles[n];
    const Stencil& s = stencils[n];
    const auto d = stencil_offsets(s, p.x, h);
    Vec3 v = Vec3::Zero();
    Mat3 B = Mat3::Zero();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        const double wab = s.weights[a](0) * s.weights[b](1);
        std::size_t idx = grid.index(s.base(0) + a, s.base(1) + b, s.base(2));
        for (int c = 0; c < 3; ++c, ++idx) {
          const Vec3 wv = (wab * s.weights[c](2)) * vel[idx];
          v += wv;
          B.col(0) += d[a](0) * wv;
          B.col(1) += d[b](1) * wv;
          B.col(2) += d[c](2) * wv;
        }
      }
    p.v = v;
    p.C = inv_d * B;
    p.x = (p.x + dt * v).cwiseMax(lo).cwiseMin(hi);
    p.F = (Mat3::Identity() + dt * p.C) * p.F;
  }
}

}  // namespace detail

/// Scatter mass and APIC momentum, then normalize to node velocities.
inline void p2g(const std::vector<Particle>& particles, Grid& grid) {
  detail::p2g(particles, detail::compute_stencils(particles, grid), grid);
}

inline void apply_boundary(Grid& grid, const Boundary& boundary) {
  const int n = grid.n();
  auto& vel = grid.velocity();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const int ijk[3] = {i, j, k};
        Vec3& v = vel[grid.index(i, j, k)];
        for (int axis = 0; axis < 3; ++axis) {
          const bool low = ijk[axis] <= kBoundaryBand;
          const bool high = ijk[axis] >= n - 1 - kBoundaryBand;
          if (!low && !high) continue;
          const WallKind kind = boundary.faces[2 * axis + (low ? 0 : 1)];
          if (kind == WallKind::sticky)
            v.setZero();
          else
            v(axis) = 0.0;
        }
      }
}

/// Integrate internal stress forces and external accelerations on the grid,
/// then apply wall conditions.
inline void grid_update(Grid& grid, const std::vector<Particle>& particles, const LameTable& lame,
                        const SimConfig& config, double t) {
  detail::scatter_stress(particles, detail::compute_stencils(particles, grid), lame, grid);
  detail::apply_forces(grid, config, t);
  apply_boundary(grid, config.boundary);
}

/// Gather velocity and the APIC affine matrix, advect, and evolve F.
inline void g2p(const Grid& grid, std::vector<Particle>& particles, double dt) {
  detail::g2p(grid, detail::compute_stencils(particles, grid), particles, dt);
}

/// One P2G / grid update / G2P cycle starting at time t.
inline void substep(std::vector<Particle>& particles, Grid& grid, const LameTable& lame, const SimConfig& config,
                    double t) {
  grid.clear();
  const auto stencils = detail::compute_stencils(particles, grid);
  detail::p2g(particles, stencils, grid);
  detail::scatter_stress(particles, stencils, lame, grid);
  detail::apply_forces(grid, config, t);
  apply_boundary(grid, config.boundary);
  detail::g2p(grid, stencils, particles, config.dt);
}

struct Snapshot {
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;
  std::vector<ObjectId> object_ids;

  std::size_t size() const { return positions.size(); }
};

using Trajectory = std::vector<Snapshot>;

inline Snapshot take_snapshot(const std::vector<Particle>& particles) {
  Snapshot s;
  s.positions.reserve(particles.size());
  s.velocities.reserve(particles.size());
  s.object_ids.reserve(particles.size());
  for (const Particle& p : particles) {
    s.positions.push_back(p.x);
    s.velocities.push_back(p.v);
    s.object_ids.push_back(p.object_id);
  }
  return s;
}

/// Throws instability if any particle outruns one cell per substep.
inline void check_cfl(const std::vector<Particle>& particles, const SimConfig& config) {
  const double limit = config.spacing() / config.dt;
  for (const Particle& p : particles) {
    const double speed = p.v.norm();
    if (!(speed <= limit))
      fail(ErrorCategory::instability,
           "particle speed " + std::to_string(speed) + " exceeds CFL limit " + std::to_string(limit));
  }
}

/// Runs n_frames frames of substeps_per_frame substeps each and returns
/// n_frames + 1 snapshots, the first being the initial state.
inline Trajectory simulate(std::vector<Particle> particles, const MaterialField& field, const SimConfig& config,
                           int n_frames) {
  config.validate();
  if (n_frames < 0) fail(ErrorCategory::validation, "frame count must be non-negative");
  const LameTable lame(field);
  for (const Particle& p : particles) (void)lame[p.object_id];

  Grid grid(config.grid_n);
  Trajectory traj;
  traj.reserve(static_cast<std::size_t>(n_frames) + 1);
  traj.push_back(take_snapshot(particles));
  long step = 0;
  for (int frame = 0; frame < n_frames; ++frame) {
    for (int s = 0; s < config.substeps_per_frame; ++s, ++step) {
      substep(particles, grid, lame, config, static_cast<double>(step) * config.dt);
      check_cfl(particles, config);
    }
    traj.push_back(take_snapshot(particles));
  }
  return traj;
}

}  // namespace elastident
