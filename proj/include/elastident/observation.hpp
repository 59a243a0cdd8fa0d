#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "elastident/error.hpp"
#include "elastident/linalg.hpp"
#include "elastident/mpm.hpp"

namespace elastident {

using Vec2 = Eigen::Vector2d;

/// Orthographic camera looking down -z. The world rectangle
/// [window_min, window_max] in the (x, y) plane maps onto the image; pixel
/// row 0 is the bottom row (smallest y).
struct Camera {
  int width = 64;
  int height = 64;
  Vec2 window_min{0.0, 0.0};
  Vec2 window_max{1.0, 1.0};
  double splat_radius = 2.0;  // pixels
  /// Raw splat accumulation that maps to intensity 1.
  double coverage = 1.0;

  void validate() const {
    if (width < 8 || height < 8) fail(ErrorCategory::validation, "camera width and height must be >= 8");
    if (!((window_max.array() > window_min.array()).all()))
      fail(ErrorCategory::validation, "camera window must have positive area");
    if (!(splat_radius > 0.0)) fail(ErrorCategory::validation, "camera splat_radius must be positive");
    if (!(coverage > 0.0) || !std::isfinite(coverage))
      fail(ErrorCategory::validation, "camera coverage must be positive");
  }

  Vec2 pixels_per_meter() const {
    return {width / (window_max.x() - window_min.x()), height / (window_max.y() - window_min.y())};
  }

  /// Continuous pixel coordinates; pixel (i, j) spans [i, i+1) x [j, j+1).
  Vec2 project(const Vec3& x) const {
    const Vec2 ppm = pixels_per_meter();
    return {(x.x() - window_min.x()) * ppm.x(), (x.y() - window_min.y()) * ppm.y()};
  }

  bool in_view(const Vec2& uv) const { return uv.x() >= 0.0 && uv.y() >= 0.0 && uv.x() < width && uv.y() < height; }
};

/// Grayscale image, row-major with row 0 at the bottom.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0.0f) {}

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Dense 2D flow in pixels per frame; interleaved (u, v) per pixel.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  FlowField() = default;
  FlowField(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 2, 0.0f) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  float u(std::size_t i) const { return data[2 * i]; }
  float v(std::size_t i) const { return data[2 * i + 1]; }
  void set(std::size_t i, float u, float v) {
    data[2 * i] = u;
    data[2 * i + 1] = v;
  }

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

namespace detail {

/// Gaussian footprint with sigma = radius / 2, truncated at 3 sigma and shifted
/// so it reaches zero continuously at the cutoff; unit peak.
class SplatKernel {
 public:
  explicit SplatKernel(double radius)
      : sigma_(radius / 2.0), cutoff_(3.0 * sigma_), floor_(std::exp(-4.5)) {}

  double cutoff() const { return cutoff_; }

  double operator()(double dist2) const {
    if (dist2 >= cutoff_ * cutoff_) return 0.0;
    return (std::exp(-dist2 / (2.0 * sigma_ * sigma_)) - floor_) / (1.0 - floor_);
  }

 private:
  double sigma_;
  double cutoff_;
  double floor_;
};

/// Calls visit(pixel_index, weight) for every pixel in the footprint of a
/// particle at continuous pixel position uv.
template <typename Visit>
void for_each_footprint_pixel(const Camera& camera, const SplatKernel& kernel, const Vec2& uv, Visit&& visit) {
  const double r = kernel.cutoff();
  const int x0 = std::max(0, static_cast<int>(std::ceil(uv.x() - 0.5 - r)));
  const int x1 = std::min(camera.width - 1, static_cast<int>(std::floor(uv.x() - 0.5 + r)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(uv.y() - 0.5 - r)));
  const int y1 = std::min(camera.height - 1, static_cast<int>(std::floor(uv.y() - 0.5 + r)));
  for (int y = y0; y <= y1; ++y) {
    const double dy = y + 0.5 - uv.y();
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - uv.x();
      const double w = kernel(dx * dx + dy * dy);
      if (w > 0.0) visit(static_cast<std::size_t>(y) * camera.width + x, w);
    }
  }
}

inline std::vector<double> accumulate_splats(std::span<const Vec3> positions, const Camera& camera) {
  std::vector<double> raw(static_cast<std::size_t>(camera.width) * camera.height, 0.0);
  const SplatKernel kernel(camera.splat_radius);
  for (const Vec3& x : positions) {
    const Vec2 uv = camera.project(x);
    if (!camera.in_view(uv)) continue;
    for_each_footprint_pixel(camera, kernel, uv, [&](std::size_t i, double w) { raw[i] += w; });
  }
  return raw;
}

}  // namespace detail

/// Peak raw splat accumulation of a particle set; used to calibrate
/// Camera::coverage from the initial configuration so that intensity does not
/// depend on sampling density.
inline double expected_coverage(std::span<const Vec3> positions, Camera camera) {
  camera.coverage = 1.0;
  const auto raw = detail::accumulate_splats(positions, camera);
  const double peak = raw.empty() ? 0.0 : *std::max_element(raw.begin(), raw.end());
  return peak > 0.0 ? peak : 1.0;
}

inline Image splat_render(std::span<const Vec3> positions, const Camera& camera) {
  camera.validate();
  const auto raw = detail::accumulate_splats(positions, camera);
  Image img(camera.width, camera.height);
  for (std::size_t i = 0; i < raw.size(); ++i)
    img.pixels[i] = static_cast<float>(std::clamp(raw[i] / camera.coverage, 0.0, 1.0));
  return img;
}

/// Fraction of full coverage below which a pixel's flow fades out.
inline constexpr double kFlowCoverageFloor = 0.25;

/// Dense flow from index correspondence: each particle's projected
/// displacement is splatted at its position in `from`. Pixels with at least
/// kFlowCoverageFloor of full coverage get the weighted mean displacement;
/// fainter pixels get it scaled down in proportion to their weight.
inline FlowField particle_flow(std::span<const Vec3> from, std::span<const Vec3> to, const Camera& camera) {
  camera.validate();
  if (from.size() != to.size())
    fail(ErrorCategory::correspondence, "snapshots differ in particle count (" + std::to_string(from.size()) +
                                            " vs " + std::to_string(to.size()) + ")");
  const std::size_t npix = static_cast<std::size_t>(camera.width) * camera.height;
  std::vector<double> weight(npix, 0.0);
  std::vector<Vec2> sum(npix, Vec2::Zero());
  const detail::SplatKernel kernel(camera.splat_radius);
  for (std::size_t p = 0; p < from.size(); ++p) {
    const Vec2 uv = camera.project(from[p]);
    if (!camera.in_view(uv)) continue;
    const Vec2 disp = camera.project(to[p]) - uv;
    detail::for_each_footprint_pixel(camera, kernel, uv, [&](std::size_t i, double w) {
      weight[i] += w;
      sum[i] += w * disp;
    });
  }
  FlowField flow(camera.width, camera.height);
  // A plain weighted mean would switch a pixel from zero to the full
  // displacement the moment a footprint touches it, making the loss jump.
  const double floor = kFlowCoverageFloor * camera.coverage;
  for (std::size_t i = 0; i < npix; ++i) {
    if (weight[i] == 0.0) continue;
    const Vec2 f = sum[i] / std::max(weight[i], floor);
    flow.set(i, static_cast<float>(f.x()), static_cast<float>(f.y()));
  }
  return flow;
}

inline FlowField particle_flow(const Snapshot& from, const Snapshot& to, const Camera& camera) {
  return particle_flow(std::span<const Vec3>(from.positions), std::span<const Vec3>(to.positions), camera);
}

/// Mean end-point error over pixels where either flow is nonzero.
inline double epe(const FlowField& a, const FlowField& b) {
  if (a.width != b.width || a.height != b.height)
    fail(ErrorCategory::dimension_mismatch, "flow fields differ in size (" + std::to_string(a.width) + "x" +
                                                std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                                                std::to_string(b.height) + ")");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    const bool covered = a.u(i) != 0.0f || a.v(i) != 0.0f || b.u(i) != 0.0f || b.v(i) != 0.0f;
    if (!covered) continue;
    const double du = static_cast<double>(a.u(i)) - b.u(i);
    const double dv = static_cast<double>(a.v(i)) - b.v(i);
    sum += std::sqrt(du * du + dv * dv);
    ++count;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

/// Rendered frames and flows of a trajectory.
struct RenderedSequence {
  std::vector<Image> frames;
  std::vector<FlowField> flows;
};

inline RenderedSequence render_trajectory(const Trajectory& traj, const Camera& camera) {
  RenderedSequence out;
  out.frames.reserve(traj.size());
  for (const Snapshot& s : traj) out.frames.push_back(splat_render(s.positions, camera));
  for (std::size_t t = 0; t + 1 < traj.size(); ++t) out.flows.push_back(particle_flow(traj[t], traj[t + 1], camera));
  return out;
}

}  // namespace elastident
