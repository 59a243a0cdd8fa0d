#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "elastident/error.hpp"
#include "elastident/linalg.hpp"
#include "elastident/material.hpp"
#include "elastident/mpm.hpp"
#include "elastident/observation.hpp"

namespace elastident {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

using Primitive = std::variant<Box, Sphere>;

struct ObjectSpec {
  ObjectId id = 0;
  std::string label;
  std::string image;  // optional reference image for the material service
  Primitive shape;
  int particles_per_cell = 8;
  double density = 1000.0;
  /// Inline (E, nu); density is always taken from `density`.
  std::optional<MaterialParams> material;
  bool frozen = false;
  bool pin_poisson = false;
  Vec3 velocity = Vec3::Zero();
};

struct Scene {
  std::vector<ObjectSpec> objects;
  Camera camera;
  SimConfig sim;
  int frames = 30;
  std::uint64_t seed = 0;
  std::vector<Particle> particles;  // initial state, sampled from `objects`
};

namespace detail {

inline bool inside(const Primitive& shape, const Vec3& p) {
  if (const auto* b = std::get_if<Box>(&shape)) return b->contains(p);
  const auto& s = std::get<Sphere>(shape);
  return (p - s.center).squaredNorm() <= s.radius * s.radius;
}

inline Box bounds(const Primitive& shape) {
  if (const auto* b = std::get_if<Box>(&shape)) return *b;
  const auto& s = std::get<Sphere>(shape);
  return {s.center - Vec3::Constant(s.radius), s.center + Vec3::Constant(s.radius)};
}

/// splitmix64; portable so identical seeds give identical particles everywhere.
class SplitMix {
 public:
  explicit SplitMix(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

}  // namespace detail

/// Grid-stratified sampling with seeded jitter: every grid cell overlapping
/// the primitive is split into k^3 sub-cells (k = ceil(cbrt(ppc))), ppc of
/// them are chosen, and one jittered point per chosen sub-cell is kept when
/// it falls inside the primitive.
inline std::vector<Particle> sample_object(const ObjectSpec& obj, double h, std::uint64_t seed) {
  const int ppc = obj.particles_per_cell;
  int k = 1;
  while (k * k * k < ppc) ++k;
  const int subcells = k * k * k;
  const double sub = h / k;
  const double volume = h * h * h / ppc;

  detail::SplitMix rng(seed ^ (0xa0761d6478bd642fULL * (static_cast<std::uint64_t>(obj.id) + 1)));
  const Box bb = detail::bounds(obj.shape);
  const Vec3i lo = (bb.min / h).array().floor().cast<int>();
  const Vec3i hi = (bb.max / h).array().ceil().cast<int>();

  std::vector<int> order(subcells);
  std::vector<Particle> out;
  for (int i = lo.x(); i < hi.x(); ++i)
    for (int j = lo.y(); j < hi.y(); ++j)
      for (int l = lo.z(); l < hi.z(); ++l) {
        for (int s = 0; s < subcells; ++s) order[s] = s;
        // Partial Fisher-Yates picks ppc distinct sub-cells.
        for (int s = 0; s < ppc && ppc < subcells; ++s) {
          const int pick = s + static_cast<int>(rng.next() % static_cast<std::uint64_t>(subcells - s));
          std::swap(order[s], order[pick]);
        }
        for (int s = 0; s < ppc; ++s) {
          const int c = order[s];
          const Vec3 corner = Vec3(i, j, l) * h + Vec3(c / (k * k), (c / k) % k, c % k) * sub;
          const Vec3 x = corner + Vec3(rng.uniform(), rng.uniform(), rng.uniform()) * sub;
          if (!detail::inside(obj.shape, x)) continue;
          Particle p;
          p.x = x;
          p.v = obj.velocity;
          p.volume = volume;
          p.mass = obj.density * volume;
          p.object_id = obj.id;
          out.push_back(p);
        }
      }
  return out;
}

inline std::vector<Particle> sample_particles(const Scene& scene) {
  std::vector<Particle> all;
  for (const auto& obj : scene.objects) {
    auto ps = sample_object(obj, scene.sim.spacing(), scene.seed);
    all.insert(all.end(), ps.begin(), ps.end());
  }
  return all;
}

namespace detail {

inline std::string where(const YAML::Node& node) {
  const auto m = node.Mark();
  if (m.line < 0) return "";
  return " (line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1) + ")";
}

[[noreturn]] inline void invalid(const std::string& field, const std::string& msg, const YAML::Node& node) {
  fail(ErrorCategory::validation, field + ": " + msg + where(node));
}

template <typename T>
T as(const YAML::Node& node, const std::string& field) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    invalid(field, "wrong type", node);
  }
}

inline Vec3 as_vec3(const YAML::Node& node, const std::string& field) {
  if (!node.IsSequence() || node.size() != 3) invalid(field, "expected a list of 3 numbers", node);
  Vec3 v;
  for (int a = 0; a < 3; ++a) v(a) = as<double>(node[a], field);
  if (!v.allFinite()) invalid(field, "non-finite value", node);
  return v;
}

inline Vec2 as_vec2(const YAML::Node& node, const std::string& field) {
  if (!node.IsSequence() || node.size() != 2) invalid(field, "expected a list of 2 numbers", node);
  return {as<double>(node[0], field), as<double>(node[1], field)};
}

inline void check_keys(const YAML::Node& node, const std::string& field, std::initializer_list<const char*> allowed) {
  if (!node.IsMap()) invalid(field, "expected a mapping", node);
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) invalid(field.empty() ? key : field + "." + key, "unknown key", kv.first);
  }
}

inline Box parse_box(const YAML::Node& node, const std::string& field) {
  check_keys(node, field, {"min", "max"});
  Box b{as_vec3(node["min"], field + ".min"), as_vec3(node["max"], field + ".max")};
  if ((b.min.array() >= b.max.array()).any()) invalid(field, "min must be below max on every axis", node);
  return b;
}

inline WallKind parse_wall(const YAML::Node& node, const std::string& field) {
  const auto s = as<std::string>(node, field);
  if (s == "sticky") return WallKind::sticky;
  if (s == "slip") return WallKind::slip;
  invalid(field, "expected 'sticky' or 'slip', got '" + s + "'", node);
}

inline void parse_sim(const YAML::Node& node, SimConfig& sim) {
  check_keys(node, "sim", {"grid_n", "dt", "substeps_per_frame", "gravity", "boundary"});
  if (node["grid_n"]) sim.grid_n = as<int>(node["grid_n"], "sim.grid_n");
  if (node["dt"]) sim.dt = as<double>(node["dt"], "sim.dt");
  if (node["substeps_per_frame"]) sim.substeps_per_frame = as<int>(node["substeps_per_frame"], "sim.substeps_per_frame");
  if (node["gravity"]) sim.gravity = as_vec3(node["gravity"], "sim.gravity");
  if (const auto b = node["boundary"]) {
    if (b.IsScalar()) {
      sim.boundary.faces.fill(parse_wall(b, "sim.boundary"));
    } else {
      static const char* kFaces[6] = {"x_min", "x_max", "y_min", "y_max", "z_min", "z_max"};
      check_keys(b, "sim.boundary", {"x_min", "x_max", "y_min", "y_max", "z_min", "z_max"});
      for (int f = 0; f < 6; ++f)
        if (b[kFaces[f]]) sim.boundary.faces[f] = parse_wall(b[kFaces[f]], std::string("sim.boundary.") + kFaces[f]);
    }
  }
  if (sim.grid_n < 8) invalid("sim.grid_n", "must be >= 8", node["grid_n"]);
  if (!(sim.dt > 0.0)) invalid("sim.dt", "must be positive", node["dt"]);
  if (sim.substeps_per_frame < 1) invalid("sim.substeps_per_frame", "must be >= 1", node["substeps_per_frame"]);
}

inline std::optional<double> parse_camera(const YAML::Node& node, Camera& cam) {
  check_keys(node, "camera", {"width", "height", "window", "splat_radius", "coverage"});
  if (node["width"]) cam.width = as<int>(node["width"], "camera.width");
  if (node["height"]) cam.height = as<int>(node["height"], "camera.height");
  if (const auto w = node["window"]) {
    check_keys(w, "camera.window", {"min", "max"});
    cam.window_min = as_vec2(w["min"], "camera.window.min");
    cam.window_max = as_vec2(w["max"], "camera.window.max");
  }
  if (node["splat_radius"]) cam.splat_radius = as<double>(node["splat_radius"], "camera.splat_radius");
  if (cam.width < 8 || cam.height < 8) invalid("camera", "width and height must be >= 8", node);
  if ((cam.window_max.array() <= cam.window_min.array()).any())
    invalid("camera.window", "must have positive area", node["window"]);
  if (!(cam.splat_radius > 0.0)) invalid("camera.splat_radius", "must be positive", node["splat_radius"]);
  if (const auto c = node["coverage"]) {
    if (c.IsScalar() && c.Scalar() == "auto") return std::nullopt;
    const double v = as<double>(c, "camera.coverage");
    if (!(v > 0.0)) invalid("camera.coverage", "must be positive or 'auto'", c);
    return v;
  }
  return std::nullopt;
}

inline ForceEvent parse_force(const YAML::Node& node, const std::string& field) {
  check_keys(node, field, {"region", "force_density", "t_start", "t_end"});
  ForceEvent f;
  f.region = parse_box(node["region"], field + ".region");
  f.force_density = as_vec3(node["force_density"], field + ".force_density");
  f.t_start = as<double>(node["t_start"], field + ".t_start");
  f.t_end = as<double>(node["t_end"], field + ".t_end");
  if (!(f.t_start < f.t_end)) invalid(field, "t_start must be < t_end", node);
  if ((f.region.min.array() < 0.0).any() || (f.region.max.array() > 1.0).any())
    invalid(field + ".region", "must lie within the unit domain", node["region"]);
  return f;
}

inline ObjectSpec parse_object(const YAML::Node& node, const std::string& field) {
  check_keys(node, field,
             {"id", "label", "image", "box", "sphere", "particles_per_cell", "density", "material", "frozen",
              "pin_poisson", "velocity"});
  ObjectSpec obj;
  if (!node["id"]) invalid(field + ".id", "missing", node);
  const long id = as<long>(node["id"], field + ".id");
  if (id < 0 || id > 65535) invalid(field + ".id", "must be in [0, 65535]", node["id"]);
  obj.id = static_cast<ObjectId>(id);
  if (node["label"]) obj.label = as<std::string>(node["label"], field + ".label");
  if (node["image"]) obj.image = as<std::string>(node["image"], field + ".image");
  if (node["box"] && node["sphere"]) invalid(field, "give exactly one of 'box' or 'sphere'", node);
  if (node["box"]) {
    obj.shape = parse_box(node["box"], field + ".box");
  } else if (const auto s = node["sphere"]) {
    check_keys(s, field + ".sphere", {"center", "radius"});
    Sphere sp{as_vec3(s["center"], field + ".sphere.center"), as<double>(s["radius"], field + ".sphere.radius")};
    if (!(sp.radius > 0.0)) invalid(field + ".sphere.radius", "must be positive", s["radius"]);
    obj.shape = sp;
  } else {
    invalid(field, "missing primitive ('box' or 'sphere')", node);
  }
  if (node["particles_per_cell"]) {
    obj.particles_per_cell = as<int>(node["particles_per_cell"], field + ".particles_per_cell");
    if (obj.particles_per_cell < 1 || obj.particles_per_cell > 64)
      invalid(field + ".particles_per_cell", "must be in [1, 64]", node["particles_per_cell"]);
  }
  if (node["density"]) {
    obj.density = as<double>(node["density"], field + ".density");
    if (!(obj.density > 0.0) || !std::isfinite(obj.density))
      invalid(field + ".density", "must be positive", node["density"]);
  }
  if (const auto m = node["material"]) {
    check_keys(m, field + ".material", {"youngs_modulus", "poisson_ratio"});
    MaterialParams p{as<double>(m["youngs_modulus"], field + ".material.youngs_modulus"),
                     as<double>(m["poisson_ratio"], field + ".material.poisson_ratio"), obj.density};
    if (!(p.youngs_modulus > 0.0) || !std::isfinite(p.youngs_modulus))
      invalid(field + ".material.youngs_modulus", "must be positive", m["youngs_modulus"]);
    if (!(p.poisson_ratio > 0.0 && p.poisson_ratio < 0.5))
      invalid(field + ".material.poisson_ratio", "must lie in (0, 0.5)", m["poisson_ratio"]);
    obj.material = p;
  }
  if (node["frozen"]) obj.frozen = as<bool>(node["frozen"], field + ".frozen");
  if (node["pin_poisson"]) obj.pin_poisson = as<bool>(node["pin_poisson"], field + ".pin_poisson");
  if (node["velocity"]) obj.velocity = as_vec3(node["velocity"], field + ".velocity");
  return obj;
}

}  // namespace detail

/// Parses scene text (YAML). `name` is used in error messages.
inline Scene parse_scene(const std::string& text, const std::string& name = "scene") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    fail(ErrorCategory::parse, name + ": parse error at line " + std::to_string(e.mark.line + 1) + ", column " +
                                   std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  if (!root.IsMap()) fail(ErrorCategory::parse, name + ": top level must be a mapping");

  using namespace detail;
  check_keys(root, "", {"seed", "frames", "sim", "camera", "forces", "objects"});
  Scene scene;
  if (root["seed"]) scene.seed = as<std::uint64_t>(root["seed"], "seed");
  if (root["frames"]) {
    scene.frames = as<int>(root["frames"], "frames");
    if (scene.frames < 0) invalid("frames", "must be non-negative", root["frames"]);
  }
  if (root["sim"]) parse_sim(root["sim"], scene.sim);
  std::optional<double> coverage;
  if (root["camera"]) coverage = parse_camera(root["camera"], scene.camera);
  if (const auto forces = root["forces"]) {
    if (!forces.IsSequence()) invalid("forces", "expected a list", forces);
    for (std::size_t i = 0; i < forces.size(); ++i)
      scene.sim.forces.push_back(parse_force(forces[i], "forces[" + std::to_string(i) + "]"));
  }
  const auto objects = root["objects"];
  if (!objects || !objects.IsSequence() || objects.size() == 0)
    invalid("objects", "expected a non-empty list", objects ? objects : root);

  const double h = scene.sim.spacing();
  const double lo = kBoundaryBand * h;
  const double hi = 1.0 - kBoundaryBand * h;
  std::set<ObjectId> seen;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string field = "objects[" + std::to_string(i) + "]";
    ObjectSpec obj = parse_object(objects[i], field);
    if (!seen.insert(obj.id).second)
      invalid(field + ".id", "duplicate object id " + std::to_string(obj.id), objects[i]["id"]);
    const Box bb = bounds(obj.shape);
    if ((bb.min.array() < lo).any() || (bb.max.array() > hi).any())
      invalid(field, "primitive must lie inside the domain interior [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]",
              objects[i]);
    scene.objects.push_back(std::move(obj));
  }

  scene.particles = sample_particles(scene);
  if (coverage) {
    scene.camera.coverage = *coverage;
  } else {
    std::vector<Vec3> xs;
    xs.reserve(scene.particles.size());
    for (const auto& p : scene.particles) xs.push_back(p.x);
    scene.camera.coverage = expected_coverage(xs, scene.camera);
  }
  return scene;
}

inline Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open scene " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str(), path.string());
}

inline Trajectory simulate(const Scene& scene, const MaterialField& field, int n_frames) {
  return simulate(scene.particles, field, scene.sim, n_frames);
}

}  // namespace elastident
