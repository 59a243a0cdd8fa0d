#pragma once

#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "elastident/error.hpp"
#include "elastident/formats.hpp"
#include "elastident/identify.hpp"
#include "elastident/initializer.hpp"
#include "elastident/records.hpp"
#include "elastident/scene.hpp"

// Output layout of gen-observations (also read by identify):
//   <out>/manifest.txt             frames, frame_dt, width, height
//   <out>/frames/frame_NNNN.pfm    T + 1 rendered frames
//   <out>/flows/flow_NNNN.flw      T flows, frame N -> N + 1
//   <out>/trajectory/snap_NNNN.mpms
//   <out>/ground_truth.txt         material field used to generate the data

namespace elastident::cli {

namespace fs = std::filesystem;

inline std::string numbered(const char* stem, int n, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04d.%s", stem, n, ext);
  return buf;
}

inline fs::path frame_path(const fs::path& dir, int t) { return dir / "frames" / numbered("frame", t, "pfm"); }
inline fs::path flow_path(const fs::path& dir, int t) { return dir / "flows" / numbered("flow", t, "flw"); }
inline fs::path snapshot_path(const fs::path& dir, int t) { return dir / "trajectory" / numbered("snap", t, "mpms"); }

struct SceneArgs {
  fs::path scene;
  std::optional<int> frames;
  std::optional<std::uint64_t> seed;
};

inline Scene load_scene_with(const SceneArgs& args) {
  Scene scene = load_scene(args.scene);
  if (args.seed && *args.seed != scene.seed) {
    scene.seed = *args.seed;
    scene.particles = sample_particles(scene);
  }
  if (args.frames) {
    if (*args.frames < 0) fail(ErrorCategory::usage, "--frames must be non-negative");
    scene.frames = *args.frames;
  }
  return scene;
}

/// Every scene object must have exactly one entry.
inline void check_coverage(const MaterialField& field, const Scene& scene) {
  for (const auto& obj : scene.objects)
    if (!field.contains(obj.id))
      fail(ErrorCategory::missing_material, "material field has no entry for object " + std::to_string(obj.id));
}

inline void write_sequence(const fs::path& out, const RenderedSequence& seq) {
  for (std::size_t t = 0; t < seq.frames.size(); ++t) write_image(frame_path(out, static_cast<int>(t)), seq.frames[t]);
  for (std::size_t t = 0; t < seq.flows.size(); ++t) write_flow(flow_path(out, static_cast<int>(t)), seq.flows[t]);
}

inline void write_trajectory(const fs::path& out, const Trajectory& traj) {
  for (std::size_t t = 0; t < traj.size(); ++t) write_snapshot(snapshot_path(out, static_cast<int>(t)), traj[t]);
}

inline void write_manifest(const fs::path& out, int frames, double frame_dt, const Camera& cam) {
  write_file(out / "manifest.txt", "frames " + std::to_string(frames) + "\nframe_dt " + detail::fmt_double(frame_dt) +
                                       "\nwidth " + std::to_string(cam.width) + "\nheight " +
                                       std::to_string(cam.height) + "\n");
}

struct Manifest {
  int frames = 0;
  double frame_dt = 0.0;
  int width = 0;
  int height = 0;
};

inline Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.txt";
  if (!fs::exists(path)) fail(ErrorCategory::io, "observation directory has no manifest: " + path.string());
  std::istringstream in(read_file(path));
  Manifest m;
  std::string key;
  int seen = 0;
  while (in >> key) {
    if (key == "frames" && (in >> m.frames)) ++seen;
    else if (key == "frame_dt" && (in >> m.frame_dt)) ++seen;
    else if (key == "width" && (in >> m.width)) ++seen;
    else if (key == "height" && (in >> m.height)) ++seen;
    else fail(ErrorCategory::parse, path.string() + ": unexpected entry '" + key + "'");
  }
  if (seen != 4 || m.frames < 0) fail(ErrorCategory::parse, path.string() + ": incomplete manifest");
  return m;
}

/// A missing sequence file counts as an empty, hence truncated, payload.
inline std::string read_sequence_file(const fs::path& path) {
  if (!fs::exists(path))
    fail(ErrorCategory::truncated_payload, path.string() + ": file missing (0 bytes of payload present)");
  return read_file(path);
}

inline ObservationSet load_observations(const fs::path& dir, const Camera& camera) {
  const Manifest m = read_manifest(dir);
  if (m.width != camera.width || m.height != camera.height)
    fail(ErrorCategory::dimension_mismatch, "observations are " + std::to_string(m.width) + "x" +
                                                std::to_string(m.height) + " but the scene camera is " +
                                                std::to_string(camera.width) + "x" + std::to_string(camera.height));
  ObservationSet obs;
  obs.camera = camera;
  obs.frame_dt = m.frame_dt;
  for (int t = 0; t <= m.frames; ++t) {
    const fs::path p = frame_path(dir, t);
    obs.frames.push_back(decode_pfm(read_sequence_file(p), p.string()));
  }
  for (int t = 0; t < m.frames; ++t) {
    const fs::path p = flow_path(dir, t);
    obs.flows.push_back(decode_flow(read_sequence_file(p), p.string()));
  }
  obs.validate();
  return obs;
}

struct RunLog {
  std::vector<std::string> lines;
  void add(std::string line) { lines.push_back(std::move(line)); }
  void write(const fs::path& out) const {
    std::string s;
    for (const auto& l : lines) s += l + "\n";
    write_file(out / "run.log", s);
  }
};

/// Resolves --init: "manual", "mllm" or "file:PATH".
inline MaterialField initial_field(const std::string& init, const Scene& scene, const std::string& endpoint,
                                   RunLog& log) {
  MaterialField field;
  if (init == "manual") {
    field = manual_init(scene);
    log.add("init manual");
  } else if (init == "mllm") {
    std::optional<MaterialField> fallback;
    try {
      fallback = manual_init(scene);
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::missing_material) throw;
    }
    const InitOutcome outcome = mllm_init(endpoint, make_init_request(scene), MllmOptions{}, fallback);
    field = outcome.field;
    log.add(outcome.used_fallback ? "init mllm fallback-to-manual " + outcome.failure : "init mllm " + endpoint);
  } else if (init.rfind("file:", 0) == 0) {
    field = read_material_field(init.substr(5));
    log.add("init file " + init.substr(5));
  } else {
    fail(ErrorCategory::usage, "--init must be manual, mllm or file:PATH (got '" + init + "')");
  }
  check_coverage(field, scene);
  return field;
}

struct GenArgs {
  SceneArgs scene;
  fs::path out;
};

/// Simulates with the scene's ground-truth materials and writes frames, flows,
/// trajectory, manifest and the ground-truth record.
inline void gen_observations(const GenArgs& args) {
  const Scene scene = load_scene_with(args.scene);
  const MaterialField truth = manual_init(scene);
  const Trajectory traj = simulate(scene, truth, scene.frames);
  const RenderedSequence seq = render_trajectory(traj, scene.camera);
  fs::create_directories(args.out);
  write_sequence(args.out, seq);
  write_trajectory(args.out, traj);
  write_manifest(args.out, scene.frames, scene.sim.frame_dt(), scene.camera);
  write_material_field(args.out / "ground_truth.txt", truth);
}

struct SimulateArgs {
  SceneArgs scene;
  fs::path out;
  std::string init = "manual";
  std::string mllm_endpoint;
};

inline void simulate_command(const SimulateArgs& args) {
  const Scene scene = load_scene_with(args.scene);
  RunLog log;
  const MaterialField field = initial_field(args.init, scene, args.mllm_endpoint, log);
  const Trajectory traj = simulate(scene, field, scene.frames);
  fs::create_directories(args.out);
  write_trajectory(args.out, traj);
  write_material_field(args.out / "field.txt", field);
  log.write(args.out);
}

inline void render_command(const SimulateArgs& args) {
  const Scene scene = load_scene_with(args.scene);
  RunLog log;
  const MaterialField field = initial_field(args.init, scene, args.mllm_endpoint, log);
  const Trajectory traj = simulate(scene, field, scene.frames);
  fs::create_directories(args.out);
  write_sequence(args.out, render_trajectory(traj, scene.camera));
  write_manifest(args.out, scene.frames, scene.sim.frame_dt(), scene.camera);
  log.write(args.out);
}

struct IdentifyArgs {
  SceneArgs scene;
  fs::path obs;
  fs::path out;
  std::string init = "manual";
  std::string mllm_endpoint;
  OptimizeOptions options;
};

struct IdentifyReport {
  OptimizeResult result;
  std::optional<double> relative_error;
  std::vector<double> epe_initial;
  std::vector<double> epe_final;
};

inline std::string format_report(const IdentifyReport& r) {
  using detail::fmt_double;
  std::string s;
  s += "iterations " + std::to_string(r.result.iterations) + "\n";
  s += "converged " + std::string(r.result.converged ? "1" : "0") + "\n";
  s += "rejected_steps " + std::to_string(r.result.rejected_steps) + "\n";
  s += "initial_loss " + fmt_double(r.result.initial_loss) + "\n";
  s += "final_loss " + fmt_double(r.result.best_loss) + "\n";
  if (r.relative_error) s += "relative_error " + fmt_double(*r.relative_error) + "\n";
  s += "epe_initial " + fmt_double(mean_of(r.epe_initial)) + "\n";
  s += "epe_final " + fmt_double(mean_of(r.epe_final)) + "\n";
  for (std::size_t t = 0; t < r.epe_final.size(); ++t)
    s += "epe_frame " + std::to_string(t) + " " + fmt_double(r.epe_final[t]) + "\n";
  return s;
}

/// Parses the report's "key value" lines; per-frame lines are returned as
/// "epe_frame N".
inline std::vector<std::pair<std::string, double>> parse_report(const std::string& text) {
  std::vector<std::pair<std::string, double>> out;
  std::istringstream in(text);
  std::string key;
  while (in >> key) {
    if (key == "epe_frame") {
      int t = 0;
      in >> t;
      key += " " + std::to_string(t);
    }
    double v = 0.0;
    if (!(in >> v)) fail(ErrorCategory::parse, "report: malformed value for " + key);
    out.emplace_back(key, v);
  }
  return out;
}

inline IdentifyReport identify(const IdentifyArgs& args) {
  const Scene scene = load_scene_with(args.scene);
  const ObservationSet obs = load_observations(args.obs, scene.camera);
  RunLog log;
  const MaterialField init = initial_field(args.init, scene, args.mllm_endpoint, log);

  IdentifyReport report;
  report.result = optimize(obs, scene, init, args.options);
  report.epe_initial = per_frame_epe(obs, scene, init);
  report.epe_final = per_frame_epe(obs, scene, report.result.field);
  if (fs::exists(args.obs / "ground_truth.txt")) {
    const MaterialField truth = read_material_field(args.obs / "ground_truth.txt");
    report.relative_error = field_relative_error(report.result.field, truth);
  } else {
    log.add("no ground truth record; relative_error omitted");
  }
  if (report.result.rejected_steps > 0)
    log.add("rejected " + std::to_string(report.result.rejected_steps) + " unstable steps");

  fs::create_directories(args.out);
  write_material_field(args.out / "final_field.txt", report.result.field);
  write_file(args.out / "history.txt", format_history(report.result.history));
  write_file(args.out / "report.txt", format_report(report));
  log.write(args.out);
  return report;
}

}  // namespace elastident::cli
