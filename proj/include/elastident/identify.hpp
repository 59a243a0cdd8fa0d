#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "elastident/error.hpp"
#include "elastident/material.hpp"
#include "elastident/mpm.hpp"
#include "elastident/observation.hpp"
#include "elastident/scene.hpp"

namespace elastident {

/// Observed frames I_0..I_T and flows between consecutive frames.
struct ObservationSet {
  std::vector<Image> frames;
  std::vector<FlowField> flows;
  Camera camera;
  double frame_dt = 0.0;

  int frame_count() const { return static_cast<int>(frames.size()) - 1; }

  void validate() const {
    if (frames.empty()) fail(ErrorCategory::validation, "observation set has no frames");
    if (flows.size() + 1 != frames.size())
      fail(ErrorCategory::validation, "observation set needs exactly one flow per consecutive frame pair");
    for (const auto& f : frames)
      if (f.width != camera.width || f.height != camera.height)
        fail(ErrorCategory::dimension_mismatch, "observed frame size differs from the camera");
    for (const auto& f : flows)
      if (f.width != camera.width || f.height != camera.height)
        fail(ErrorCategory::dimension_mismatch, "observed flow size differs from the camera");
  }
};

inline ObservationSet observe(const Trajectory& traj, const Camera& camera, double frame_dt) {
  RenderedSequence seq = render_trajectory(traj, camera);
  return {std::move(seq.frames), std::move(seq.flows), camera, frame_dt};
}

enum class ModulusScale {
  log10,   // optimize log10 E
  linear,  // optimize E / E_init
};

struct OptimizeOptions {
  double lambda_flow = 0.1;
  int max_iters = 200;
  double learning_rate = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double fd_rel_step = 1e-3;
  double nu_min = 0.05;
  double nu_max = 0.49;
  double log_modulus_min = 2.0;  // log10 Pa
  double log_modulus_max = 8.0;
  /// Stop when the best loss improved by less than this fraction over the
  /// last `convergence_window` iterations.
  double convergence_tol = 1e-4;
  int convergence_window = 10;
  /// Stop once the loss reaches this absolute floor.
  double loss_floor = 1e-12;
  ModulusScale modulus_scale = ModulusScale::log10;

  void validate() const {
    if (!(lambda_flow >= 0.0)) fail(ErrorCategory::validation, "lambda_flow must be >= 0");
    if (max_iters < 0) fail(ErrorCategory::validation, "max_iters must be >= 0");
    if (!(learning_rate > 0.0)) fail(ErrorCategory::validation, "learning_rate must be positive");
    if (!(fd_rel_step > 0.0)) fail(ErrorCategory::validation, "fd_rel_step must be positive");
    if (!(nu_min > 0.0 && nu_min < nu_max && nu_max < 0.5))
      fail(ErrorCategory::validation, "poisson bounds must satisfy 0 < min < max < 0.5");
    if (!(log_modulus_min < log_modulus_max)) fail(ErrorCategory::validation, "modulus bounds must be ordered");
    if (convergence_window < 1) fail(ErrorCategory::validation, "convergence_window must be >= 1");
  }
};

/// Loss value with a distinct flag for simulations that failed; an unstable
/// value is +inf and must never be mistaken for convergence.
struct LossValue {
  double value = 0.0;
  bool unstable = false;
  double image_term = 0.0;
  double flow_term = 0.0;
  std::string reason;

  static LossValue failed(std::string why) {
    LossValue l;
    l.value = std::numeric_limits<double>::infinity();
    l.unstable = true;
    l.reason = std::move(why);
    return l;
  }
};

inline double mean_squared_difference(const Image& a, const Image& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.pixels.size());
}

inline double mean_squared_difference(const FlowField& a, const FlowField& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.pixel_count());
}

/// Render + flow loss of a rendered sequence against observations:
///   sum_t mean (I_t - I^_t)^2 + lambda * sum_t mean |U_t - U^_t|^2
inline LossValue sequence_loss(const ObservationSet& observed, const RenderedSequence& rendered, double lambda) {
  LossValue l;
  for (std::size_t t = 0; t < observed.frames.size(); ++t)
    l.image_term += mean_squared_difference(observed.frames[t], rendered.frames[t]);
  for (std::size_t t = 0; t < observed.flows.size(); ++t)
    l.flow_term += mean_squared_difference(observed.flows[t], rendered.flows[t]);
  l.value = l.image_term + lambda * l.flow_term;
  return l;
}

/// Simulates `scene` under `field` for as many frames as were observed and
/// scores the rendering against the observations.
inline LossValue joint_loss(const ObservationSet& observed, const Scene& scene, const MaterialField& field,
                            double lambda) {
  Trajectory traj;
  try {
    traj = simulate(scene.particles, field, scene.sim, observed.frame_count());
  } catch (const Error& e) {
    switch (e.category()) {
      case ErrorCategory::instability:
      case ErrorCategory::degenerate_deformation:
      case ErrorCategory::out_of_domain:
        return LossValue::failed(std::string(category_name(e.category())) + ": " + e.what());
      default:
        throw;
    }
  }
  return sequence_loss(observed, render_trajectory(traj, observed.camera), lambda);
}

namespace detail {

template <typename Fn>
LossValue evaluate_loss(Fn& fn, const Eigen::VectorXd& theta) {
  using R = std::invoke_result_t<Fn&, const Eigen::VectorXd&>;
  if constexpr (std::is_same_v<R, LossValue>) {
    return fn(theta);
  } else {
    LossValue l;
    l.value = static_cast<double>(fn(theta));
    if (!std::isfinite(l.value)) l = LossValue::failed("non-finite loss");
    return l;
  }
}

}  // namespace detail

/// Central differences with step h_i = rel_step * max(|theta_i|, 1e-2). A side
/// whose evaluation is unstable is replaced by a one-sided difference from
/// theta itself. `fn` returns either LossValue or a plain double.
template <typename Fn>
Eigen::VectorXd fd_gradient(Fn&& fn, const Eigen::VectorXd& theta, double rel_step,
                            std::optional<LossValue> at_theta = std::nullopt) {
  Eigen::VectorXd grad(theta.size());
  auto center = [&]() -> const LossValue& {
    if (!at_theta) at_theta = detail::evaluate_loss(fn, theta);
    return *at_theta;
  };
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double h = rel_step * std::max(std::abs(theta(i)), 1e-2);
    Eigen::VectorXd probe = theta;
    probe(i) = theta(i) + h;
    const LossValue plus = detail::evaluate_loss(fn, probe);
    probe(i) = theta(i) - h;
    const LossValue minus = detail::evaluate_loss(fn, probe);
    if (!plus.unstable && !minus.unstable) {
      grad(i) = (plus.value - minus.value) / (2.0 * h);
      continue;
    }
    if (plus.unstable && minus.unstable)
      fail(ErrorCategory::gradient_unavailable,
           "both finite-difference probes of coordinate " + std::to_string(i) + " are unstable");
    const LossValue& c = center();
    if (c.unstable)
      fail(ErrorCategory::gradient_unavailable, "loss is unstable at the expansion point: " + c.reason);
    grad(i) = plus.unstable ? (c.value - minus.value) / h : (plus.value - c.value) / h;
  }
  return grad;
}

/// Maps the unfrozen part of a material field to the optimization vector:
/// (modulus coordinate, nu) per unfrozen object, nu omitted when pinned.
class ParameterMap {
 public:
  ParameterMap(const MaterialField& init, const OptimizeOptions& opts) : base_(init), opts_(opts) {
    for (const auto& [id, entry] : init.entries()) {
      if (entry.frozen) continue;
      slots_.push_back({id, entry.pin_poisson, entry.params.youngs_modulus});
    }
    if (slots_.empty()) fail(ErrorCategory::no_unfrozen_objects, "every object in the material field is frozen");
  }

  Eigen::Index dimension() const {
    Eigen::Index n = 0;
    for (const auto& s : slots_) n += s.pin_poisson ? 1 : 2;
    return n;
  }

  std::vector<ObjectId> ids() const {
    std::vector<ObjectId> out;
    for (const auto& s : slots_) out.push_back(s.id);
    return out;
  }

  Eigen::VectorXd encode(const MaterialField& field) const {
    Eigen::VectorXd theta(dimension());
    Eigen::Index k = 0;
    for (const auto& s : slots_) {
      const auto& p = field.at(s.id).params;
      theta(k++) = to_coordinate(p.youngs_modulus, s);
      if (!s.pin_poisson) theta(k++) = p.poisson_ratio;
    }
    return theta;
  }

  /// Frozen entries, densities and pinned ratios are copied from the base field untouched.
  MaterialField decode(const Eigen::VectorXd& theta) const {
    MaterialField out = base_;
    Eigen::Index k = 0;
    for (const auto& s : slots_) {
      MaterialEntry e = base_.at(s.id);
      e.params.youngs_modulus = from_coordinate(theta(k++), s);
      if (!s.pin_poisson) e.params.poisson_ratio = theta(k++);
      out.set(s.id, e);
    }
    return out;
  }

  void project(Eigen::VectorXd& theta) const {
    Eigen::Index k = 0;
    for (const auto& s : slots_) {
      const double lo = to_coordinate(std::pow(10.0, opts_.log_modulus_min), s);
      const double hi = to_coordinate(std::pow(10.0, opts_.log_modulus_max), s);
      theta(k) = std::clamp(theta(k), lo, hi);
      ++k;
      if (!s.pin_poisson) {
        theta(k) = std::clamp(theta(k), opts_.nu_min, opts_.nu_max);
        ++k;
      }
    }
  }

 private:
  struct Slot {
    ObjectId id;
    bool pin_poisson;
    double reference_modulus;
  };

  double to_coordinate(double E, const Slot& s) const {
    return opts_.modulus_scale == ModulusScale::log10 ? std::log10(E) : E / s.reference_modulus;
  }
  double from_coordinate(double c, const Slot& s) const {
    return opts_.modulus_scale == ModulusScale::log10 ? std::pow(10.0, c) : c * s.reference_modulus;
  }

  MaterialField base_;
  OptimizeOptions opts_;
  std::vector<Slot> slots_;
};

struct HistoryRecord {
  struct Entry {
    ObjectId object_id;
    double youngs_modulus;
    double poisson_ratio;
  };
  int iteration = 0;
  double loss = 0.0;
  double best_loss = 0.0;
  std::vector<Entry> params;
};

struct OptimizeResult {
  MaterialField field;  // best parameters seen
  std::vector<HistoryRecord> history;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  int iterations = 0;
  int rejected_steps = 0;
  bool converged = false;
};

/// Adam on a generic loss over the parameter vector of `map`.
template <typename LossFn>
OptimizeResult optimize_parameters(LossFn&& loss_fn, const MaterialField& init, const OptimizeOptions& opts) {
  opts.validate();
  const ParameterMap map(init, opts);
  auto record = [&](int iter, double loss, double best, const Eigen::VectorXd& theta) {
    const MaterialField f = map.decode(theta);
    HistoryRecord r{iter, loss, best, {}};
    for (ObjectId id : map.ids()) {
      const auto& p = f.at(id).params;
      r.params.push_back({id, p.youngs_modulus, p.poisson_ratio});
    }
    return r;
  };
  auto eval = [&](const Eigen::VectorXd& theta) { return loss_fn(map.decode(theta)); };

  Eigen::VectorXd theta = map.encode(init);
  map.project(theta);
  LossValue current = eval(theta);
  if (current.unstable) fail(ErrorCategory::instability, "initial material field is unstable: " + current.reason);

  OptimizeResult result;
  result.initial_loss = current.value;
  Eigen::VectorXd best = theta;
  double best_loss = current.value;
  std::vector<double> best_trace{best_loss};
  result.history.push_back(record(0, current.value, best_loss, theta));

  const Eigen::Index n = theta.size();
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(n), m2 = Eigen::VectorXd::Zero(n);
  double lr = opts.learning_rate;
  int step = 0;
  for (int iter = 1; iter <= opts.max_iters && best_loss > opts.loss_floor; ++iter) {
    result.iterations = iter;
    const Eigen::VectorXd grad = fd_gradient(eval, theta, opts.fd_rel_step, current);
    ++step;
    m1 = opts.adam_beta1 * m1 + (1.0 - opts.adam_beta1) * grad;
    m2 = opts.adam_beta2 * m2 + (1.0 - opts.adam_beta2) * grad.cwiseProduct(grad);
    const Eigen::VectorXd m1_hat = m1 / (1.0 - std::pow(opts.adam_beta1, step));
    const Eigen::VectorXd m2_hat = m2 / (1.0 - std::pow(opts.adam_beta2, step));
    Eigen::VectorXd candidate = theta - lr * (m1_hat.array() / (m2_hat.array().sqrt() + opts.adam_eps)).matrix();
    map.project(candidate);

    const LossValue trial = eval(candidate);
    if (trial.unstable) {
      // Rejected: stay put and shorten the step.
      ++result.rejected_steps;
      lr *= 0.5;
      best_trace.push_back(best_loss);
      continue;
    }
    theta = candidate;
    current = trial;
    if (current.value < best_loss) {
      best_loss = current.value;
      best = theta;
    }
    best_trace.push_back(best_loss);
    result.history.push_back(record(iter, current.value, best_loss, theta));

    if (iter >= opts.convergence_window) {
      const double before = best_trace[best_trace.size() - 1 - opts.convergence_window];
      if (before > 0.0 && (before - best_loss) / before < opts.convergence_tol) {
        result.converged = true;
        break;
      }
    }
  }
  result.field = map.decode(best);
  result.best_loss = best_loss;
  return result;
}

inline OptimizeResult optimize(const ObservationSet& observed, const Scene& scene, const MaterialField& init,
                               const OptimizeOptions& opts) {
  observed.validate();
  return optimize_parameters(
      [&](const MaterialField& field) { return joint_loss(observed, scene, field, opts.lambda_flow); }, init, opts);
}

/// Per-frame EPE of the flows simulated under `field` against the observed flows.
inline std::vector<double> per_frame_epe(const ObservationSet& observed, const Scene& scene,
                                         const MaterialField& field) {
  const Trajectory traj = simulate(scene.particles, field, scene.sim, observed.frame_count());
  std::vector<double> out;
  for (std::size_t t = 0; t < observed.flows.size(); ++t)
    out.push_back(epe(observed.flows[t], particle_flow(traj[t], traj[t + 1], observed.camera)));
  return out;
}

inline double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace elastident
