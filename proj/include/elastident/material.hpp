#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "elastident/error.hpp"

namespace elastident {

using ObjectId = std::uint32_t;

/// Isotropic hyperelastic parameters of one object. Density is a fixed scene
/// input; only the modulus and Poisson's ratio are ever optimized.
struct MaterialParams {
  double youngs_modulus = 0.0;  // Pa
  double poisson_ratio = 0.0;
  double density = 0.0;  // kg/m^3

  friend bool operator==(const MaterialParams&, const MaterialParams&) = default;
};

struct LameParams {
  double mu = 0.0;
  double lambda = 0.0;
};

struct ElasticModuli {
  double shear = 0.0;  // G
  double bulk = 0.0;   // K
};

inline bool is_valid(const MaterialParams& p) {
  return std::isfinite(p.youngs_modulus) && std::isfinite(p.poisson_ratio) &&
         std::isfinite(p.density) && p.youngs_modulus > 0.0 && p.density > 0.0 &&
         p.poisson_ratio > 0.0 && p.poisson_ratio < 0.5;
}

inline void validate(const MaterialParams& p) {
  if (!(std::isfinite(p.youngs_modulus) && p.youngs_modulus > 0.0))
    fail(ErrorCategory::domain, "youngs_modulus must be positive, got " + std::to_string(p.youngs_modulus));
  if (!(std::isfinite(p.poisson_ratio) && p.poisson_ratio > 0.0 && p.poisson_ratio < 0.5))
    fail(ErrorCategory::domain, "poisson_ratio must lie in (0, 0.5), got " + std::to_string(p.poisson_ratio));
  if (!(std::isfinite(p.density) && p.density > 0.0))
    fail(ErrorCategory::domain, "density must be positive, got " + std::to_string(p.density));
}

inline LameParams lame_from_params(const MaterialParams& p) {
  validate(p);
  const double E = p.youngs_modulus;
  const double nu = p.poisson_ratio;
  return {E / (2.0 * (1.0 + nu)), E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))};
}

inline ElasticModuli derived_moduli(const MaterialParams& p) {
  validate(p);
  const double E = p.youngs_modulus;
  const double nu = p.poisson_ratio;
  return {E / (2.0 * (1.0 + nu)), E / (3.0 * (1.0 - 2.0 * nu))};
}

/// Parameter-recovery error: unweighted mean of four per-component relative
/// errors. E, G and K are compared as log10 values, nu linearly.
inline double relative_error(const MaterialParams& estimate, const MaterialParams& truth) {
  validate(estimate);
  validate(truth);
  const ElasticModuli est = derived_moduli(estimate);
  const ElasticModuli tru = derived_moduli(truth);

  auto log_term = [](double e, double t, const char* name) {
    const double lt = std::log10(t);
    if (lt == 0.0)
      fail(ErrorCategory::domain, std::string("truth ") + name + " is exactly 1 Pa; log-space relative error undefined");
    return std::abs(std::log10(e) - lt) / std::abs(lt);
  };

  const double e_term = log_term(estimate.youngs_modulus, truth.youngs_modulus, "youngs_modulus");
  const double g_term = log_term(est.shear, tru.shear, "shear modulus");
  const double k_term = log_term(est.bulk, tru.bulk, "bulk modulus");
  const double nu_term = std::abs(estimate.poisson_ratio - truth.poisson_ratio) / truth.poisson_ratio;
  return (e_term + nu_term + g_term + k_term) / 4.0;
}

struct MaterialEntry {
  MaterialParams params;
  bool frozen = false;
  bool pin_poisson = false;  // optimize E only

  friend bool operator==(const MaterialEntry&, const MaterialEntry&) = default;
};

/// Object-wise material field, keyed by object id.
class MaterialField {
 public:
  using Map = std::map<ObjectId, MaterialEntry>;

  MaterialField() = default;
  explicit MaterialField(Map entries) : entries_(std::move(entries)) {
    for (const auto& [id, e] : entries_) validate(e.params);
  }

  void set(ObjectId id, MaterialEntry entry) {
    validate(entry.params);
    entries_[id] = entry;
  }

  bool contains(ObjectId id) const { return entries_.count(id) != 0; }

  const MaterialEntry& at(ObjectId id) const {
    auto it = entries_.find(id);
    if (it == entries_.end())
      fail(ErrorCategory::missing_material, "no material for object " + std::to_string(id));
    return it->second;
  }

  std::vector<ObjectId> unfrozen_ids() const {
    std::vector<ObjectId> ids;
    for (const auto& [id, e] : entries_)
      if (!e.frozen) ids.push_back(id);
    return ids;
  }

  const Map& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  friend bool operator==(const MaterialField&, const MaterialField&) = default;

 private:
  Map entries_;
};

/// Mean relative error over the estimate's unfrozen objects.
inline double field_relative_error(const MaterialField& estimate, const MaterialField& truth) {
  const auto ids = estimate.unfrozen_ids();
  if (ids.empty())
    fail(ErrorCategory::no_unfrozen_objects, "relative error needs at least one unfrozen object");
  double sum = 0.0;
  for (ObjectId id : ids) sum += relative_error(estimate.at(id).params, truth.at(id).params);
  return sum / static_cast<double>(ids.size());
}

}  // namespace elastident
