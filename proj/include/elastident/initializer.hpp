#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

// Eigen must precede httplib: resolv.h defines a _res macro.
#include "elastident/linalg.hpp"

#include <httplib.h>
#include <json.hpp>

#include "elastident/error.hpp"
#include "elastident/formats.hpp"
#include "elastident/material.hpp"
#include "elastident/scene.hpp"

namespace elastident {

/// Field taken verbatim from the scene's inline materials.
inline MaterialField manual_init(const Scene& scene) {
  MaterialField::Map entries;
  std::vector<ObjectId> missing;
  for (const auto& obj : scene.objects) {
    if (!obj.material) {
      missing.push_back(obj.id);
      continue;
    }
    entries[obj.id] = MaterialEntry{*obj.material, obj.frozen, obj.pin_poisson};
  }
  if (!missing.empty()) {
    std::string ids;
    for (ObjectId id : missing) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
    fail(ErrorCategory::missing_material, "no material configured for object(s) " + ids);
  }
  return MaterialField(std::move(entries));
}

struct InitObject {
  ObjectId object_id = 0;
  std::string label;
  std::string image_path;
  // Not sent to the service; density always comes from the scene.
  double density = 1000.0;
  bool pin_poisson = false;
};

struct InitRequest {
  std::string prompt_template = "elastident-material-v1";
  std::vector<InitObject> objects;
};

struct InitResponseEntry {
  ObjectId object_id = 0;
  double youngs_modulus_pa = 0.0;
  double poisson_ratio = 0.0;
  bool is_rigid = false;
  double confidence = 0.0;

  friend bool operator==(const InitResponseEntry&, const InitResponseEntry&) = default;
};

using InitResponse = std::vector<InitResponseEntry>;

inline InitRequest make_init_request(const Scene& scene) {
  InitRequest req;
  std::set<ObjectId> ids;
  for (const auto& obj : scene.objects) {
    if (!ids.insert(obj.id).second)
      fail(ErrorCategory::validation, "duplicate object id " + std::to_string(obj.id) + " in init request");
    req.objects.push_back({obj.id, obj.label, obj.image, obj.density, obj.pin_poisson});
  }
  return req;
}

inline std::string prompt_text(const std::string& template_id) {
  if (template_id != "elastident-material-v1")
    fail(ErrorCategory::validation, "unknown prompt template '" + template_id + "'");
  return "You are given labelled objects from a surgical scene, optionally with a masked reference image each. "
         "For every object estimate its isotropic linear-elastic properties. Answer ONLY with a JSON document of "
         "the form {\"objects\": [{\"object_id\": <integer>, \"youngs_modulus_pa\": <positive number>, "
         "\"poisson_ratio\": <number strictly between 0 and 0.5>, \"is_rigid\": <boolean>, \"confidence\": "
         "<number in [0, 1]>}]} with exactly one entry per requested object_id and no other text.";
}

inline nlohmann::json request_body(const InitRequest& req) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : req.objects) {
    nlohmann::json j = {{"object_id", o.object_id}, {"label", o.label}};
    if (!o.image_path.empty()) {
      j["image_path"] = o.image_path;
      if (std::filesystem::exists(o.image_path))
        j["image_base64"] = httplib::detail::base64_encode(read_file(o.image_path));
    }
    objects.push_back(std::move(j));
  }
  return {{"prompt_template", req.prompt_template},
          {"prompt", prompt_text(req.prompt_template)},
          {"response_schema",
           {{"objects",
             {{{"object_id", "integer"},
               {"youngs_modulus_pa", "number > 0"},
               {"poisson_ratio", "number in (0, 0.5)"},
               {"is_rigid", "boolean"},
               {"confidence", "number in [0, 1]"}}}}}},
          {"objects", objects}};
}

/// Strict parse: every field present, correctly typed and in range, and the
/// response covers exactly the requested object ids.
inline InitResponse parse_init_response(const std::string& body, const InitRequest& req) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::schema_violation, std::string("response is not valid JSON: ") + e.what());
  }
  auto violation = [](const std::string& field, const std::string& msg) {
    fail(ErrorCategory::schema_violation, field + ": " + msg);
  };
  if (!doc.is_object() || !doc.contains("objects")) violation("objects", "missing");
  const auto& arr = doc["objects"];
  if (!arr.is_array()) violation("objects", "expected an array");

  std::set<ObjectId> wanted;
  for (const auto& o : req.objects) wanted.insert(o.object_id);

  InitResponse out;
  std::set<ObjectId> seen;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& e = arr[i];
    const std::string at = "objects[" + std::to_string(i) + "]";
    if (!e.is_object()) violation(at, "expected an object");
    auto number = [&](const char* key) {
      if (!e.contains(key)) violation(at + "." + key, "missing");
      const auto& v = e[key];
      if (!v.is_number()) violation(at + "." + key, "expected a number, got " + v.dump());
      const double d = v.get<double>();
      if (!std::isfinite(d)) violation(at + "." + key, "not finite");
      return d;
    };
    InitResponseEntry r;
    if (!e.contains("object_id")) violation(at + ".object_id", "missing");
    if (!e["object_id"].is_number_integer() || e["object_id"].get<long long>() < 0)
      violation(at + ".object_id", "expected a non-negative integer, got " + e["object_id"].dump());
    r.object_id = static_cast<ObjectId>(e["object_id"].get<long long>());
    r.youngs_modulus_pa = number("youngs_modulus_pa");
    if (!(r.youngs_modulus_pa > 0.0))
      violation(at + ".youngs_modulus_pa", "must be positive, got " + e["youngs_modulus_pa"].dump());
    r.poisson_ratio = number("poisson_ratio");
    if (!(r.poisson_ratio > 0.0 && r.poisson_ratio < 0.5))
      violation(at + ".poisson_ratio", "must lie in (0, 0.5), got " + e["poisson_ratio"].dump());
    if (!e.contains("is_rigid")) violation(at + ".is_rigid", "missing");
    if (!e["is_rigid"].is_boolean()) violation(at + ".is_rigid", "expected a boolean, got " + e["is_rigid"].dump());
    r.is_rigid = e["is_rigid"].get<bool>();
    r.confidence = number("confidence");
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0))
      violation(at + ".confidence", "must lie in [0, 1], got " + e["confidence"].dump());
    if (!wanted.count(r.object_id)) violation(at + ".object_id", "unrequested object " + std::to_string(r.object_id));
    if (!seen.insert(r.object_id).second)
      violation(at + ".object_id", "duplicate object " + std::to_string(r.object_id));
    out.push_back(r);
  }
  for (ObjectId id : wanted)
    if (!seen.count(id)) violation("objects", "no entry for object " + std::to_string(id));
  return out;
}

/// Rigid objects are frozen, with the modulus clamped to `max_modulus`.
inline MaterialField field_from_response(const InitResponse& resp, const InitRequest& req, double max_modulus) {
  MaterialField::Map entries;
  for (const auto& r : resp) {
    const auto it = std::find_if(req.objects.begin(), req.objects.end(),
                                 [&](const InitObject& o) { return o.object_id == r.object_id; });
    if (it == req.objects.end())
      fail(ErrorCategory::schema_violation, "objects: unrequested object " + std::to_string(r.object_id));
    const double E = r.is_rigid ? std::min(r.youngs_modulus_pa, max_modulus) : r.youngs_modulus_pa;
    entries[r.object_id] = MaterialEntry{{E, r.poisson_ratio, it->density}, r.is_rigid, it->pin_poisson};
  }
  return MaterialField(std::move(entries));
}

struct MllmOptions {
  std::chrono::milliseconds timeout{30000};
  std::string api_key_env = "ELASTIDENT_MLLM_KEY";
  double max_modulus = 1e8;
};

struct InitOutcome {
  MaterialField field;
  bool used_fallback = false;
  /// "<category>: <message>" of the failure that triggered the fallback.
  std::string failure;
};

namespace detail {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    fail(ErrorCategory::transport, "endpoint '" + url + "' is not an absolute URL");
  const auto slash = url.find('/', scheme_end + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

inline std::string post_json(const std::string& url, const std::string& body, const MllmOptions& opts) {
  const Endpoint ep = split_endpoint(url);
  httplib::Client client(ep.origin);
  if (!client.is_valid()) fail(ErrorCategory::transport, "unsupported endpoint '" + url + "'");
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opts.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (const char* key = std::getenv(opts.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);
  auto res = client.Post(ep.path, headers, body, "application/json");
  if (!res) fail(ErrorCategory::transport, "request to " + url + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    fail(ErrorCategory::transport, "request to " + url + " returned HTTP " + std::to_string(res->status));
  return res->body;
}

}  // namespace detail

/// Queries the material service. On any failure, returns `fallback` when
/// given (recording the failure) and rethrows otherwise. An empty endpoint
/// without a fallback is a no-fallback error.
inline InitOutcome mllm_init(const std::string& endpoint, const InitRequest& req, const MllmOptions& opts,
                             const std::optional<MaterialField>& fallback) {
  if (endpoint.empty()) {
    if (!fallback) fail(ErrorCategory::no_fallback, "no material service endpoint configured and no fallback field");
    return {*fallback, true, "transport: no endpoint configured"};
  }
  try {
    const std::string body = detail::post_json(endpoint, request_body(req).dump(), opts);
    const InitResponse resp = parse_init_response(body, req);
    return {field_from_response(resp, req, opts.max_modulus), false, {}};
  } catch (const Error& e) {
    if (!fallback) throw;
    return {*fallback, true, std::string(category_name(e.category())) + ": " + e.what()};
  }
}

}  // namespace elastident
