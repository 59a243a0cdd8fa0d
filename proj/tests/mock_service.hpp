#pragma once

#include <functional>
#include <limits>
#include <mutex>
#include <random>
#include <string>
#include <thread>

// Eigen must precede httplib: resolv.h defines a _res macro.
#include "elastident/elastident.hpp"

#include <httplib.h>
#include <json.hpp>

namespace elastident::testing {

/// Local HTTP server standing in for the material service. Replies to POST
/// /v1/materials with whatever the current responder returns.
class MockService {
 public:
  struct Reply {
    int status = 200;
    std::string body;
  };
  using Responder = std::function<Reply(const httplib::Request&)>;

  MockService() {
    server_.Post("/v1/materials", [this](const httplib::Request& req, httplib::Response& res) {
      Reply r;
      {
        std::lock_guard<std::mutex> lock(mutex_);
        last_request_ = req.body;
        last_authorization_ = req.get_header_value("Authorization");
        r = responder_ ? responder_(req) : Reply{500, "no responder"};
      }
      res.status = r.status;
      res.set_content(r.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockService() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/materials"; }

  void respond(Responder r) {
    std::lock_guard<std::mutex> lock(mutex_);
    responder_ = std::move(r);
  }
  void respond_with(std::string body, int status = 200) {
    respond([body = std::move(body), status](const httplib::Request&) { return Reply{status, body}; });
  }

  std::string last_request() {
    std::lock_guard<std::mutex> lock(mutex_);
    return last_request_;
  }
  std::string last_authorization() {
    std::lock_guard<std::mutex> lock(mutex_);
    return last_authorization_;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mutex_;
  Responder responder_;
  std::string last_request_;
  std::string last_authorization_;
};

/// Two-object request used by the initializer tests.
inline InitRequest two_object_request() {
  InitRequest req;
  req.objects.push_back({0, "liver tissue", "", 1000.0, false});
  req.objects.push_back({1, "steel grasper", "", 7800.0, false});
  return req;
}

inline MaterialField fallback_field() {
  MaterialField f;
  f.set(0, {{1e4, 0.3, 1000.0}});
  f.set(1, {{1e6, 0.3, 7800.0}, true});
  return f;
}

inline nlohmann::json response_entry(ObjectId id, double E, double nu, bool rigid, double confidence) {
  return {{"object_id", id}, {"youngs_modulus_pa", E}, {"poisson_ratio", nu}, {"is_rigid", rigid},
          {"confidence", confidence}};
}

/// Random schema-valid response for two_object_request().
inline nlohmann::json valid_response(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> logE(1.0, 9.0), nu(0.001, 0.499), conf(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  nlohmann::json arr = nlohmann::json::array();
  for (ObjectId id : {0u, 1u}) arr.push_back(response_entry(id, std::pow(10.0, logE(rng)), nu(rng), coin(rng), conf(rng)));
  if (coin(rng)) std::swap(arr[0], arr[1]);
  return {{"objects", arr}};
}

/// A malformed or out-of-range reply derived from a valid one. Some
/// mutations (an extra top-level key, a rigid modulus above the clamp) stay
/// schema-valid on purpose; callers only assert invariants of the result.
inline MockService::Reply malformed_reply(std::mt19937_64& rng) {
  nlohmann::json doc = valid_response(rng);
  auto& e = doc["objects"][rng() % 2];
  static const char* keys[] = {"object_id", "youngs_modulus_pa", "poisson_ratio", "is_rigid", "confidence"};
  const char* key = keys[rng() % 5];
  static const nlohmann::json bad_values[] = {
      nullptr, "1e4", -1.0, 0.0, 0.5, 0.7, 1.5, -0.2, std::numeric_limits<double>::infinity(), true, nlohmann::json::array(),
      nlohmann::json::object(), 3.5, -7, std::numeric_limits<double>::quiet_NaN(), "NaN", 18446744073709551615ULL};
  switch (rng() % 14) {
    case 0: e.erase(key); break;
    case 1:
    case 2:
    case 3:
    case 4: e[key] = bad_values[rng() % std::size(bad_values)]; break;
    case 5: doc["objects"].push_back(doc["objects"][0]); break;
    case 6: doc["objects"].erase(doc["objects"].begin()); break;
    case 7: e["object_id"] = 2 + static_cast<int>(rng() % 100); break;
    case 8: {
      std::string s = doc.dump();
      return {200, s.substr(0, rng() % s.size())};
    }
    case 9: return {200, "Sure! Here are the estimates: " + doc.dump()};
    case 10: return {static_cast<int>(400 + rng() % 200), doc.dump()};
    case 11: doc = doc["objects"]; break;
    case 12: doc["extra"] = "ignored"; break;
    default:
      e["is_rigid"] = true;
      e["youngs_modulus_pa"] = 1e12;
      break;
  }
  return {200, doc.dump()};
}

/// Field satisfies the material invariants and covers exactly the requested ids.
inline bool field_is_sound(const MaterialField& f, const InitRequest& req) {
  if (f.size() != req.objects.size()) return false;
  for (const auto& o : req.objects) {
    if (!f.contains(o.object_id)) return false;
    if (!is_valid(f.at(o.object_id).params)) return false;
  }
  return true;
}

}  // namespace elastident::testing
