// Copyright 2026 The LPM Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// JSON-over-HTTP edit service. EditService::handle is transport-free;
// configure_server binds it to an httplib server.
//
//   POST /encode    {points, labels?}            -> {model_id, part_presence, k, l, labels}
//   POST /decode    {model_id} | {global_feature} -> {cloud}
//   POST /edit      {op, args} | {op: {...}}      -> {model_id, cloud, part_presence}
//   POST /generate  {head, count, seed?}          -> {model_ids, clouds}
//   GET  /models                                  -> {models}
//   GET  /health                                  -> {status, ...}
//
// Every response carries the server seed and the checkpoint hash.

#pragma once

#include <atomic>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "lpm/checkpoint.hpp"
#include "lpm/cloud.hpp"
#include "lpm/generative.hpp"
#include "lpm/latent_edit.hpp"
#include "lpm/model.hpp"
// After Eigen: <resolv.h> defines a `_res` macro that clashes with Eigen.
#include "httplib.h"

namespace lpm {

struct ServiceOptions {
  std::size_t cache_capacity = 256;
  std::size_t max_body_bytes = 1 << 20;
  std::size_t max_generate = 64;
  std::uint64_t seed = 0;
  std::string cors_origin = "*";
};

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

/// Latent state cached per model id. Entries never change after insertion.
struct SessionEntry {
  std::optional<PartFeatureSet<float>> parts;  // absent for global-only results
  GlobalFeature<float> global;
  std::string origin;  // encode | edit:<kind> | generate:<head>
};

/// Bounded LRU map from id to immutable entry.
class SessionStore {
 public:
  explicit SessionStore(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ < 1) throw Error("session cache capacity must be >= 1");
  }

  std::string insert(SessionEntry e) {
    const std::string id = "m" + std::to_string(next_id_.fetch_add(1) + 1);
    auto ptr = std::make_shared<const SessionEntry>(std::move(e));
    std::lock_guard<std::mutex> lock(mu_);
    order_.push_front(id);
    map_[id] = {std::move(ptr), order_.begin()};
    while (map_.size() > capacity_) {
      map_.erase(order_.back());
      order_.pop_back();
    }
    return id;
  }

  std::shared_ptr<const SessionEntry> find(const std::string& id) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = map_.find(id);
    if (it == map_.end()) return nullptr;
    order_.splice(order_.begin(), order_, it->second.second);
    return it->second.first;
  }

  /// Most recently used first.
  std::vector<std::pair<std::string, std::shared_ptr<const SessionEntry>>> list() {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<std::pair<std::string, std::shared_ptr<const SessionEntry>>> out;
    for (const auto& id : order_) out.emplace_back(id, map_.at(id).first);
    return out;
  }

  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::atomic<std::uint64_t> next_id_{0};
  std::mutex mu_;
  std::list<std::string> order_;
  std::unordered_map<std::string, std::pair<std::shared_ptr<const SessionEntry>, std::list<std::string>::iterator>> map_;
};

class EditService {
 public:
  EditService(Bundle bundle, std::string checkpoint_hash, ServiceOptions opt = {})
      : bundle_(std::move(bundle)), hash_(std::move(checkpoint_hash)), opt_(opt), store_(opt.cache_capacity) {}

  const Bundle& bundle() const { return bundle_; }
  const ServiceOptions& options() const { return opt_; }

  ServiceResponse handle(const std::string& method, const std::string& path, const std::string& body) {
    try {
      if (body.size() > opt_.max_body_bytes) {
        return error(413, "request body of " + std::to_string(body.size()) + " bytes exceeds the " +
                              std::to_string(opt_.max_body_bytes) + "-byte limit");
      }
      if (method == "GET" && path == "/health") return health();
      if (method == "GET" && path == "/models") return models();
      if (method == "POST") {
        if (path != "/encode" && path != "/decode" && path != "/edit" && path != "/generate") {
          return error(404, "unknown endpoint " + path);
        }
        nlohmann::json req;
        try {
          req = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
          return error(400, std::string("malformed JSON: ") + e.what());
        }
        if (!req.is_object()) return error(400, "request body must be a JSON object");
        if (path == "/encode") return encode(req);
        if (path == "/decode") return decode(req);
        if (path == "/edit") return edit(req);
        return generate(req);
      }
      return error(404, "unknown endpoint " + method + " " + path);
    } catch (const NotFound& e) {
      return error(404, e.what());
    } catch (const HeadMissing& e) {
      return error(409, e.what());
    } catch (const NonFiniteError& e) {
      return error(500, e.what());
    } catch (const Error& e) {
      return error(400, e.what());
    } catch (const nlohmann::json::exception& e) {
      return error(400, std::string("bad request: ") + e.what());
    } catch (const std::exception& e) {
      return error(500, e.what());
    }
  }

  std::vector<std::string> heads() const {
    std::vector<std::string> h;
    if (bundle_.vae && bundle_.vae->trained) h.push_back("vae");
    if (bundle_.gan && bundle_.gan->trained) h.push_back(to_string(bundle_.gan->config.objective));
    return h;
  }

 private:
  class NotFound : public Error {
   public:
    using Error::Error;
  };
  class HeadMissing : public Error {
   public:
    using Error::Error;
  };

  const LpmModel<float>& model() const { return bundle_.model; }
  Index k() const { return bundle_.model.spec.parts; }

  nlohmann::json stamp(nlohmann::json j) const {
    j["seed"] = opt_.seed;
    j["checkpoint"] = hash_;
    return j;
  }

  ServiceResponse ok(nlohmann::json j) const { return {200, stamp(std::move(j))}; }
  ServiceResponse error(int status, const std::string& msg) const { return {status, stamp({{"error", msg}})}; }

  static nlohmann::json presence_json(const std::optional<PartFeatureSet<float>>& p) {
    if (!p) return nullptr;
    nlohmann::json a = nlohmann::json::array();
    for (char c : p->present) a.push_back(c != 0);
    return a;
  }

  std::shared_ptr<const SessionEntry> lookup(const std::string& id) {
    auto e = store_.find(id);
    if (!e) throw NotFound("unknown model_id '" + id + "'");
    return e;
  }

  nlohmann::json decoded_cloud(const GlobalFeature<float>& g) const { return cloud_to_json(decode_labeled(model(), g)); }

  ServiceResponse health() const {
    return ok({{"status", "ok"},
               {"kind", to_string(bundle_.kind)},
               {"heads", heads()},
               {"k", model().spec.parts},
               {"l", model().spec.feature_size},
               {"n", model().spec.points},
               {"pooling", to_string(model().spec.pooling)}});
  }

  ServiceResponse models() {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [id, e] : store_.list()) {
      list.push_back({{"model_id", id}, {"origin", e->origin}, {"part_presence", presence_json(e->parts)}});
    }
    return ok({{"models", std::move(list)}, {"capacity", store_.capacity()}});
  }

  ServiceResponse encode(const nlohmann::json& req) {
    const bool given = req.contains("labels");
    LabeledCloud cloud = cloud_from_json(req, static_cast<int>(k()));
    EncodeResult<float> e;
    Labels used;
    if (given) {
      e = lpm::encode(model(), cloud);
      used = cloud.labels;
    } else {
      auto r = encode_predicted(model(), cloud);
      e = std::move(r.first);
      used = std::move(r.second);
    }
    SessionEntry entry{e.parts, e.global, "encode"};
    const std::string id = store_.insert(std::move(entry));
    return ok({{"model_id", id},
               {"part_presence", presence_json(e.parts)},
               {"k", k()},
               {"l", model().spec.feature_size},
               {"labels", used},
               {"label_source", given ? "given" : "predicted"}});
  }

  ServiceResponse decode(const nlohmann::json& req) {
    GlobalFeature<float> g;
    nlohmann::json extra = nlohmann::json::object();
    if (req.contains("model_id")) {
      const auto id = req.at("model_id").get<std::string>();
      g = lookup(id)->global;
      extra["model_id"] = id;
    } else if (req.contains("global_feature")) {
      const auto v = req.at("global_feature").get<std::vector<double>>();
      if (static_cast<Index>(v.size()) != model().spec.feature_size) {
        throw ShapeError("global_feature has " + std::to_string(v.size()) + " entries, expected " +
                         std::to_string(model().spec.feature_size));
      }
      g.resize(static_cast<Index>(v.size()));
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) throw Error("global_feature contains a non-finite value");
        g(static_cast<Index>(i)) = static_cast<float>(v[i]);
      }
    } else {
      throw Error("decode needs 'model_id' or 'global_feature'");
    }
    extra["cloud"] = decoded_cloud(g);
    return ok(std::move(extra));
  }

  RowVector<float> generate_row(const std::string& head, int part, std::uint64_t seed) const {
    require_head(head);
    if (head == "vae") return sample_latents(*bundle_.vae, k(), 1, seed)[0].features.row(part - 1);
    return sample_latents(*bundle_.gan, 1, seed)[0].features.row(part - 1);
  }

  void require_head(const std::string& head) const {
    for (const auto& h : heads())
      if (h == head) return;
    if (head != "vae" && head != "gan" && head != "wgan") throw Error("unknown head '" + head + "' (expected vae|gan|wgan)");
    throw HeadMissing("head '" + head + "' is not loaded by this server");
  }

  ServiceResponse edit(const nlohmann::json& req) {
    if (!req.contains("op")) throw Error("edit needs 'op'");
    nlohmann::json desc;
    if (req["op"].is_object()) {
      desc = req["op"];
    } else {
      desc = req.value("args", nlohmann::json::object());
      if (!desc.is_object()) throw Error("edit 'args' must be an object");
      desc["kind"] = req["op"];
    }
    const EditOp op = edit_op_from_json(desc);
    std::vector<std::shared_ptr<const SessionEntry>> held;
    SourceLookup<float> source = [&](const std::string& id) -> const PartFeatureSet<float>& {
      auto e = lookup(id);
      if (!e->parts) throw Error("model_id '" + id + "' holds only a global feature and has no parts to edit");
      held.push_back(e);
      return *e->parts;
    };
    RowGenerator<float> gen = [this](const std::string& head, int part, std::uint64_t seed) {
      return generate_row(head, part, seed);
    };
    EditResult<float> r = apply_edit<float>(op, source, model().spec.pooling, gen);
    const auto presence = presence_json(r.parts);
    nlohmann::json cloud = decoded_cloud(r.global);
    const std::string id = store_.insert({std::move(r.parts), r.global, std::string("edit:") + to_string(op.kind)});
    return ok({{"model_id", id}, {"cloud", std::move(cloud)}, {"part_presence", presence}, {"op", to_json(op)}});
  }

  ServiceResponse generate(const nlohmann::json& req) {
    const std::string head = req.value("head", std::string("vae"));
    const auto count = req.value("count", std::int64_t{1});
    const auto seed = req.value("seed", opt_.seed);
    if (count < 0 || static_cast<std::size_t>(count) > opt_.max_generate) {
      throw Error("count must be in 0.." + std::to_string(opt_.max_generate));
    }
    require_head(head);
    const auto latents = head == "vae" ? sample_latents(*bundle_.vae, k(), static_cast<std::size_t>(count), seed)
                                       : sample_latents(*bundle_.gan, static_cast<std::size_t>(count), seed);
    nlohmann::json ids = nlohmann::json::array(), clouds = nlohmann::json::array();
    for (const auto& z : latents) {
      const auto g = fuse_global(z, model().spec.pooling);
      clouds.push_back(decoded_cloud(g));
      ids.push_back(store_.insert({z, g, "generate:" + head}));
    }
    return ok({{"model_ids", std::move(ids)}, {"clouds", std::move(clouds)}, {"head", head}, {"request_seed", seed}});
  }

  Bundle bundle_;
  std::string hash_;
  ServiceOptions opt_;
  SessionStore store_;
};

/// Routes every endpoint of `svc` on `server`, with CORS headers.
inline void configure_server(httplib::Server& server, EditService& svc) {
  const std::string origin = svc.options().cors_origin;
  server.set_payload_max_length(svc.options().max_body_bytes + 1);
  server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  auto bridge = [&svc](const httplib::Request& req, httplib::Response& res) {
    const ServiceResponse r = svc.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  for (const char* p : {"/health", "/models"}) server.Get(p, bridge);
  for (const char* p : {"/encode", "/decode", "/edit", "/generate"}) server.Post(p, bridge);
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

}  // namespace lpm
