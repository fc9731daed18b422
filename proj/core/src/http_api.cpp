#include "facegen/http_api.hpp"

#include <array>
#include <deque>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

#include "facegen/errors.hpp"
#include "facegen/image_codec.hpp"

namespace facegen {

using nlohmann::ordered_json;

namespace {

// Latents the server has handed out, addressable by latent_id. Sharded so
// concurrent requests rarely share a lock.
class LatentCache {
 public:
  void put(const std::string& id, const LatentVector& z) {
    auto& s = shard(id);
    std::lock_guard lock(s.mutex);
    if (s.map.emplace(id, z).second) {
      s.order.push_back(id);
      if (s.order.size() > kPerShard) {
        s.map.erase(s.order.front());
        s.order.pop_front();
      }
    }
  }

  std::optional<LatentVector> find(const std::string& id) const {
    auto& s = shard(id);
    std::lock_guard lock(s.mutex);
    auto it = s.map.find(id);
    if (it == s.map.end()) return std::nullopt;
    return it->second;
  }

 private:
  static constexpr std::size_t kShards = 16;
  static constexpr std::size_t kPerShard = 1024;
  struct Shard {
    mutable std::mutex mutex;
    std::unordered_map<std::string, LatentVector> map;
    std::deque<std::string> order;
  };
  Shard& shard(const std::string& id) const { return shards_[std::hash<std::string>{}(id) % kShards]; }
  mutable std::array<Shard, kShards> shards_;
};

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyDescription:
    case ErrorKind::InvalidRequest:
    case ErrorKind::InvalidSelection:
    case ErrorKind::InvalidLatent:
    case ErrorKind::Shape:
      return 400;
    case ErrorKind::NotFound:
      return 404;
    case ErrorKind::SessionClosed:
      return 409;
    case ErrorKind::BackendUnavailable:
      return 502;
    case ErrorKind::ModelNotLoaded:
      return 503;
    default:
      return 500;
  }
}

void send_json(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorKind kind, const std::string& message) {
  send_json(res, status_for(kind), {{"error", std::string(to_string(kind))}, {"message", message}});
}

ordered_json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return ordered_json::object();
  ordered_json j = ordered_json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(ErrorKind::InvalidRequest, "request body must be a JSON object");
  return j;
}

std::optional<std::string> opt_string(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_string()) fail(ErrorKind::InvalidRequest, std::string(key) + " must be a string");
  return j[key].get<std::string>();
}

std::optional<double> opt_number(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_number()) fail(ErrorKind::InvalidRequest, std::string(key) + " must be a number");
  return j[key].get<double>();
}

std::optional<std::uint64_t> opt_unsigned(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (j[key].is_number_unsigned()) return j[key].get<std::uint64_t>();
  if (j[key].is_number_integer()) fail(ErrorKind::InvalidRequest, std::string(key) + " must be non-negative");
  fail(ErrorKind::InvalidRequest, std::string(key) + " must be an integer");
}

VariantRequest variant_request(const ordered_json& j) {
  VariantRequest r;
  if (auto k = opt_unsigned(j, "k")) {
    if (*k < 1 || *k > kMaxVariants) fail(ErrorKind::InvalidRequest, "k must lie in 1..32");
    r.k = static_cast<std::size_t>(*k);
  }
  if (auto s = opt_number(j, "sigma")) r.sigma = *s;
  if (auto seed = opt_unsigned(j, "noise_seed")) r.noise_seed = *seed;
  r.validate();
  return r;
}

ordered_json latent_json(const LatentVector& z) {
  ordered_json a = ordered_json::array();
  for (float v : z.values()) a.push_back(v);
  return a;
}

ordered_json attributes_json(const FaceAttributes& a) {
  ordered_json j = ordered_json::object();
  for (int c = 0; c < static_cast<int>(kAttributeCount); ++c) {
    j[std::string(channel_name(c))] = std::string(level_name(c, a.levels[static_cast<std::size_t>(c)]));
  }
  return j;
}

ordered_json result_json(const GenerationResult& r) {
  return {{"latent_id", r.latent_id},
          {"latent", latent_json(r.latent)},
          {"image_png_b64", base64_encode(encode_png(r.image))},
          {"attributes", r.attributes ? attributes_json(*r.attributes) : ordered_json(nullptr)},
          {"match", r.match ? ordered_json(*r.match) : ordered_json(nullptr)}};
}

}  // namespace

struct ApiServer::Impl {
  std::shared_ptr<const Pipeline> pipeline;
  ServerConfig config;
  SessionStore sessions;
  LatentCache cache;
  httplib::Server server;
  std::thread thread;
  int bound_port = -1;

  Impl(std::shared_ptr<const Pipeline> p, ServerConfig c)
      : pipeline(std::move(p)), config(std::move(c)), sessions(config.sessions_dir) {
    if (!pipeline) fail(ErrorKind::Configuration, "server needs a pipeline");
    routes();
  }

  ordered_json remember(const GenerationResult& r) {
    cache.put(r.latent_id, r.latent);
    return result_json(r);
  }

  ordered_json step_json(const SessionStep& s) {
    ordered_json variants = ordered_json::array();
    for (const auto& z : s.variants) variants.push_back(remember(pipeline->render(z, s.text)));
    return {{"index", s.index},
            {"text", s.text},
            {"alpha", s.alpha},
            {"k", s.request.k},
            {"sigma", s.request.sigma},
            {"noise_seed", s.request.noise_seed},
            {"timestamp", s.timestamp},
            {"selected", s.selected ? ordered_json(*s.selected) : ordered_json(nullptr)},
            {"base", remember(pipeline->render(s.base, s.text))},
            {"variants", std::move(variants)}};
  }

  ordered_json session_json(const RefinementSession& s) {
    ordered_json steps = ordered_json::array();
    for (const auto& step : s.steps) steps.push_back(step_json(step));
    return {{"session_id", s.id},
            {"status", s.status == SessionStatus::Active ? "active" : "closed"},
            {"created_at", s.created_at},
            {"steps", std::move(steps)}};
  }

  template <typename F>
  static httplib::Server::Handler guard(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, e.kind(), e.what());
      } catch (const ordered_json::exception& e) {
        send_error(res, ErrorKind::InvalidRequest, e.what());
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
      }
    };
  }

  static std::size_t index_param(const std::string& text) {
    if (text.empty() || text.size() > 9) fail(ErrorKind::InvalidSelection, "step index out of range");
    return static_cast<std::size_t>(std::stoul(text));
  }

  void routes() {
    server.Get("/api/health", guard([this](const httplib::Request&, httplib::Response& res) {
      const auto info = pipeline->embedder().info();
      send_json(res, 200,
                {{"status", "ok"},
                 {"model", pipeline->has_model() ? ordered_json(config.model_name) : ordered_json(nullptr)},
                 {"embedder", {{"name", info.name}, {"dimension", info.dimension}, {"deterministic", info.deterministic}}},
                 {"generator", pipeline->generator().name()}});
    }));

    server.Get("/api/lexicon", guard([this](const httplib::Request&, httplib::Response& res) {
      res.status = 200;
      res.set_content(pipeline->lexicon().source_json(), "application/json");
    }));

    server.Post("/api/generate", guard([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      const auto text = opt_string(body, "text");
      if (!text) fail(ErrorKind::InvalidRequest, "text is required");
      send_json(res, 200, remember(pipeline->generate_from_text(*text)));
    }));

    server.Post("/api/variants", guard([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      const auto request = variant_request(body);
      LatentVector base;
      if (body.contains("latent") && !body["latent"].is_null()) {
        if (!body["latent"].is_array()) fail(ErrorKind::InvalidRequest, "latent must be an array of 512 numbers");
        std::vector<double> values;
        for (const auto& v : body["latent"]) {
          if (!v.is_number()) fail(ErrorKind::InvalidRequest, "latent must be an array of 512 numbers");
          values.push_back(v.get<double>());
        }
        base = LatentVector::from(std::span<const double>(values));
      } else if (auto id = opt_string(body, "latent_id")) {
        auto found = cache.find(*id);
        if (!found) fail(ErrorKind::NotFound, "unknown latent_id " + *id);
        base = *found;
      } else {
        fail(ErrorKind::InvalidRequest, "latent or latent_id is required");
      }
      const auto text = opt_string(body, "text").value_or(std::string{});
      ordered_json out = ordered_json::array();
      for (const auto& r : pipeline->variants(base, request, text)) out.push_back(remember(r));
      send_json(res, 200, {{"variants", std::move(out)}});
    }));

    server.Post("/api/sessions", guard([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 201, {{"session_id", sessions.create().id}});
    }));

    server.Get(R"(/api/sessions/([A-Za-z0-9_-]+))", guard([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, session_json(sessions.get(req.matches[1])));
    }));

    server.Post(R"(/api/sessions/([A-Za-z0-9_-]+)/steps)",
                guard([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  RefineRequest r;
                  r.text = opt_string(body, "text");
                  r.alpha = opt_number(body, "alpha");
                  r.variants = variant_request(body);
                  send_json(res, 201, step_json(sessions.refine(req.matches[1], *pipeline, r)));
                }));

    server.Post(R"(/api/sessions/([A-Za-z0-9_-]+)/steps/(\d+)/select)",
                guard([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  if (!body.contains("variant_index") || !body["variant_index"].is_number_integer()) {
                    fail(ErrorKind::InvalidSelection, "variant_index must be an integer");
                  }
                  if (body["variant_index"].get<std::int64_t>() < 0) fail(ErrorKind::InvalidSelection, "variant_index is negative");
                  const auto step = sessions.select(req.matches[1], index_param(req.matches[2]),
                                                    body["variant_index"].get<std::size_t>());
                  send_json(res, 200, step_json(step));
                }));

    server.Post(R"(/api/sessions/([A-Za-z0-9_-]+)/close)",
                guard([this](const httplib::Request& req, httplib::Response& res) {
                  send_json(res, 200, session_json(sessions.close(req.matches[1])));
                }));

    if (!config.static_dir.empty()) {
      if (!server.set_mount_point("/", config.static_dir.string())) {
        fail(ErrorKind::Configuration, "static directory " + config.static_dir.string() + " does not exist");
      }
    }
  }
};

ApiServer::ApiServer(std::shared_ptr<const Pipeline> pipeline, ServerConfig config)
    : impl_(std::make_unique<Impl>(std::move(pipeline), std::move(config))) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind() {
  if (impl_->bound_port >= 0) return impl_->bound_port;
  int port = impl_->config.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(impl_->config.host);
  } else if (!impl_->server.bind_to_port(impl_->config.host, port)) {
    port = -1;
  }
  if (port < 0) fail(ErrorKind::Persistence, "cannot bind " + impl_->config.host + ":" + std::to_string(impl_->config.port));
  impl_->bound_port = port;
  return port;
}

void ApiServer::listen() {
  bind();
  impl_->server.listen_after_bind();
}

int ApiServer::start() {
  const int port = bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void ApiServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int ApiServer::port() const { return impl_->bound_port; }

SessionStore& ApiServer::sessions() { return impl_->sessions; }

}  // namespace facegen
