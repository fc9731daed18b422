#include "facegen/session_store.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <unordered_map>

#include <json.hpp>

#include "facegen/errors.hpp"
#include "facegen/rng.hpp"

namespace facegen {

using nlohmann::ordered_json;

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id) {
    const bool ok = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '-' || c == '_';
    if (!ok) return false;
  }
  return true;
}

ordered_json latent_json(const LatentVector& z) {
  ordered_json a = ordered_json::array();
  for (float v : z.values()) a.push_back(v);
  return a;
}

LatentVector latent_from_json(const ordered_json& j) {
  return LatentVector::from(std::span<const double>(j.get<std::vector<double>>()));
}

ordered_json step_event(const SessionStep& s) {
  ordered_json variants = ordered_json::array();
  for (const auto& v : s.variants) variants.push_back(latent_json(v));
  return {{"event", "step"},
          {"index", s.index},
          {"text", s.text},
          {"alpha", s.alpha},
          {"k", s.request.k},
          {"sigma", s.request.sigma},
          {"noise_seed", s.request.noise_seed},
          {"base", latent_json(s.base)},
          {"variants", std::move(variants)},
          {"timestamp", s.timestamp}};
}

void apply_event(RefinementSession& session, const ordered_json& e) {
  const auto kind = e.at("event").get<std::string>();
  if (kind == "create") {
    session.id = e.at("session_id").get<std::string>();
    session.created_at = e.at("timestamp").get<std::string>();
    return;
  }
  if (session.id.empty()) fail(ErrorKind::Persistence, "session log does not start with a create event");
  if (session.status == SessionStatus::Closed) fail(ErrorKind::Persistence, "session log has events after close");
  if (kind == "step") {
    SessionStep s;
    s.index = e.at("index").get<std::size_t>();
    if (s.index != session.steps.size()) fail(ErrorKind::Persistence, "session log has out-of-order steps");
    s.text = e.at("text").get<std::string>();
    s.alpha = e.at("alpha").get<double>();
    s.request.k = e.at("k").get<std::size_t>();
    s.request.sigma = e.at("sigma").get<double>();
    s.request.noise_seed = e.at("noise_seed").get<std::uint64_t>();
    s.base = latent_from_json(e.at("base"));
    for (const auto& v : e.at("variants")) s.variants.push_back(latent_from_json(v));
    s.timestamp = e.at("timestamp").get<std::string>();
    session.steps.push_back(std::move(s));
  } else if (kind == "select") {
    const auto step = e.at("step").get<std::size_t>();
    const auto index = e.at("variant_index").get<std::size_t>();
    if (step >= session.steps.size() || index >= session.steps[step].variants.size()) {
      fail(ErrorKind::Persistence, "session log selects a variant that does not exist");
    }
    session.steps[step].selected = index;
  } else if (kind == "close") {
    session.status = SessionStatus::Closed;
  } else {
    fail(ErrorKind::Persistence, "unknown session event '" + kind + "'");
  }
}

}  // namespace

std::optional<LatentVector> RefinementSession::latest_selection() const {
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
    if (it->selected) return it->variants[*it->selected];
  }
  return std::nullopt;
}

LatentVector refine_base(const Pipeline& pipeline, const RefinementSession& session, const RefineRequest& request,
                         double& alpha_used) {
  const auto selection = session.latest_selection();
  double alpha = request.alpha.value_or(1.0);
  if (!std::isfinite(alpha) || alpha < 0.0 || alpha > 1.0) fail(ErrorKind::InvalidRequest, "alpha must lie in [0, 1]");

  if (!request.text) {
    if (!selection) fail(ErrorKind::InvalidRequest, "a step needs text or a prior selection");
    alpha_used = 0.0;
    return *selection;
  }
  const LatentVector regressed = pipeline.latent_for_text(*request.text);
  if (!selection) {
    alpha_used = 1.0;
    return regressed;
  }
  alpha_used = alpha;
  LatentVector out;
  for (std::size_t i = 0; i < kLatentDim; ++i) {
    out[i] = static_cast<float>(alpha * static_cast<double>(regressed[i]) + (1.0 - alpha) * static_cast<double>((*selection)[i]));
  }
  return out;
}

struct SessionStore::Entry {
  std::mutex mutex;
  RefinementSession session;
};

struct SessionStore::Index {
  mutable std::shared_mutex mutex;
  std::unordered_map<std::string, std::shared_ptr<Entry>> sessions;
  std::mutex id_mutex;
  SplitMix64 ids{std::random_device{}() ^ (static_cast<std::uint64_t>(std::random_device{}()) << 32)};
};

SessionStore::SessionStore(std::filesystem::path dir) : dir_(std::move(dir)), index_(std::make_unique<Index>()) {
  if (!dir_.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) fail(ErrorKind::Persistence, "cannot create session directory " + dir_.string());
  }
}

SessionStore::~SessionStore() = default;

namespace {

void append_event(const std::filesystem::path& dir, const std::string& id, const ordered_json& event) {
  if (dir.empty()) return;
  const auto path = dir / (id + ".jsonl");
  std::ofstream out(path, std::ios::binary | std::ios::app);
  out << event.dump() << '\n';
  out.flush();
  if (!out) fail(ErrorKind::Persistence, "cannot append to session log " + path.string());
}

}  // namespace

RefinementSession SessionStore::create() {
  auto e = std::make_shared<Entry>();
  std::string id;
  {
    std::lock_guard lock(index_->id_mutex);
    for (;;) {
      char buf[24];
      std::snprintf(buf, sizeof(buf), "s%016llx", static_cast<unsigned long long>(index_->ids.next()));
      id = buf;
      std::shared_lock read(index_->mutex);
      const bool taken = index_->sessions.count(id) > 0 || (!dir_.empty() && std::filesystem::exists(dir_ / (id + ".jsonl")));
      if (!taken) break;
    }
  }
  e->session.id = id;
  e->session.created_at = utc_timestamp();
  append_event(dir_, id, {{"event", "create"}, {"session_id", id}, {"timestamp", e->session.created_at}});
  std::unique_lock lock(index_->mutex);
  index_->sessions.emplace(id, e);
  return e->session;
}

std::shared_ptr<SessionStore::Entry> SessionStore::entry(const std::string& id) const {
  if (!valid_id(id)) fail(ErrorKind::NotFound, "no session '" + id + "'");
  {
    std::shared_lock lock(index_->mutex);
    auto it = index_->sessions.find(id);
    if (it != index_->sessions.end()) return it->second;
  }
  const auto path = dir_ / (id + ".jsonl");
  if (dir_.empty() || !std::filesystem::exists(path)) fail(ErrorKind::NotFound, "no session '" + id + "'");
  auto e = std::make_shared<Entry>();
  e->session = replay(path);
  std::unique_lock lock(index_->mutex);
  return index_->sessions.emplace(id, e).first->second;  // another thread may have won the race
}

RefinementSession SessionStore::get(const std::string& id) const {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  return e->session;
}

SessionStep SessionStore::refine(const std::string& id, const Pipeline& pipeline, const RefineRequest& request) {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  auto& session = e->session;
  if (session.status == SessionStatus::Closed) fail(ErrorKind::SessionClosed, "session " + id + " is closed");
  request.variants.validate();

  SessionStep step;
  step.index = session.steps.size();
  step.text = request.text.value_or(std::string{});
  step.request = request.variants;
  step.base = refine_base(pipeline, session, request, step.alpha);
  step.variants = variant_latents(step.base, step.request);
  step.timestamp = utc_timestamp();
  append_event(dir_, id, step_event(step));
  session.steps.push_back(step);
  return step;
}

SessionStep SessionStore::select(const std::string& id, std::size_t step, std::size_t variant_index) {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  auto& session = e->session;
  if (session.status == SessionStatus::Closed) fail(ErrorKind::SessionClosed, "session " + id + " is closed");
  if (step >= session.steps.size()) fail(ErrorKind::InvalidSelection, "session has no step " + std::to_string(step));
  if (variant_index >= session.steps[step].variants.size()) {
    fail(ErrorKind::InvalidSelection, "step " + std::to_string(step) + " has no variant " + std::to_string(variant_index));
  }
  append_event(dir_, id,
               {{"event", "select"}, {"step", step}, {"variant_index", variant_index}, {"timestamp", utc_timestamp()}});
  session.steps[step].selected = variant_index;
  return session.steps[step];
}

RefinementSession SessionStore::close(const std::string& id) {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  if (e->session.status == SessionStatus::Closed) fail(ErrorKind::SessionClosed, "session " + id + " is already closed");
  append_event(dir_, id, {{"event", "close"}, {"timestamp", utc_timestamp()}});
  e->session.status = SessionStatus::Closed;
  return e->session;
}

RefinementSession SessionStore::replay(const std::filesystem::path& log_path) {
  std::ifstream in(log_path, std::ios::binary);
  if (!in) fail(ErrorKind::Persistence, "cannot open session log " + log_path.string());
  RefinementSession session;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      apply_event(session, ordered_json::parse(line));
    } catch (const ordered_json::exception& ex) {
      fail(ErrorKind::Persistence, log_path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    } catch (const Error& ex) {
      fail(ErrorKind::Persistence, log_path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  if (session.id.empty()) fail(ErrorKind::Persistence, "session log " + log_path.string() + " is empty");
  return session;
}

}  // namespace facegen
