#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "facegen/inference.hpp"

namespace facegen {

struct SessionStep {
  std::size_t index = 0;
  std::string text;  // empty when the step continues from a selection alone
  double alpha = 1.0;
  VariantRequest request;
  LatentVector base;
  std::vector<LatentVector> variants;
  std::optional<std::size_t> selected;
  std::string timestamp;  // UTC, ISO 8601 with milliseconds

  friend bool operator==(const SessionStep&, const SessionStep&) = default;
};

enum class SessionStatus { Active, Closed };

struct RefinementSession {
  std::string id;
  SessionStatus status = SessionStatus::Active;
  std::string created_at;
  std::vector<SessionStep> steps;

  /// Variant chosen most recently by step order, if any step has a selection.
  std::optional<LatentVector> latest_selection() const;

  friend bool operator==(const RefinementSession&, const RefinementSession&) = default;
};

struct RefineRequest {
  std::optional<std::string> text;
  std::optional<double> alpha;  // defaults to 1
  VariantRequest variants;
};

/// Blend rule: with text and a prior selection s, base = alpha * forward(text)
/// + (1 - alpha) * s. Without a prior selection alpha is forced to 1. Without
/// text the base is s itself; with neither, InvalidRequest.
LatentVector refine_base(const Pipeline& pipeline, const RefinementSession& session, const RefineRequest& request,
                         double& alpha_used);

/// Sessions as append-only JSONL event logs, one file per session
/// (<dir>/<id>.jsonl) holding create, step, select and close events. State is
/// the replay of the log; sessions unknown in memory are replayed on first
/// access, so a restarted store sees everything a previous one wrote. An
/// empty directory path keeps sessions in memory only.
///
/// Each session has its own mutex; operations on distinct sessions never
/// contend beyond a brief map lookup.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir = {});
  ~SessionStore();
  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  RefinementSession create();
  /// NotFound for unknown or malformed ids.
  RefinementSession get(const std::string& id) const;

  /// Computes and appends the next step under the session's lock.
  /// SessionClosed, InvalidRequest, EmptyDescription.
  SessionStep refine(const std::string& id, const Pipeline& pipeline, const RefineRequest& request);

  /// InvalidSelection when the step or variant index does not exist.
  SessionStep select(const std::string& id, std::size_t step, std::size_t variant_index);

  RefinementSession close(const std::string& id);

  /// Rebuilds a session from its event log alone.
  static RefinementSession replay(const std::filesystem::path& log_path);

  const std::filesystem::path& directory() const { return dir_; }

 private:
  struct Entry;
  std::shared_ptr<Entry> entry(const std::string& id) const;

  std::filesystem::path dir_;
  struct Index;
  std::unique_ptr<Index> index_;
};

}  // namespace facegen
