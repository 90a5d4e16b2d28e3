#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "duetml/classifier.hpp"
#include "duetml/dataset.hpp"
#include "duetml/features.hpp"
#include "duetml/history.hpp"
#include "duetml/mllm_client.hpp"
#include "duetml/util.hpp"

namespace duetml {

enum class SessionState { Fresh, AwaitingGoal, Conversing };
std::string_view to_string(SessionState s);

struct ActivityTracker {
  Timestamp last_interaction_at{0};
  std::uint64_t interactions_since_tick = 0;

  bool operator==(const ActivityTracker&) const = default;
};

struct StoredInference {
  std::string id;
  InferenceResult result;
  Bytes image;
  Timestamp created_at{0};
};

struct SessionConfig {
  std::string language = "English";
  ExtractorSpec extractor = ExtractorSpec::builtin();
  SvmHyperparams hyperparams;
  std::size_t chat_log_max_chars = 0;  // 0 = unlimited
  bool active_enabled_default = true;
};

/// Everything one user's workbench owns. Mutable state sits behind
/// `mutex`; the history and both agent contexts synchronise themselves so
/// agent calls can run without holding the session lock.
class Session {
 public:
  Session(std::string id, std::uint64_t seed, Clock clock, SessionConfig config,
          std::unique_ptr<MllmBackend> passive_backend,
          std::unique_ptr<MllmBackend> active_backend, BackendConfig limits = {});

  const std::string& id() const { return id_; }
  const SessionConfig& config() const { return config_; }
  Timestamp now() const { return clock_(); }
  std::uint64_t seed() const { return seed_; }

  mutable std::mutex mutex;
  SessionState state = SessionState::Fresh;
  TrainingDataset dataset;
  std::optional<ClassifierModel> model;
  std::map<std::string, StoredInference> inferences;
  std::uint64_t next_inference = 1;
  bool active_enabled = true;
  ActivityTracker tracker;
  std::uint64_t prompt_events = 0;  // montage seeds are drawn from this counter
  Timestamp created_at{0};

  DialogueHistory history;
  AgentContext passive;
  AgentContext active;
  std::atomic<bool> training{false};

  /// Caller holds `mutex`.
  void record_interaction();
  /// Caller holds `mutex`. Fresh seed for one prompt assembly.
  std::uint64_t next_montage_seed();

  // Dataset, training and evaluation. Each takes the lock, counts as a user
  // interaction on success, and logs a system event.
  const Category& add_category(std::string_view name);
  void remove_category(std::string_view name);
  void rename_category(std::string_view old_name, std::string_view new_name);
  UploadReport upload_images(std::string_view category, std::span<const Bytes> payloads);
  TrainResult train_model();  // Busy if a training run is in progress
  StoredInference infer(Bytes image);

 private:
  std::string id_;
  std::uint64_t seed_;
  Clock clock_;
  SessionConfig config_;
};

/// Directory layout under `root`:
///   sessions/<id>/session.json
///   sessions/<id>/dataset/manifest.json + dataset/<category>/<image>.<ext>
///   sessions/<id>/model.bin
///   sessions/<id>/inferences/<inference>.<ext>
void persist(const Session& session, const std::string& root);

/// Throws UnknownSession, CorruptManifest, VersionMismatch.
std::unique_ptr<Session> load_session(const std::string& root, const std::string& id, Clock clock,
                                      SessionConfig config,
                                      std::unique_ptr<MllmBackend> passive_backend,
                                      std::unique_ptr<MllmBackend> active_backend,
                                      BackendConfig limits = {});

std::string session_dir(const std::string& root, const std::string& id);

/// Digest over the ordered history (roles, texts, timestamps, envelopes).
std::string history_digest(std::span<const Message> messages);

}  // namespace duetml
