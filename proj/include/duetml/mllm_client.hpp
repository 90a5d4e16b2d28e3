#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "duetml/prompts.hpp"

namespace duetml {

enum class AgentId { Passive, Active };
std::string_view to_string(AgentId id);

struct ChatMessage {
  enum class Role { System, User, Assistant };
  Role role = Role::User;
  std::string text;
  std::vector<Attachment> attachments;  // only meaningful on user messages
};

struct ChatRequest {
  std::string template_id;
  std::vector<ChatMessage> messages;

  /// Stable digest over roles, texts and attachment digests.
  std::string digest() const;
  std::size_t attachment_count() const;
  std::size_t attachment_bytes() const;
  /// Text of the last user message; what mock rules match against.
  std::string_view latest_user_text() const;
};

struct BackendConfig {
  std::string endpoint = "https://api.openai.com/v1";
  std::string model = "gpt-4o-2024-05-13";
  std::string api_key;
  std::chrono::milliseconds timeout{60000};
  int retries = 0;
  std::optional<double> temperature;
  std::size_t max_attachments = 11;
  std::size_t max_attachment_bytes = 20u << 20;
};

struct HealthStatus {
  bool reachable = false;
  std::string detail;
};

class MllmBackend {
 public:
  virtual ~MllmBackend() = default;
  /// Returns the reply text. Throws Timeout, HttpError, AuthFailure.
  virtual std::string complete(const ChatRequest& request) = 0;
  /// Never throws.
  virtual HealthStatus healthcheck() noexcept = 0;
};

/// JSON body for a chat-completions call: text plus base64 data-URI image
/// parts, in attachment order.
std::string chat_completion_body(const BackendConfig& config, const ChatRequest& request);

/// Chat-completions over HTTP(S). Owns its own client; nothing is shared
/// between instances.
class OpenAiBackend final : public MllmBackend {
 public:
  explicit OpenAiBackend(BackendConfig config);
  ~OpenAiBackend() override;
  std::string complete(const ChatRequest& request) override;
  HealthStatus healthcheck() noexcept override;

 private:
  BackendConfig config_;
};

struct MockRule {
  std::string contains;             // substring of the latest user text
  std::optional<AgentId> agent;     // restricts the rule to one context
  std::string reply;
};

struct MockScript {
  std::vector<MockRule> rules;
  std::string fallback = "Could you tell me more about what you want the model to do?";
  std::chrono::milliseconds latency{0};
  bool fail = false;  // every call throws HttpError(503)

  /// {"rules": [{"contains", "reply", "agent"?}], "fallback"?, "latency_ms"?, "fail"?}
  static MockScript from_json(std::string_view json);
};

/// Scripted offline backend: first matching rule wins, else the fallback.
class MockBackend final : public MllmBackend {
 public:
  MockBackend(AgentId agent, MockScript script);
  std::string complete(const ChatRequest& request) override;
  HealthStatus healthcheck() noexcept override;

  std::vector<ChatRequest> received() const;
  void set_script(MockScript script);

 private:
  AgentId agent_;
  mutable std::mutex mutex_;
  MockScript script_;
  std::vector<ChatRequest> received_;
};

struct AuditEntry {
  std::string request_id;
  AgentId agent = AgentId::Passive;
  std::string template_id;
  std::string request_digest;
  std::string response_digest;  // empty on failure
  std::chrono::milliseconds latency{0};
  bool ok = false;
  std::string error;
};

/// One agent's connection to a model. Each context owns its backend and
/// audit log and runs at most one request at a time; two contexts never
/// share state, so they can run concurrently.
class AgentContext {
 public:
  AgentContext(AgentId id, std::unique_ptr<MllmBackend> backend, BackendConfig limits = {});

  AgentId id() const { return id_; }

  /// Throws PayloadTooLarge before touching the backend; otherwise rethrows
  /// backend errors after recording them. The returned request id is unique
  /// to this context.
  struct Reply {
    std::string text;
    std::string request_id;
    std::string request_digest;
  };
  Reply complete(const ChatRequest& request);
  std::future<Reply> complete_async(ChatRequest request);

  HealthStatus healthcheck() noexcept;
  bool busy() const { return in_flight_.load(); }

  std::vector<AuditEntry> audit() const;
  MllmBackend& backend() { return *backend_; }

 private:
  AgentId id_;
  std::unique_ptr<MllmBackend> backend_;
  BackendConfig limits_;
  std::mutex call_mutex_;
  std::atomic<bool> in_flight_{false};
  std::uint64_t next_request_ = 1;
  mutable std::mutex audit_mutex_;
  std::vector<AuditEntry> audit_;
};

}  // namespace duetml
