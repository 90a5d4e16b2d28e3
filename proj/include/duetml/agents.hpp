#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "duetml/history.hpp"
#include "duetml/mllm_client.hpp"
#include "duetml/prompts.hpp"
#include "duetml/session.hpp"

namespace duetml {

inline constexpr std::string_view kOpeningQuestion = "What kind of AI would you like to create?";

/// Seeds the history with the passive agent's opening question.
/// Throws AlreadyStarted.
Message start_session(Session& session);

/// Appends the user's message, asks the passive agent with the full history
/// and appends its reply. On backend failure the user message stays, an
/// error event is appended and AgentBackendFailure is thrown.
Message handle_chat(Session& session, std::string_view user_text);

/// "Ask the Assistant" for one category: only that category's montage is
/// attached. Throws UnknownCategory, EmptyCategory.
Message handle_ask_category(Session& session, std::string_view category_name);

/// "Ask the Assistant" for a stored inference: the evaluated image is
/// attached. Throws UnknownInference.
Message handle_ask_inference(Session& session, std::string_view inference_id);

enum class TickOutcome { Disabled, Skipped, Fired, Failed };
std::string_view to_string(TickOutcome outcome);

struct TickResult {
  TickOutcome outcome = TickOutcome::Skipped;
  std::optional<Message> message;  // reply (Fired) or error event (Failed)
};

/// One evaluation of the proactive rule: fire iff the toggle is on and at
/// least one user interaction happened since the previous tick. Firing and
/// skipping both reset the interaction counter; a disabled tick leaves it.
TickResult tick_active(Session& session);

void set_active_toggle(Session& session, bool enabled);

/// The passive request for an already-rendered envelope: system prompt,
/// prior dialogue, then the envelope's user prompt with its images.
/// `exclude_from` drops history entries with seq >= it.
ChatRequest passive_request(const PromptEnvelope& envelope, std::span<const Message> history,
                            std::uint64_t exclude_from);

/// Fires `tick` every `interval` on a background thread until destroyed.
class PeriodicTimer {
 public:
  PeriodicTimer(std::chrono::milliseconds interval, std::function<void()> tick);
  ~PeriodicTimer();
  PeriodicTimer(const PeriodicTimer&) = delete;
  PeriodicTimer& operator=(const PeriodicTimer&) = delete;

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stop_ = false;
  std::thread thread_;
};

}  // namespace duetml
