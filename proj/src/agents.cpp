#include "duetml/agents.hpp"

#include "duetml/error.hpp"

namespace duetml {

namespace {

void require_started(const Session& s) {
  if (s.state == SessionState::Fresh)
    throw Error(ErrorCode::NotStarted, "session " + s.id() + " has not been started");
}

EnvelopeSummary summarize(const PromptEnvelope& env, const std::string& request_id) {
  return {std::string(to_string(env.template_id)), env.digest(), env.attachment_labels(),
          env.montage_seed, request_id};
}

ChatMessage::Role chat_role(Role r) {
  return r == Role::User ? ChatMessage::Role::User : ChatMessage::Role::Assistant;
}

std::vector<Attachment> montage_attachments(const TrainingDataset& dataset, std::uint64_t seed) {
  std::vector<Attachment> out;
  for (const auto& m : render_all(dataset, seed)) out.push_back(Attachment::from_montage(m));
  return out;
}

struct PendingCall {
  PromptEnvelope envelope;
  ChatRequest request;
};

// Runs the passive call outside the session lock and appends the outcome.
Message run_passive(Session& s, PendingCall call) {
  try {
    auto reply = s.passive.complete(call.request);
    return s.history.append(Role::PassiveAgent, std::move(reply.text), s.now(), EventKind::None,
                            summarize(call.envelope, reply.request_id));
  } catch (const std::exception& e) {
    s.history.append(Role::SystemEvent, std::string("Passive agent error: ") + e.what(), s.now(),
                     EventKind::Error);
    throw Error(ErrorCode::AgentBackendFailure, e.what());
  }
}

}  // namespace

ChatRequest passive_request(const PromptEnvelope& envelope, std::span<const Message> history,
                            std::uint64_t exclude_from) {
  ChatRequest req;
  req.template_id = std::string(to_string(envelope.template_id));
  if (envelope.system_text)
    req.messages.push_back({ChatMessage::Role::System, *envelope.system_text, {}});
  for (const auto& m : history) {
    if (m.seq >= exclude_from) break;
    if (m.role == Role::SystemEvent) continue;
    req.messages.push_back({chat_role(m.role), m.text, {}});
  }
  req.messages.push_back({ChatMessage::Role::User, envelope.user_text, envelope.attachments});
  return req;
}

Message start_session(Session& s) {
  std::lock_guard lock(s.mutex);
  if (s.state != SessionState::Fresh)
    throw Error(ErrorCode::AlreadyStarted, "session " + s.id() + " already started");
  s.state = SessionState::AwaitingGoal;
  return s.history.append(Role::PassiveAgent, std::string(kOpeningQuestion), s.now());
}

Message handle_chat(Session& s, std::string_view user_text) {
  PendingCall call;
  {
    std::lock_guard lock(s.mutex);
    require_started(s);
    const std::string text = trim(user_text);
    if (text.empty()) throw Error(ErrorCode::EmptyMessage, "chat message is empty");

    const auto user_msg = s.history.append(Role::User, text, s.now());
    s.record_interaction();
    if (s.state == SessionState::AwaitingGoal) s.state = SessionState::Conversing;

    PromptBindings b;
    b.user_selected_language = s.config().language;
    b.user_input = text;
    if (s.dataset.non_empty_count() == 0) {
      call.envelope = render(TemplateId::PassiveChatNoData, b);
    } else {
      const auto seed = s.next_montage_seed();
      call.envelope =
          render(TemplateId::PassiveChatWithData, b, montage_attachments(s.dataset, seed), seed);
    }
    call.request = passive_request(call.envelope, s.history.snapshot(), user_msg.seq);
  }
  return run_passive(s, std::move(call));
}

Message handle_ask_category(Session& s, std::string_view category_name) {
  PendingCall call;
  {
    std::lock_guard lock(s.mutex);
    require_started(s);
    const auto& cats = s.dataset.categories();
    const Category& cat = s.dataset.get(category_name);
    if (cat.images.empty())
      throw Error(ErrorCode::EmptyCategory, "category '" + cat.name + "' has no images");
    const auto index = static_cast<std::size_t>(&cat - cats.data());

    const auto event = s.history.append(
        Role::SystemEvent, "Asked the assistant about category '" + cat.name + "'", s.now(),
        EventKind::Button);
    s.record_interaction();

    PromptBindings b;
    b.user_selected_language = s.config().language;
    b.user_defined_category_name = cat.name;
    const auto seed = s.next_montage_seed();
    const auto montage = render_montage(s.dataset, cat, category_seed(seed, index));
    call.envelope =
        render(TemplateId::PassiveAskCategory, b, {Attachment::from_montage(montage)}, seed);
    call.request = passive_request(call.envelope, s.history.snapshot(), event.seq);
  }
  return run_passive(s, std::move(call));
}

Message handle_ask_inference(Session& s, std::string_view inference_id) {
  PendingCall call;
  {
    std::lock_guard lock(s.mutex);
    require_started(s);
    const auto it = s.inferences.find(std::string(inference_id));
    if (it == s.inferences.end())
      throw Error(ErrorCode::UnknownInference, "no inference '" + std::string(inference_id) + "'");
    const StoredInference& inf = it->second;

    const auto event = s.history.append(
        Role::SystemEvent, "Asked the assistant about inference " + inf.id, s.now(),
        EventKind::Button);
    s.record_interaction();

    PromptBindings b;
    b.user_selected_language = s.config().language;
    b.inference_result = serialize_inference_result(inf.result);
    call.envelope = render(TemplateId::PassiveAskInference, b,
                           {Attachment::from_image_bytes("evaluated image", inf.image)});
    call.request = passive_request(call.envelope, s.history.snapshot(), event.seq);
  }
  return run_passive(s, std::move(call));
}

std::string_view to_string(TickOutcome outcome) {
  switch (outcome) {
    case TickOutcome::Disabled: return "disabled";
    case TickOutcome::Skipped: return "skipped";
    case TickOutcome::Fired: return "fired";
    case TickOutcome::Failed: return "failed";
  }
  return "skipped";
}

TickResult tick_active(Session& s) {
  PendingCall call;
  {
    std::lock_guard lock(s.mutex);
    require_started(s);
    if (!s.active_enabled) return {TickOutcome::Disabled, std::nullopt};
    const bool idle = s.tracker.interactions_since_tick == 0;
    s.tracker.interactions_since_tick = 0;
    if (idle) return {TickOutcome::Skipped, std::nullopt};

    const auto history = s.history.snapshot();
    PromptBindings b;
    b.user_selected_language = s.config().language;
    b.chat_log = serialize_chat_log(history, s.config().chat_log_max_chars);
    if (s.dataset.non_empty_count() == 0) {
      call.envelope = render(TemplateId::ActiveNoData, b);
    } else {
      const auto seed = s.next_montage_seed();
      call.envelope =
          render(TemplateId::ActiveWithData, b, montage_attachments(s.dataset, seed), seed);
    }
    call.request.template_id = std::string(to_string(call.envelope.template_id));
    call.request.messages.push_back(
        {ChatMessage::Role::User, call.envelope.user_text, call.envelope.attachments});
  }

  try {
    auto reply = s.active.complete(call.request);
    auto msg = s.history.append(Role::ActiveAgent, std::move(reply.text), s.now(),
                                EventKind::None, summarize(call.envelope, reply.request_id));
    return {TickOutcome::Fired, std::move(msg)};
  } catch (const std::exception& e) {
    auto msg = s.history.append(Role::SystemEvent, std::string("Active agent error: ") + e.what(),
                                s.now(), EventKind::Error);
    return {TickOutcome::Failed, std::move(msg)};
  }
}

void set_active_toggle(Session& s, bool enabled) {
  std::lock_guard lock(s.mutex);
  require_started(s);
  s.active_enabled = enabled;
  s.history.append(Role::SystemEvent,
                   std::string("Active agent turned ") + (enabled ? "on" : "off"), s.now(),
                   EventKind::Toggle);
}

PeriodicTimer::PeriodicTimer(std::chrono::milliseconds interval, std::function<void()> tick)
    : thread_([this, interval, tick = std::move(tick)] {
        std::unique_lock lock(mutex_);
        auto next = std::chrono::steady_clock::now() + interval;
        while (!cv_.wait_until(lock, next, [this] { return stop_; })) {
          lock.unlock();
          tick();
          lock.lock();
          next += interval;
        }
      }) {}

PeriodicTimer::~PeriodicTimer() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  thread_.join();
}

}  // namespace duetml
