#include "duetml/history.hpp"

#include <algorithm>

#include "duetml/error.hpp"

namespace duetml {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::User: return "user";
    case Role::PassiveAgent: return "passive_agent";
    case Role::ActiveAgent: return "active_agent";
    case Role::SystemEvent: return "system_event";
  }
  return "user";
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::None: return "none";
    case EventKind::Session: return "session";
    case EventKind::Button: return "button";
    case EventKind::Toggle: return "toggle";
    case EventKind::Dataset: return "dataset";
    case EventKind::Training: return "training";
    case EventKind::Inference: return "inference";
    case EventKind::Error: return "error";
  }
  return "none";
}

std::string_view to_string(FrameKind kind) {
  switch (kind) {
    case FrameKind::ActiveAdvice: return "active_advice";
    case FrameKind::PassiveReply: return "passive_reply";
    case FrameKind::TrainingDone: return "training_done";
    case FrameKind::ErrorEvent: return "error_event";
  }
  return "error_event";
}

Role role_from_string(std::string_view s) {
  for (Role r : {Role::User, Role::PassiveAgent, Role::ActiveAgent, Role::SystemEvent})
    if (to_string(r) == s) return r;
  throw Error(ErrorCode::CorruptManifest, "unknown role " + std::string(s));
}

EventKind event_kind_from_string(std::string_view s) {
  for (EventKind k : {EventKind::None, EventKind::Session, EventKind::Button, EventKind::Toggle,
                      EventKind::Dataset, EventKind::Training, EventKind::Inference,
                      EventKind::Error})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::CorruptManifest, "unknown event kind " + std::string(s));
}

std::optional<FrameKind> Message::frame_kind() const {
  switch (role) {
    case Role::PassiveAgent: return FrameKind::PassiveReply;
    case Role::ActiveAgent: return FrameKind::ActiveAdvice;
    case Role::SystemEvent:
      if (event == EventKind::Training) return FrameKind::TrainingDone;
      if (event == EventKind::Error) return FrameKind::ErrorEvent;
      return std::nullopt;
    case Role::User: return std::nullopt;
  }
  return std::nullopt;
}

Message DialogueHistory::append(Role role, std::string text, Timestamp now, EventKind event,
                                std::optional<EnvelopeSummary> envelope) {
  Message m;
  {
    std::lock_guard lock(mutex_);
    m.seq = messages_.size() + 1;
    m.role = role;
    m.text = std::move(text);
    m.timestamp = messages_.empty() ? now : std::max(now, messages_.back().timestamp);
    m.event = event;
    m.envelope = std::move(envelope);
    if (m.frame_kind()) m.frame_seq = ++frame_counter_;
    messages_.push_back(m);
  }
  changed_.notify_all();
  return m;
}

std::vector<Message> DialogueHistory::snapshot() const {
  std::lock_guard lock(mutex_);
  return messages_;
}

std::size_t DialogueHistory::size() const {
  std::lock_guard lock(mutex_);
  return messages_.size();
}

std::uint64_t DialogueHistory::last_frame_seq() const {
  std::lock_guard lock(mutex_);
  return frame_counter_;
}

namespace {

std::vector<Message> collect_frames(const std::vector<Message>& messages, std::uint64_t after) {
  std::vector<Message> out;
  for (const auto& m : messages)
    if (m.frame_seq && *m.frame_seq > after) out.push_back(m);
  return out;
}

}  // namespace

std::vector<Message> DialogueHistory::frames_after(std::uint64_t after) const {
  std::lock_guard lock(mutex_);
  return collect_frames(messages_, after);
}

std::vector<Message> DialogueHistory::wait_frames_after(std::uint64_t after,
                                                        std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  changed_.wait_for(lock, timeout, [&] { return frame_counter_ > after; });
  return collect_frames(messages_, after);
}

void DialogueHistory::restore(std::vector<Message> messages) {
  {
    std::lock_guard lock(mutex_);
    messages_ = std::move(messages);
    frame_counter_ = 0;
    for (const auto& m : messages_)
      if (m.frame_seq) frame_counter_ = std::max(frame_counter_, *m.frame_seq);
  }
  changed_.notify_all();
}

std::string format_transcript(std::span<const Message> messages) {
  std::string out;
  for (const auto& m : messages) {
    out += '[';
    out += to_string(m.role);
    if (m.event != EventKind::None) {
      out += '/';
      out += to_string(m.event);
    }
    out += "] ";
    for (char c : m.text) out += c == '\n' ? ' ' : c;
    if (m.envelope) {
      out += " {" + m.envelope->template_id;
      for (const auto& l : m.envelope->attachment_labels) out += " +" + l;
      out += '}';
    }
    out += '\n';
  }
  return out;
}

}  // namespace duetml
