#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "duetml/util.hpp"

namespace duetml {

enum class Role { User, PassiveAgent, ActiveAgent, SystemEvent };

/// Tags system events so the event stream and the transcript can tell them
/// apart. Non-system messages carry None.
enum class EventKind { None, Session, Button, Toggle, Dataset, Training, Inference, Error };

/// Server-push frame kinds.
enum class FrameKind { ActiveAdvice, PassiveReply, TrainingDone, ErrorEvent };

std::string_view to_string(Role role);
std::string_view to_string(EventKind kind);
std::string_view to_string(FrameKind kind);
Role role_from_string(std::string_view s);
EventKind event_kind_from_string(std::string_view s);

/// What an agent reply was produced from.
struct EnvelopeSummary {
  std::string template_id;
  std::string digest;
  std::vector<std::string> attachment_labels;
  std::uint64_t montage_seed = 0;
  std::string request_id;

  bool operator==(const EnvelopeSummary&) const = default;
};

struct Message {
  std::uint64_t seq = 0;  // position in the history, from 1
  Role role = Role::User;
  std::string text;
  Timestamp timestamp{0};
  EventKind event = EventKind::None;
  std::optional<EnvelopeSummary> envelope;
  std::optional<std::uint64_t> frame_seq;  // set when the message is pushed to clients

  std::optional<FrameKind> frame_kind() const;
  bool operator==(const Message&) const = default;
};

/// Append-only, timestamp-ordered log shared by the user and both agents.
/// Appends are linearised under one mutex; timestamps are clamped so they
/// never go backwards even if the clock does.
class DialogueHistory {
 public:
  DialogueHistory() = default;
  DialogueHistory(const DialogueHistory&) = delete;
  DialogueHistory& operator=(const DialogueHistory&) = delete;

  Message append(Role role, std::string text, Timestamp now, EventKind event = EventKind::None,
                 std::optional<EnvelopeSummary> envelope = std::nullopt);

  std::vector<Message> snapshot() const;
  std::size_t size() const;
  std::uint64_t last_frame_seq() const;

  /// Framed messages with frame_seq > `after`, in order.
  std::vector<Message> frames_after(std::uint64_t after) const;

  /// Blocks until a frame beyond `after` exists or `timeout` passes.
  std::vector<Message> wait_frames_after(std::uint64_t after, std::chrono::milliseconds timeout) const;

  /// Replaces the contents wholesale (used when loading a session).
  void restore(std::vector<Message> messages);

 private:
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::vector<Message> messages_;
  std::uint64_t frame_counter_ = 0;
};

/// Human-readable transcript of every message, events included: one line
/// per message as "[role/event] text". Used for golden-file comparisons.
std::string format_transcript(std::span<const Message> messages);

}  // namespace duetml
