#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <string>

#include "duetml/agents.hpp"
#include "duetml/image.hpp"
#include "duetml/session.hpp"

namespace testsupport {

using duetml::Bytes;

Bytes solid_png(std::uint8_t r, std::uint8_t g, std::uint8_t b, int w = 16, int h = 16);
Bytes noise_png(std::uint64_t seed, int w = 24, int h = 24);
duetml::Image noise_image(std::uint64_t seed, int w, int h);

/// Manually advanced millisecond clock; copies share the same time.
class VirtualClock {
 public:
  explicit VirtualClock(std::int64_t start_ms = 1'700'000'000'000) : ms_(std::make_shared<std::atomic<std::int64_t>>(start_ms)) {}
  duetml::Clock clock() const {
    return [p = ms_] { return duetml::Timestamp(p->load()); };
  }
  void advance(std::chrono::milliseconds d) { *ms_ += d.count(); }
  duetml::Timestamp now() const { return duetml::Timestamp(ms_->load()); }

 private:
  std::shared_ptr<std::atomic<std::int64_t>> ms_;
};

std::unique_ptr<duetml::Session> make_session(duetml::MockScript script = {},
                                              duetml::Clock clock = {},
                                              duetml::SessionConfig config = {},
                                              std::uint64_t seed = 42);

duetml::MockBackend& mock_of(duetml::AgentContext& ctx);

/// Fresh empty directory under the system temp dir.
std::string temp_dir(const std::string& tag);

std::string read_text(const std::string& path);

/// Reference prompt texts keyed by section name ("=== name ===" headers).
std::map<std::string, std::string> reference_prompts();

/// Parses "{'a': 10%, 'b': 90%}" back into (label, percent) pairs.
std::vector<std::pair<std::string, int>> parse_inference_text(const std::string& text);

}  // namespace testsupport
