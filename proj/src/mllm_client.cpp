#include "duetml/mllm_client.hpp"

#include <httplib.h>
#include <json.hpp>

#include <sstream>
#include <thread>

#include "duetml/error.hpp"
#include "http_util.hpp"

namespace duetml {

using nlohmann::json;

std::string_view to_string(AgentId id) { return id == AgentId::Passive ? "passive" : "active"; }

namespace {

std::string_view role_name(ChatMessage::Role r) {
  switch (r) {
    case ChatMessage::Role::System: return "system";
    case ChatMessage::Role::User: return "user";
    case ChatMessage::Role::Assistant: return "assistant";
  }
  return "user";
}

template <typename Rep, typename Period>
std::pair<time_t, time_t> sec_usec(std::chrono::duration<Rep, Period> d) {
  const auto s = std::chrono::duration_cast<std::chrono::seconds>(d);
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(d - s);
  return {static_cast<time_t>(s.count()), static_cast<time_t>(us.count())};
}

std::unique_ptr<httplib::Client> make_client(const BackendConfig& config,
                                             const detail::SplitUrl& url) {
  auto cli = std::make_unique<httplib::Client>(url.base);
  const auto [s, us] = sec_usec(config.timeout);
  cli->set_connection_timeout(s, us);
  cli->set_read_timeout(s, us);
  cli->set_write_timeout(s, us);
  if (!config.api_key.empty()) cli->set_bearer_token_auth(config.api_key);
  return cli;
}

std::string join_path(const std::string& base, std::string_view leaf) {
  std::string p = base;
  if (p.empty() || p.back() != '/') p.push_back('/');
  return p + std::string(leaf);
}

}  // namespace

std::string ChatRequest::digest() const {
  std::ostringstream s;
  s << "template:" << template_id << '\n';
  for (const auto& m : messages) {
    s << role_name(m.role) << ':' << m.text.size() << ':' << m.text << '\n';
    for (const auto& a : m.attachments) s << "  image:" << a.mime_type << ':' << a.digest << '\n';
  }
  return sha256_hex(s.str());
}

std::size_t ChatRequest::attachment_count() const {
  std::size_t n = 0;
  for (const auto& m : messages) n += m.attachments.size();
  return n;
}

std::size_t ChatRequest::attachment_bytes() const {
  std::size_t n = 0;
  for (const auto& m : messages)
    for (const auto& a : m.attachments) n += a.data.size();
  return n;
}

std::string_view ChatRequest::latest_user_text() const {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it)
    if (it->role == ChatMessage::Role::User) return it->text;
  return {};
}

std::string chat_completion_body(const BackendConfig& config, const ChatRequest& request) {
  json body;
  body["model"] = config.model;
  if (config.temperature) body["temperature"] = *config.temperature;
  json messages = json::array();
  for (const auto& m : request.messages) {
    json jm;
    jm["role"] = role_name(m.role);
    if (m.role == ChatMessage::Role::User) {
      json parts = json::array();
      parts.push_back({{"type", "text"}, {"text", m.text}});
      for (const auto& a : m.attachments) {
        parts.push_back(
            {{"type", "image_url"},
             {"image_url", {{"url", "data:" + a.mime_type + ";base64," + base64_encode(a.data)}}}});
      }
      jm["content"] = std::move(parts);
    } else {
      jm["content"] = m.text;
    }
    messages.push_back(std::move(jm));
  }
  body["messages"] = std::move(messages);
  return body.dump();
}

OpenAiBackend::OpenAiBackend(BackendConfig config) : config_(std::move(config)) {}
OpenAiBackend::~OpenAiBackend() = default;

std::string OpenAiBackend::complete(const ChatRequest& request) {
  const auto url = detail::split_url(config_.endpoint);
  auto cli = make_client(config_, url);
  const std::string body = chat_completion_body(config_, request);
  const auto path = join_path(url.path, "chat/completions");

  for (int attempt = 0;; ++attempt) {
    const auto started = std::chrono::steady_clock::now();
    auto res = cli->Post(path, body, "application/json");
    const bool last = attempt >= config_.retries;
    if (!res) {
      const auto elapsed = std::chrono::steady_clock::now() - started;
      const bool timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                             (res.error() == httplib::Error::Read && elapsed >= config_.timeout);
      if (!last) continue;
      if (timed_out) throw Error(ErrorCode::Timeout, config_.endpoint + " timed out");
      throw Error(ErrorCode::HttpError, config_.endpoint + ": " + httplib::to_string(res.error()),
                  std::nullopt, 0);
    }
    if (res->status == 401 || res->status == 403)
      throw Error(ErrorCode::AuthFailure, "model endpoint rejected credentials", std::nullopt,
                  res->status);
    if (res->status == 413)
      throw Error(ErrorCode::PayloadTooLarge, "model endpoint rejected payload size",
                  std::nullopt, 413);
    if (res->status != 200) {
      if (!last) continue;
      throw Error(ErrorCode::HttpError, "model endpoint returned " + std::to_string(res->status),
                  std::nullopt, res->status);
    }
    try {
      return json::parse(res->body).at("choices").at(0).at("message").at("content")
          .get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::HttpError, std::string("malformed completion: ") + e.what(),
                  std::nullopt, res->status);
    }
  }
}

HealthStatus OpenAiBackend::healthcheck() noexcept {
  try {
    const auto url = detail::split_url(config_.endpoint);
    auto cli = make_client(config_, url);
    auto res = cli->Get(join_path(url.path, "models"));
    if (!res) return {false, httplib::to_string(res.error())};
    if (res->status != 200) return {false, "status " + std::to_string(res->status)};
    return {true, "ok"};
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
}

MockScript MockScript::from_json(std::string_view text) {
  MockScript s;
  try {
    const auto j = json::parse(text);
    for (const auto& r : j.value("rules", json::array())) {
      MockRule rule{r.at("contains").get<std::string>(), std::nullopt,
                    r.at("reply").get<std::string>()};
      if (r.contains("agent")) {
        const auto a = r.at("agent").get<std::string>();
        if (a != "passive" && a != "active")
          throw Error(ErrorCode::BadRequest, "mock rule agent must be passive or active");
        rule.agent = a == "passive" ? AgentId::Passive : AgentId::Active;
      }
      s.rules.push_back(std::move(rule));
    }
    if (j.contains("fallback")) s.fallback = j.at("fallback").get<std::string>();
    s.latency = std::chrono::milliseconds(j.value("latency_ms", 0));
    s.fail = j.value("fail", false);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadRequest, std::string("mock script: ") + e.what());
  }
  return s;
}

MockBackend::MockBackend(AgentId agent, MockScript script)
    : agent_(agent), script_(std::move(script)) {}

std::string MockBackend::complete(const ChatRequest& request) {
  MockScript script;
  {
    std::lock_guard lock(mutex_);
    received_.push_back(request);
    script = script_;
  }
  if (script.latency.count() > 0) std::this_thread::sleep_for(script.latency);
  if (script.fail) throw Error(ErrorCode::HttpError, "mock backend failure", std::nullopt, 503);
  const auto text = request.latest_user_text();
  for (const auto& rule : script.rules) {
    if (rule.agent && *rule.agent != agent_) continue;
    if (text.find(rule.contains) != std::string_view::npos) return rule.reply;
  }
  return script.fallback;
}

HealthStatus MockBackend::healthcheck() noexcept { return {true, "mock"}; }

std::vector<ChatRequest> MockBackend::received() const {
  std::lock_guard lock(mutex_);
  return received_;
}

void MockBackend::set_script(MockScript script) {
  std::lock_guard lock(mutex_);
  script_ = std::move(script);
}

AgentContext::AgentContext(AgentId id, std::unique_ptr<MllmBackend> backend, BackendConfig limits)
    : id_(id), backend_(std::move(backend)), limits_(std::move(limits)) {}

AgentContext::Reply AgentContext::complete(const ChatRequest& request) {
  std::lock_guard call(call_mutex_);
  in_flight_ = true;
  struct Clear {
    std::atomic<bool>& flag;
    ~Clear() { flag = false; }
  } clear{in_flight_};

  AuditEntry entry;
  entry.request_id = std::string(to_string(id_)) + "-" + std::to_string(next_request_++);
  entry.agent = id_;
  entry.template_id = request.template_id;
  entry.request_digest = request.digest();

  auto record = [&](AuditEntry e) {
    std::lock_guard lock(audit_mutex_);
    audit_.push_back(std::move(e));
  };

  if (request.attachment_count() > limits_.max_attachments ||
      request.attachment_bytes() > limits_.max_attachment_bytes) {
    entry.error = "payload too large";
    record(entry);
    throw Error(ErrorCode::PayloadTooLarge,
                std::to_string(request.attachment_count()) + " attachments, " +
                    std::to_string(request.attachment_bytes()) + " bytes");
  }

  const auto started = std::chrono::steady_clock::now();
  try {
    std::string text = backend_->complete(request);
    entry.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    entry.ok = true;
    entry.response_digest = sha256_hex(text);
    Reply reply{std::move(text), entry.request_id, entry.request_digest};
    record(std::move(entry));
    return reply;
  } catch (const std::exception& e) {
    entry.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    entry.error = e.what();
    record(std::move(entry));
    throw;
  }
}

std::future<AgentContext::Reply> AgentContext::complete_async(ChatRequest request) {
  return std::async(std::launch::async,
                    [this, request = std::move(request)] { return complete(request); });
}

HealthStatus AgentContext::healthcheck() noexcept { return backend_->healthcheck(); }

std::vector<AuditEntry> AgentContext::audit() const {
  std::lock_guard lock(audit_mutex_);
  return audit_;
}

}  // namespace duetml
