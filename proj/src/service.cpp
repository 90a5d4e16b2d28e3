#include "duetml/service.hpp"

#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include "duetml/error.hpp"
#include "json_io.hpp"
// after Eigen: <resolv.h> defines a _res macro that breaks Eigen's product kernels
#include <httplib.h>

namespace duetml {

using nlohmann::json;

Workbench::Workbench(ServiceConfig config) : config_(std::move(config)) {
  if (!config_.clock) config_.clock = system_now;
}

Workbench::~Workbench() {
  std::lock_guard lock(mutex_);
  for (auto& [id, entry] : sessions_) entry.timer.reset();
}

std::unique_ptr<MllmBackend> Workbench::make_backend(AgentId agent) const {
  if (config_.mock) return std::make_unique<MockBackend>(agent, *config_.mock);
  return std::make_unique<OpenAiBackend>(config_.backend);
}

Workbench::Entry& Workbench::install(std::shared_ptr<Session> session) {
  auto& entry = sessions_[session->id()];
  entry.session = std::move(session);
  if (config_.active_interval.count() > 0) {
    const std::string id = entry.session->id();
    entry.timer = std::make_unique<PeriodicTimer>(config_.active_interval, [this, id] {
      try {
        tick(id);
      } catch (const std::exception& e) {
        std::cerr << "level=warn session=" << id << " event=tick error=\"" << e.what() << "\"\n";
      }
    });
  }
  return entry;
}

std::shared_ptr<Session> Workbench::create_session(std::optional<std::string> id,
                                                   std::optional<std::uint64_t> seed) {
  std::random_device rd;
  if (!id) {
    std::ostringstream s;
    s << std::hex << (static_cast<std::uint64_t>(rd()) << 32 | rd());
    id = s.str();
  }
  if (!seed) seed = static_cast<std::uint64_t>(rd()) << 32 | rd();
  auto session = std::make_shared<Session>(*id, *seed, config_.clock, config_.session,
                                           make_backend(AgentId::Passive),
                                           make_backend(AgentId::Active), config_.backend);
  start_session(*session);
  save(*session);
  std::lock_guard lock(mutex_);
  if (sessions_.count(*id)) throw Error(ErrorCode::BadRequest, "session id in use: " + *id);
  return install(std::move(session)).session;
}

std::shared_ptr<Session> Workbench::get(const std::string& id) {
  std::lock_guard lock(mutex_);
  if (auto it = sessions_.find(id); it != sessions_.end()) return it->second.session;
  if (id.empty() || id.find_first_of("/\\.") != std::string::npos)
    throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
  std::shared_ptr<Session> loaded =
      load_session(config_.data_dir, id, config_.clock, config_.session,
                   make_backend(AgentId::Passive), make_backend(AgentId::Active), config_.backend);
  return install(std::move(loaded)).session;
}

void Workbench::save(const Session& session) {
  if (config_.persist) persist(session, config_.data_dir);
}

TickResult Workbench::tick(const std::string& id) {
  auto s = get(id);
  auto r = tick_active(*s);
  if (r.outcome != TickOutcome::Disabled) save(*s);
  return r;
}

namespace {

thread_local std::chrono::steady_clock::time_point t_request_start;

json error_json(const Error& e) {
  json j{{"code", to_string(e.code())}, {"message", e.what()}};
  if (e.index()) j["index"] = *e.index();
  if (e.status()) j["upstream_status"] = *e.status();
  return j;
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  try {
    return req.body.empty() ? json::object() : json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadRequest, std::string("body is not JSON: ") + e.what());
  }
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_json(res, error_json(e), http_status(e.code()));
    } catch (const json::exception& e) {
      send_json(res, {{"code", "BadRequest"}, {"message", e.what()}}, 400);
    } catch (const std::exception& e) {
      send_json(res, {{"code", "Internal"}, {"message", e.what()}}, 500);
    }
  };
}

json history_json(const Session& s) {
  json msgs = json::array();
  for (const auto& m : s.history.snapshot()) msgs.push_back(detail::message_to_json(m));
  return msgs;
}

json category_json(const Category& c) {
  json images = json::array();
  for (const auto& r : c.images) images.push_back(detail::image_ref_to_json(r));
  return {{"name", c.name}, {"image_count", c.images.size()}, {"images", images}};
}

json dataset_json(const Session& s) {
  json cats = json::array();
  for (const auto& c : s.dataset.categories()) cats.push_back(category_json(c));
  return {{"version", s.dataset.version()}, {"categories", cats}};
}

json inference_json(const StoredInference& inf) {
  json percentages = json::object();
  json probabilities = json::object();
  for (std::size_t i = 0; i < inf.result.labels.size(); ++i) {
    percentages[inf.result.labels[i]] = inf.result.percentages[i];
    probabilities[inf.result.labels[i]] = inf.result.probabilities[static_cast<Eigen::Index>(i)];
  }
  return {{"id", inf.id},
          {"labels", inf.result.labels},
          {"percentages", percentages},
          {"probabilities", probabilities},
          {"top_label", inf.result.top_label},
          {"image_digest", inf.result.image_digest},
          {"serialized", serialize_inference_result(inf.result)}};
}

std::vector<Bytes> image_payloads(const httplib::Request& req) {
  std::vector<Bytes> out;
  if (req.is_multipart_form_data()) {
    for (const auto& [name, file] : req.files) out.push_back(to_bytes(file.content));
  } else if (!req.body.empty()) {
    out.push_back(to_bytes(req.body));
  }
  if (out.empty()) throw Error(ErrorCode::BadRequest, "no image payload");
  return out;
}

std::string sse_frame(const Message& m) {
  std::string out = "id: " + std::to_string(*m.frame_seq) + "\n";
  out += "event: " + std::string(to_string(*m.frame_kind())) + "\n";
  out += "data: " + detail::message_to_json(m).dump() + "\n\n";
  return out;
}

}  // namespace

HttpService::HttpService(ServiceConfig config)
    : workbench_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  routes();
}

HttpService::~HttpService() { stop(); }

void HttpService::routes() {
  auto& svr = *server_;
  Workbench& wb = workbench_;

  svr.set_pre_routing_handler([](const httplib::Request&, httplib::Response&) {
    t_request_start = std::chrono::steady_clock::now();
    return httplib::Server::HandlerResponse::Unhandled;
  });
  svr.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t_request_start)
                        .count();
    std::string session = "-";
    if (req.path.rfind("/sessions/", 0) == 0) {
      const auto rest = req.path.substr(10);
      session = rest.substr(0, rest.find('/'));
    }
    // One write per line so concurrent requests do not interleave.
    std::ostringstream line;
    line << "ts=" << system_now().count() << " session=" << session << " method=" << req.method
         << " endpoint=" << req.path << " status=" << res.status << " latency_ms=" << ms << '\n';
    std::clog << line.str() << std::flush;
  });

  svr.Post("/sessions", guarded([&wb](const httplib::Request&, httplib::Response& res) {
             auto s = wb.create_session();
             send_json(res, {{"id", s->id()}, {"history", history_json(*s)}}, 201);
           }));

  svr.Get(R"(/sessions/([^/]+)/history)",
          guarded([&wb](const httplib::Request& req, httplib::Response& res) {
            auto s = wb.get(req.matches[1]);
            json body{{"id", s->id()}, {"messages", history_json(*s)}};
            {
              std::lock_guard lock(s->mutex);
              body["state"] = to_string(s->state);
              body["active_enabled"] = s->active_enabled;
            }
            send_json(res, body);
          }));

  svr.Post(R"(/sessions/([^/]+)/chat)",
           guarded([&wb](const httplib::Request& req, httplib::Response& res) {
             auto s = wb.get(req.matches[1]);
             const auto body = parse_body(req);
             try {
               auto reply = handle_chat(*s, body.value("text", std::string()));
               wb.save(*s);
               send_json(res, {{"reply", detail::message_to_json(reply)}});
             } catch (const Error& e) {
               if (e.code() == ErrorCode::AgentBackendFailure) wb.save(*s);
               throw;
             }
           }));

  svr.Get(R"(/sessions/([^/]+)/categories)",
          guarded([&wb](const httplib::Request& req, httplib::Response& res) {
            auto s = wb.get(req.matches[1]);
            std::lock_guard lock(s->mutex);
            send_json(res, dataset_json(*s));
          }));

  svr.Post(R"(/sessions/([^/]+)/categories)",
           guarded([&wb](const httplib::Request& req, httplib::Response& res) {
             auto s = wb.get(req.matches[1]);
             const auto body = parse_body(req);
             const auto c = s->add_category(body.value("name", std::string()));
             wb.save(*s);
             send_json(res, category_json(c), 201);
           }));

  svr.Put(R"(/sessions/([^/]+)/categories/([^/]+))",
          guarded([&wb](const httplib::Request& req, httplib::Response& res) {
            auto s = wb.get(req.matches[1]);
            const auto body = parse_body(req);
            const std::string new_name = body.value("name", std::string());
            s->rename_category(std::string(req.matches[2]), new_name);
            wb.save(*s);
            std::lock_guard lock(s->mutex);
            send_json(res, category_json(s->dataset.get(trim(new_name))));
          }));

  svr.Delete(R"(/sessions/([^/]+)/categories/([^/]+))",
             guarded([&wb](const httplib::Request& req, httplib::Response& res) {
               auto s = wb.get(req.matches[1]);
               s->remove_category(std::string(req.matches[2]));
               wb.save(*s);
               send_json(res, {{"removed", std::string(req.matches[2])}});
             }));

  svr.Post(R"(/sessions/([^/]+)/categories/([^/]+)/images)",
           guarded([&wb](const httplib::Request& req, httplib::Response& res) {
             auto s = wb.get(req.matches[1]);
             const auto payloads = image_payloads(req);
             try {
               const auto report = s->upload_images(std::string(req.matches[2]), payloads);
               wb.save(*s);
               json added = json::array();
               for (const auto& r : report.added) added.push_back(detail::image_ref_to_json(r));
               send_json(res, {{"added", added}, {"duplicates", report.duplicate_indices}}, 201);
             } catch (const Error& e) {
               if (e.code() == ErrorCode::UndecodableImage) wb.save(*s);
               throw;
             }
           }));

  svr.Post(R"(/sessions/([^/]+)/train)",
           guarded([&wb](const httplib::Request& req, httplib::Response& res) {
             auto s = wb.get(req.matches[1]);
             const auto result = s->train_model();
             wb.save(*s);
             send_json(res, {{"labels", result.model.labels},
                             {"excluded_empty", result.summary.excluded_empty},
                             {"samples", result.summary.samples},
                             {"converged", result.summary.converged},
                             {"training_accuracy", result.summary.training_accuracy}});
           }));

  svr.Post(R"(/sessions/([^/]+)/infer)",
           guarded([&wb](const httplib::Request& req, httplib::Response& res) {
             auto s = wb.get(req.matches[1]);
             auto payloads = image_payloads(req);
             if (payloads.size() != 1)
               throw Error(ErrorCode::BadRequest, "infer takes exactly one image");
             const auto inf = s->infer(std::move(payloads.front()));
             wb.save(*s);
             send_json(res, inference_json(inf), 201);
           }));

  svr.Get(R"(/sessions/([^/]+)/inferences/([^/]+))",
          guarded([&wb](const httplib::Request& req, httplib::Response& res) {
            auto s = wb.get(req.matches[1]);
            std::lock_guard lock(s->mutex);
            const auto it = s->inferences.find(std::string(req.matches[2]));
            if (it == s->inferences.end())
              throw Error(ErrorCode::UnknownInference, "no inference " + std::string(req.matches[2]));
            send_json(res, inference_json(it->second));
          }));

  svr.Post(R"(/sessions/([^/]+)/ask/category/([^/]+))",
           guarded([&wb](const httplib::Request& req, httplib::Response& res) {
             auto s = wb.get(req.matches[1]);
             try {
               auto reply = handle_ask_category(*s, std::string(req.matches[2]));
               wb.save(*s);
               send_json(res, {{"reply", detail::message_to_json(reply)}});
             } catch (const Error& e) {
               if (e.code() == ErrorCode::AgentBackendFailure) wb.save(*s);
               throw;
             }
           }));

  svr.Post(R"(/sessions/([^/]+)/ask/inference/([^/]+))",
           guarded([&wb](const httplib::Request& req, httplib::Response& res) {
             auto s = wb.get(req.matches[1]);
             try {
               auto reply = handle_ask_inference(*s, std::string(req.matches[2]));
               wb.save(*s);
               send_json(res, {{"reply", detail::message_to_json(reply)}});
             } catch (const Error& e) {
               if (e.code() == ErrorCode::AgentBackendFailure) wb.save(*s);
               throw;
             }
           }));

  svr.Put(R"(/sessions/([^/]+)/active-agent)",
          guarded([&wb](const httplib::Request& req, httplib::Response& res) {
            auto s = wb.get(req.matches[1]);
            const auto body = parse_body(req);
            if (!body.contains("enabled") || !body.at("enabled").is_boolean())
              throw Error(ErrorCode::BadRequest, "expected {\"enabled\": true|false}");
            const bool enabled = body.at("enabled").get<bool>();
            set_active_toggle(*s, enabled);
            wb.save(*s);
            send_json(res, {{"enabled", enabled}});
          }));

  svr.Get(R"(/sessions/([^/]+)/montages/([^/]+))",
          guarded([&wb](const httplib::Request& req, httplib::Response& res) {
            auto s = wb.get(req.matches[1]);
            const std::string name = req.matches[2];
            std::optional<std::uint64_t> seed;
            if (req.has_param("seed")) seed = std::stoull(req.get_param_value("seed"));
            if (!seed) {
              // Reproduce the most recent montage sent for this category.
              const auto history = s->history.snapshot();
              for (auto it = history.rbegin(); it != history.rend() && !seed; ++it) {
                if (!it->envelope || it->envelope->montage_seed == 0) continue;
                const auto& labels = it->envelope->attachment_labels;
                if (std::find(labels.begin(), labels.end(), name) != labels.end())
                  seed = it->envelope->montage_seed;
              }
            }
            std::lock_guard lock(s->mutex);
            const auto& cats = s->dataset.categories();
            const Category& cat = s->dataset.get(name);
            const auto index = static_cast<std::size_t>(&cat - cats.data());
            const auto m = render_montage(s->dataset, cat, category_seed(seed.value_or(0), index));
            res.set_header("X-Montage-Seed", std::to_string(seed.value_or(0)));
            res.set_content(std::string(m.png.begin(), m.png.end()), "image/png");
          }));

  svr.Get(R"(/sessions/([^/]+)/health)",
          guarded([&wb](const httplib::Request& req, httplib::Response& res) {
            auto s = wb.get(req.matches[1]);
            const auto p = s->passive.healthcheck();
            const auto a = s->active.healthcheck();
            send_json(res, {{"passive", {{"reachable", p.reachable}, {"detail", p.detail}}},
                            {"active", {{"reachable", a.reachable}, {"detail", a.detail}}}});
          }));

  svr.Get("/meta/prompts", guarded([](const httplib::Request&, httplib::Response& res) {
            json templates = json::array();
            for (const auto& t : all_templates()) {
              templates.push_back({{"id", to_string(t.id)},
                                   {"body", t.body},
                                   {"placeholders", t.placeholders},
                                   {"digest", sha256_hex(t.body)}});
            }
            send_json(res, {{"templates", templates}});
          }));

  svr.Get(R"(/sessions/([^/]+)/events)",
          guarded([&wb, this](const httplib::Request& req, httplib::Response& res) {
            auto s = wb.get(req.matches[1]);
            std::uint64_t after = 0;
            if (req.has_header("Last-Event-ID"))
              after = std::stoull(req.get_header_value("Last-Event-ID"));
            if (req.has_param("after")) after = std::stoull(req.get_param_value("after"));
            const bool once = req.has_param("once");
            res.set_header("Cache-Control", "no-cache");
            if (once) {
              std::string body;
              for (const auto& m : s->history.frames_after(after)) body += sse_frame(m);
              res.set_content(body, "text/event-stream");
              return;
            }
            res.set_chunked_content_provider(
                "text/event-stream",
                [s, after, this](std::size_t, httplib::DataSink& sink) mutable {
                  const auto frames =
                      s->history.wait_frames_after(after, std::chrono::milliseconds(500));
                  for (const auto& m : frames) {
                    const auto text = sse_frame(m);
                    if (!sink.write(text.data(), text.size())) return false;
                    after = *m.frame_seq;
                  }
                  if (stopping_) {
                    sink.done();
                    return true;
                  }
                  if (frames.empty()) {
                    static constexpr std::string_view kPing = ": ping\n\n";
                    if (!sink.write(kPing.data(), kPing.size())) return false;
                  }
                  return true;
                });
          }));
}

int HttpService::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

bool HttpService::listen(const std::string& host, int port) { return server_->listen(host, port); }

void HttpService::stop() {
  stopping_ = true;
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace duetml
