#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "duetml/error.hpp"
#include "duetml/service.hpp"
#include "support.hpp"
// after Eigen: <resolv.h> defines a _res macro that breaks Eigen's product kernels
#include <httplib.h>

using namespace duetml;
using nlohmann::json;
using testsupport::noise_png;
using testsupport::solid_png;

namespace fs = std::filesystem;

namespace {

std::unique_ptr<Session> reload(const std::string& root, const std::string& id) {
  return load_session(root, id, {}, {}, std::make_unique<MockBackend>(AgentId::Passive, MockScript{}),
                      std::make_unique<MockBackend>(AgentId::Active, MockScript{}));
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::BadRequest;
}

struct Served {
  ServiceConfig config;
  std::unique_ptr<HttpService> service;
  std::unique_ptr<httplib::Client> client;

  explicit Served(MockScript script = {}) {
    config.data_dir = testsupport::temp_dir("svc");
    config.mock = std::move(script);
    config.active_interval = std::chrono::milliseconds(0);
    service = std::make_unique<HttpService>(config);
    const int port = service->start("127.0.0.1", 0);
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(5, 0);
  }
  ~Served() { service->stop(); }

  json post(const std::string& path, const json& body = json::object(), int want = 0) {
    auto r = client->Post(path, body.dump(), "application/json");
    REQUIRE(r);
    if (want) CHECK(r->status == want);
    return json::parse(r->body);
  }
  std::string create() { return post("/sessions", {}, 201)["id"]; }
  json upload(const std::string& id, const std::string& cat, const std::vector<Bytes>& images,
              int want = 201) {
    httplib::MultipartFormDataItems items;
    for (std::size_t i = 0; i < images.size(); ++i)
      items.push_back({"images", std::string(images[i].begin(), images[i].end()),
                       "img" + std::to_string(i) + ".png", "image/png"});
    auto r = client->Post("/sessions/" + id + "/categories/" + cat + "/images", items);
    REQUIRE(r);
    CHECK(r->status == want);
    return json::parse(r->body);
  }
};

}  // namespace

TEST_CASE("persist and load round trip") {
  const auto root = testsupport::temp_dir("persist");
  auto s = testsupport::make_session();
  start_session(*s);
  handle_chat(*s, "hello");
  s->add_category("Not a Plant");
  s->add_category("Edible");
  s->upload_images("Not a Plant", std::vector<Bytes>{noise_png(1), noise_png(2)});
  s->upload_images("Edible", std::vector<Bytes>{solid_png(0, 200, 0)});
  s->train_model();
  const auto inf = s->infer(noise_png(3));
  set_active_toggle(*s, false);
  persist(*s, root);

  auto back = reload(root, "test");
  CHECK(history_digest(back->history.snapshot()) == history_digest(s->history.snapshot()));
  CHECK(back->dataset == s->dataset);
  CHECK(back->dataset.manifest_json() == s->dataset.manifest_json());
  REQUIRE(back->model.has_value());
  CHECK(serialize_model(*back->model) == serialize_model(*s->model));
  CHECK_FALSE(back->active_enabled);
  CHECK(back->tracker == s->tracker);
  CHECK(back->state == s->state);
  REQUIRE(back->inferences.count(inf.id) == 1);
  CHECK(back->inferences.at(inf.id).image == inf.image);
  CHECK(back->inferences.at(inf.id).result.percentages == inf.result.percentages);
  CHECK(back->next_inference == s->next_inference);
  CHECK(back->prompt_events == s->prompt_events);
  CHECK(back->history.last_frame_seq() == s->history.last_frame_seq());

  // newest weights after a retrain
  const auto first_weights = sha256_hex(serialize_model(*s->model));
  s->add_category("third");
  s->upload_images("third", std::vector<Bytes>{solid_png(0, 0, 255)});
  s->train_model();
  persist(*s, root);
  back = reload(root, "test");
  CHECK(back->model->labels.size() == 3);
  CHECK(sha256_hex(serialize_model(*back->model)) == sha256_hex(serialize_model(*s->model)));
  CHECK(sha256_hex(serialize_model(*back->model)) != first_weights);

  // removed categories disappear from disk state as well
  s->remove_category("third");
  persist(*s, root);
  CHECK(reload(root, "test")->dataset.find("third") == nullptr);
}

TEST_CASE("corrupt or missing state") {
  const auto root = testsupport::temp_dir("corrupt");
  CHECK(code_of([&] { reload(root, "nope"); }) == ErrorCode::UnknownSession);

  auto s = testsupport::make_session();
  start_session(*s);
  s->add_category("a");
  s->upload_images("a", std::vector<Bytes>{noise_png(1)});
  persist(*s, root);
  const auto manifest = session_dir(root, "test") + "/dataset/manifest.json";
  const auto text = testsupport::read_text(manifest);
  write_file(manifest, text.substr(0, text.size() / 2));
  CHECK(code_of([&] { reload(root, "test"); }) == ErrorCode::CorruptManifest);

  persist(*s, root);
  const auto session_json = session_dir(root, "test") + "/session.json";
  auto j = json::parse(testsupport::read_text(session_json));
  j["format"] = 99;
  write_file(session_json, j.dump());
  CHECK(code_of([&] { reload(root, "test"); }) == ErrorCode::VersionMismatch);

  persist(*s, root);
  fs::remove(fs::path(session_dir(root, "test")) / s->dataset.get("a").images[0].storage_path);
  CHECK(code_of([&] { reload(root, "test"); }) == ErrorCode::CorruptManifest);
}

TEST_CASE("http: new session starts with the opening question") {
  Served srv;
  const auto id = srv.create();
  auto r = srv.client->Get("/sessions/" + id + "/history");
  REQUIRE(r);
  CHECK(r->status == 200);
  const auto body = json::parse(r->body);
  REQUIRE(body["messages"].size() == 1);
  CHECK(body["messages"][0]["role"] == "passive_agent");
  CHECK(body["messages"][0]["text"] == "What kind of AI would you like to create?");
  CHECK(body["state"] == "awaiting_goal");

  r = srv.client->Get("/sessions/doesnotexist/history");
  REQUIRE(r);
  CHECK(r->status == 404);
  CHECK(json::parse(r->body)["code"] == "UnknownSession");
}

TEST_CASE("http: dataset, training and inference") {
  MockScript script;
  script.rules.push_back({"edible", std::nullopt, "Try Edible and Non-Edible."});
  Served srv(script);
  const auto id = srv.create();
  const auto base = "/sessions/" + id;

  CHECK(srv.post(base + "/chat", {{"text", "plants: edible or not?"}}, 200)["reply"]["text"] ==
        "Try Edible and Non-Edible.");
  CHECK(srv.post(base + "/chat", {{"text", "  "}}, 400)["code"] == "EmptyMessage");

  srv.post(base + "/categories", {{"name", "red"}}, 201);
  CHECK(srv.post(base + "/categories", {{"name", "red"}}, 409)["code"] == "DuplicateName");
  srv.upload(id, "red", {solid_png(250, 0, 0), solid_png(200, 20, 20)});

  CHECK(srv.post(base + "/train", {}, 409)["code"] == "InsufficientCategories");

  srv.post(base + "/categories", {{"name", "blue ones"}}, 201);
  const auto bad = srv.upload(id, "blue%20ones", {solid_png(0, 0, 250), Bytes{1, 2, 3}}, 400);
  CHECK(bad["code"] == "UndecodableImage");
  CHECK(bad["index"] == 1);
  const auto dup = srv.upload(id, "blue%20ones", {solid_png(0, 0, 250), solid_png(20, 20, 200)});
  CHECK(dup["added"].size() == 1);
  CHECK(dup["duplicates"] == json::array({0}));

  const auto trained = srv.post(base + "/train", {}, 200);
  CHECK(trained["labels"] == json::array({"red", "blue ones"}));
  CHECK(trained["training_accuracy"] == 1.0);

  httplib::MultipartFormDataItems items{{"image", [] {
                                           const auto b = solid_png(240, 10, 10);
                                           return std::string(b.begin(), b.end());
                                         }(), "probe.png", "image/png"}};
  auto r = srv.client->Post(base + "/infer", items);
  REQUIRE(r);
  CHECK(r->status == 201);
  const auto inf = json::parse(r->body);
  CHECK(inf["id"] == "inf-1");
  CHECK(inf["top_label"] == "red");
  CHECK(inf["percentages"]["red"].get<int>() + inf["percentages"]["blue ones"].get<int>() == 100);
  CHECK(inf["probabilities"]["red"].get<double>() > 0.5);
  CHECK(inf["serialized"].get<std::string>().rfind("{'red': ", 0) == 0);

  CHECK(srv.post(base + "/ask/inference/inf-1", {}, 200)["reply"]["role"] == "passive_agent");
  CHECK(srv.post(base + "/ask/inference/inf-7", {}, 404)["code"] == "UnknownInference");
  CHECK(srv.post(base + "/ask/category/red", {}, 200)["reply"]["envelope"]["attachment_labels"] ==
        json::array({"red"}));

  // rename and delete
  r = srv.client->Put(base + "/categories/red", json{{"name", "crimson"}}.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(json::parse(r->body)["image_count"] == 2);
  r = srv.client->Delete(base + "/categories/crimson");
  REQUIRE(r);
  CHECK(r->status == 200);
  r = srv.client->Get(base + "/categories");
  CHECK(json::parse(r->body)["categories"].size() == 1);

  // the model keeps its labels after edits
  r = srv.client->Post(base + "/infer", items);
  CHECK(json::parse(r->body)["labels"] == json::array({"red", "blue ones"}));
}

TEST_CASE("http: montage preview matches what the agent saw") {
  Served srv;
  const auto id = srv.create();
  const auto base = "/sessions/" + id;
  srv.post(base + "/categories", {{"name", "A"}}, 201);
  srv.upload(id, "A", {noise_png(1), noise_png(2), noise_png(3)});
  const auto reply = srv.post(base + "/ask/category/A", {}, 200)["reply"];
  const auto seed = reply["envelope"]["montage_seed"].get<std::uint64_t>();

  auto r = srv.client->Get(base + "/montages/A");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "image/png");
  CHECK(r->get_header_value("X-Montage-Seed") == std::to_string(seed));

  auto& session = *srv.service->workbench().get(id);
  const auto sent = testsupport::mock_of(session.passive).received().back().messages.back().attachments;
  REQUIRE(sent.size() == 1);
  CHECK(sha256_hex(r->body) == sent[0].digest);

  r = srv.client->Get(base + "/montages/ghost");
  CHECK(r->status == 404);
}

TEST_CASE("http: event stream resumes without gaps or duplicates") {
  Served srv;
  const auto id = srv.create();
  const auto base = "/sessions/" + id;
  for (int i = 0; i < 3; ++i) srv.post(base + "/chat", {{"text", "m" + std::to_string(i)}}, 200);

  auto frames_of = [](const std::string& body) {
    std::vector<int> ids;
    std::size_t pos = 0;
    while ((pos = body.find("id: ", pos)) != std::string::npos) {
      ids.push_back(std::stoi(body.substr(pos + 4)));
      pos += 4;
    }
    return ids;
  };

  auto r = srv.client->Get(base + "/events?once=1");
  REQUIRE(r);
  CHECK(r->get_header_value("Content-Type") == "text/event-stream");
  // Frame 1 is the opening question, then one reply per chat.
  CHECK(frames_of(r->body) == std::vector<int>{1, 2, 3, 4});
  CHECK(r->body.find("event: passive_reply") != std::string::npos);

  r = srv.client->Get(base + "/events?once=1&after=2");
  CHECK(frames_of(r->body) == std::vector<int>{3, 4});
  r = srv.client->Get(base + "/events?once=1", {{"Last-Event-ID", "1"}});
  CHECK(frames_of(r->body) == std::vector<int>{2, 3, 4});

  // Live stream: a frame appended after subscribing arrives.
  std::string received;
  std::thread late([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    srv.post(base + "/chat", {{"text", "late"}}, 200);
  });
  httplib::Client streaming("127.0.0.1", srv.client->port());
  streaming.set_read_timeout(5, 0);
  streaming.Get(base + "/events?after=4", [&](const char* data, std::size_t n) {
    received.append(data, n);
    return received.find("id: 5") == std::string::npos;  // stop once frame 5 is in
  });
  late.join();
  CHECK(frames_of(received) == std::vector<int>{5});
}

TEST_CASE("http: toggle, meta and manual ticks") {
  Served srv;
  const auto id = srv.create();
  const auto base = "/sessions/" + id;
  auto r = srv.client->Put(base + "/active-agent", R"({"enabled": false})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  r = srv.client->Put(base + "/active-agent", R"({"enabled": "maybe"})", "application/json");
  CHECK(r->status == 400);

  srv.post(base + "/chat", {{"text", "hi"}}, 200);
  CHECK(srv.service->workbench().tick(id).outcome == TickOutcome::Disabled);
  srv.client->Put(base + "/active-agent", R"({"enabled": true})", "application/json");
  CHECK(srv.service->workbench().tick(id).outcome == TickOutcome::Fired);

  r = srv.client->Get("/meta/prompts");
  REQUIRE(r);
  const auto meta = json::parse(r->body);
  CHECK(meta["templates"].size() == 7);
  for (const auto& t : meta["templates"])
    CHECK(t["digest"] == sha256_hex(t["body"].get<std::string>()));
}

TEST_CASE("workbench reloads sessions from disk") {
  ServiceConfig config;
  config.data_dir = testsupport::temp_dir("reload");
  config.mock = MockScript{};
  config.active_interval = std::chrono::milliseconds(0);
  std::string id;
  std::string digest;
  {
    Workbench wb(config);
    auto s = wb.create_session();
    id = s->id();
    handle_chat(*s, "remember me");
    wb.save(*s);
    digest = history_digest(s->history.snapshot());
  }
  Workbench wb(config);
  CHECK(history_digest(wb.get(id)->history.snapshot()) == digest);
  CHECK(code_of([&] { wb.get("../escape"); }) == ErrorCode::UnknownSession);
}

TEST_CASE("timers drive the active agent in real time") {
  ServiceConfig config;
  config.data_dir = testsupport::temp_dir("timer");
  config.mock = MockScript{};
  config.active_interval = std::chrono::milliseconds(100);
  Workbench wb(config);
  auto s = wb.create_session();
  handle_chat(*s, "hello");
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(3);
  while (std::chrono::steady_clock::now() < deadline &&
         testsupport::mock_of(s->active).received().empty())
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  CHECK(testsupport::mock_of(s->active).received().size() == 1);
  std::this_thread::sleep_for(std::chrono::milliseconds(350));
  CHECK(testsupport::mock_of(s->active).received().size() == 1);  // idle since
}
