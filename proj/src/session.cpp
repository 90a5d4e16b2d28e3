#include "duetml/session.hpp"

#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "duetml/error.hpp"
#include "duetml/prompts.hpp"
#include "json_io.hpp"

namespace duetml {

namespace fs = std::filesystem;
using nlohmann::json;
using detail::message_from_json;
using detail::message_to_json;
using detail::vector_from_json;
using detail::vector_to_json;

namespace {

constexpr int kSessionFormat = 1;

std::string percent_text(double accuracy) {
  return std::to_string(static_cast<int>(std::lround(accuracy * 100.0))) + "%";
}

}  // namespace

std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::Fresh: return "fresh";
    case SessionState::AwaitingGoal: return "awaiting_goal";
    case SessionState::Conversing: return "conversing";
  }
  return "fresh";
}

Session::Session(std::string id, std::uint64_t seed, Clock clock, SessionConfig config,
                 std::unique_ptr<MllmBackend> passive_backend,
                 std::unique_ptr<MllmBackend> active_backend, BackendConfig limits)
    : passive(AgentId::Passive, std::move(passive_backend), limits),
      active(AgentId::Active, std::move(active_backend), limits),
      id_(std::move(id)),
      seed_(seed),
      clock_(clock ? std::move(clock) : Clock(system_now)),
      config_(std::move(config)) {
  active_enabled = config_.active_enabled_default;
  created_at = clock_();
}

void Session::record_interaction() {
  tracker.last_interaction_at = now();
  ++tracker.interactions_since_tick;
}

std::uint64_t Session::next_montage_seed() { return splitmix64(seed_ ^ splitmix64(++prompt_events)); }

const Category& Session::add_category(std::string_view name) {
  std::lock_guard lock(mutex);
  const Category& c = dataset.add_category(name, now());
  record_interaction();
  history.append(Role::SystemEvent, "Category '" + c.name + "' added", now(), EventKind::Dataset);
  return c;
}

void Session::remove_category(std::string_view name) {
  std::lock_guard lock(mutex);
  dataset.remove_category(name);
  record_interaction();
  history.append(Role::SystemEvent, "Category '" + std::string(name) + "' removed", now(),
                 EventKind::Dataset);
}

void Session::rename_category(std::string_view old_name, std::string_view new_name) {
  std::lock_guard lock(mutex);
  dataset.rename_category(old_name, new_name);
  record_interaction();
  history.append(Role::SystemEvent,
                 "Category '" + std::string(old_name) + "' renamed to '" + trim(new_name) + "'",
                 now(), EventKind::Dataset);
}

UploadReport Session::upload_images(std::string_view category, std::span<const Bytes> payloads) {
  std::lock_guard lock(mutex);
  const std::size_t before = dataset.get(category).images.size();
  auto log = [&](std::size_t added, std::size_t dups) {
    std::string text = "Uploaded " + std::to_string(added) + " image(s) to '" +
                       std::string(category) + "'";
    if (dups) text += ", " + std::to_string(dups) + " duplicate(s) skipped";
    record_interaction();
    history.append(Role::SystemEvent, std::move(text), now(), EventKind::Dataset);
  };
  try {
    auto report = dataset.upload_images(category, payloads);
    log(report.added.size(), report.duplicate_indices.size());
    return report;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UndecodableImage) {
      const std::size_t added = dataset.get(category).images.size() - before;
      if (added) log(added, 0);
    }
    throw;
  }
}

TrainResult Session::train_model() {
  if (training.exchange(true)) throw Error(ErrorCode::Busy, "a training run is in progress");
  struct Release {
    std::atomic<bool>& flag;
    ~Release() { flag = false; }
  } release{training};

  std::lock_guard lock(mutex);
  auto result = train(dataset, config_.extractor, config_.hyperparams, now());
  model = result.model;
  record_interaction();
  std::string labels;
  for (const auto& l : result.model.labels) labels += (labels.empty() ? "" : ", ") + l;
  history.append(Role::SystemEvent,
                 "Training finished: " + std::to_string(result.model.labels.size()) + " labels (" +
                     labels + "), training accuracy " +
                     percent_text(result.summary.training_accuracy),
                 now(), EventKind::Training);
  return result;
}

StoredInference Session::infer(Bytes image) {
  std::lock_guard lock(mutex);
  if (!model) throw Error(ErrorCode::NoModel, "train a model first");
  StoredInference stored;
  stored.result = predict(*model, image, config_.extractor);
  stored.id = "inf-" + std::to_string(next_inference++);
  stored.image = std::move(image);
  stored.created_at = now();
  inferences[stored.id] = stored;
  record_interaction();
  history.append(Role::SystemEvent,
                 "Inference " + stored.id + ": " + serialize_inference_result(stored.result), now(),
                 EventKind::Inference);
  return stored;
}

std::string session_dir(const std::string& root, const std::string& id) {
  return (fs::path(root) / "sessions" / id).string();
}

namespace {

std::string inference_path(const StoredInference& inf) {
  return "inferences/" + inf.id + "." + std::string(extension(sniff_format(inf.image)));
}

}  // namespace

void persist(const Session& s, const std::string& root) {
  std::lock_guard lock(s.mutex);
  const std::string dir = session_dir(root, s.id());
  fs::create_directories(dir);

  for (const auto& cat : s.dataset.categories())
    for (const auto& ref : cat.images) {
      const auto path = fs::path(dir) / ref.storage_path;
      if (!fs::exists(path)) write_file(path.string(), s.dataset.blob(ref));
    }
  write_file(dir + "/dataset/manifest.json", s.dataset.manifest_json());

  if (s.model) {
    write_file(dir + "/model.bin", serialize_model(*s.model));
  } else {
    fs::remove(dir + "/model.bin");
  }

  json j;
  j["format"] = kSessionFormat;
  j["id"] = s.id();
  j["seed"] = s.seed();
  j["created_at"] = s.created_at.count();
  j["state"] = to_string(s.state);
  j["active_enabled"] = s.active_enabled;
  j["tracker"] = {{"last_interaction_at", s.tracker.last_interaction_at.count()},
                  {"interactions_since_tick", s.tracker.interactions_since_tick}};
  j["prompt_events"] = s.prompt_events;
  j["next_inference"] = s.next_inference;
  j["history"] = json::array();
  for (const auto& m : s.history.snapshot()) j["history"].push_back(message_to_json(m));
  j["inferences"] = json::array();
  for (const auto& [id, inf] : s.inferences) {
    const auto path = inference_path(inf);
    if (!fs::exists(fs::path(dir) / path)) write_file(dir + "/" + path, inf.image);
    j["inferences"].push_back({{"id", id},
                               {"labels", inf.result.labels},
                               {"scores", vector_to_json(inf.result.scores)},
                               {"probabilities", vector_to_json(inf.result.probabilities)},
                               {"percentages", inf.result.percentages},
                               {"top_label", inf.result.top_label},
                               {"image_digest", inf.result.image_digest},
                               {"image", path},
                               {"created_at", inf.created_at.count()}});
  }
  write_file(dir + "/session.json", j.dump(2));
}

std::unique_ptr<Session> load_session(const std::string& root, const std::string& id, Clock clock,
                                      SessionConfig config,
                                      std::unique_ptr<MllmBackend> passive_backend,
                                      std::unique_ptr<MllmBackend> active_backend,
                                      BackendConfig limits) {
  const std::string dir = session_dir(root, id);
  if (!fs::exists(dir + "/session.json"))
    throw Error(ErrorCode::UnknownSession, "no stored session " + id);
  const auto text = read_file(dir + "/session.json");

  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptManifest, std::string("session.json: ") + e.what());
  }

  try {
    if (j.at("format").get<int>() != kSessionFormat)
      throw Error(ErrorCode::VersionMismatch, "session format " + j.at("format").dump());
    auto s = std::make_unique<Session>(id, j.at("seed").get<std::uint64_t>(), std::move(clock),
                                       std::move(config), std::move(passive_backend),
                                       std::move(active_backend), std::move(limits));
    s->created_at = Timestamp(j.at("created_at").get<std::int64_t>());
    const auto state = j.at("state").get<std::string>();
    s->state = state == "fresh"           ? SessionState::Fresh
               : state == "awaiting_goal" ? SessionState::AwaitingGoal
               : state == "conversing"
                   ? SessionState::Conversing
                   : throw Error(ErrorCode::CorruptManifest, "unknown session state " + state);
    s->active_enabled = j.at("active_enabled").get<bool>();
    s->tracker.last_interaction_at =
        Timestamp(j.at("tracker").at("last_interaction_at").get<std::int64_t>());
    s->tracker.interactions_since_tick =
        j.at("tracker").at("interactions_since_tick").get<std::uint64_t>();
    s->prompt_events = j.at("prompt_events").get<std::uint64_t>();
    s->next_inference = j.at("next_inference").get<std::uint64_t>();

    std::vector<Message> messages;
    for (const auto& jm : j.at("history")) messages.push_back(message_from_json(jm));
    s->history.restore(std::move(messages));

    for (const auto& ji : j.at("inferences")) {
      StoredInference inf;
      inf.id = ji.at("id").get<std::string>();
      inf.result.labels = ji.at("labels").get<std::vector<std::string>>();
      inf.result.scores = vector_from_json(ji.at("scores"));
      inf.result.probabilities = vector_from_json(ji.at("probabilities"));
      inf.result.percentages = ji.at("percentages").get<std::vector<int>>();
      inf.result.top_label = ji.at("top_label").get<std::string>();
      inf.result.image_digest = ji.at("image_digest").get<std::string>();
      inf.created_at = Timestamp(ji.at("created_at").get<std::int64_t>());
      inf.image = read_file(dir + "/" + ji.at("image").get<std::string>());
      s->inferences[inf.id] = std::move(inf);
    }

    const auto manifest_path = dir + "/dataset/manifest.json";
    if (!fs::exists(manifest_path)) throw Error(ErrorCode::CorruptManifest, "missing manifest");
    const auto manifest = read_file(manifest_path);
    s->dataset = TrainingDataset::from_manifest(
        std::string_view(reinterpret_cast<const char*>(manifest.data()), manifest.size()),
        [&](const std::string& rel) {
          try {
            return read_file(dir + "/" + rel);
          } catch (const Error&) {
            throw Error(ErrorCode::CorruptManifest, "missing image file " + rel);
          }
        });

    if (fs::exists(dir + "/model.bin")) s->model = deserialize_model(read_file(dir + "/model.bin"));
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptManifest, std::string("session.json: ") + e.what());
  }
}

std::string history_digest(std::span<const Message> messages) {
  json j = json::array();
  for (const auto& m : messages) j.push_back(message_to_json(m));
  return sha256_hex(j.dump());
}

}  // namespace duetml
