#include "json_io.hpp"

namespace duetml::detail {

using nlohmann::json;

json message_to_json(const Message& m) {
  json j{{"seq", m.seq},
         {"role", to_string(m.role)},
         {"text", m.text},
         {"timestamp", m.timestamp.count()},
         {"event", to_string(m.event)}};
  if (m.frame_seq) j["frame_seq"] = *m.frame_seq;
  if (m.envelope) {
    j["envelope"] = {{"template_id", m.envelope->template_id},
                     {"digest", m.envelope->digest},
                     {"attachment_labels", m.envelope->attachment_labels},
                     {"montage_seed", m.envelope->montage_seed},
                     {"request_id", m.envelope->request_id}};
  }
  return j;
}

Message message_from_json(const json& j) {
  Message m;
  m.seq = j.at("seq").get<std::uint64_t>();
  m.role = role_from_string(j.at("role").get<std::string>());
  m.text = j.at("text").get<std::string>();
  m.timestamp = Timestamp(j.at("timestamp").get<std::int64_t>());
  m.event = event_kind_from_string(j.at("event").get<std::string>());
  if (j.contains("frame_seq")) m.frame_seq = j.at("frame_seq").get<std::uint64_t>();
  if (j.contains("envelope")) {
    const auto& e = j.at("envelope");
    m.envelope = EnvelopeSummary{e.at("template_id").get<std::string>(),
                                 e.at("digest").get<std::string>(),
                                 e.at("attachment_labels").get<std::vector<std::string>>(),
                                 e.at("montage_seed").get<std::uint64_t>(),
                                 e.at("request_id").get<std::string>()};
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json image_ref_to_json(const ImageRef& r) {
  return {{"id", r.id},
          {"content_hash", r.content_hash},
          {"width", r.width},
          {"height", r.height},
          {"storage_path", r.storage_path}};
}

}  // namespace duetml::detail
