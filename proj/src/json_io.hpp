#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include "duetml/classifier.hpp"
#include "duetml/dataset.hpp"
#include "duetml/history.hpp"

namespace duetml::detail {

nlohmann::json message_to_json(const Message& m);
Message message_from_json(const nlohmann::json& j);

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

nlohmann::json image_ref_to_json(const ImageRef& r);

}  // namespace duetml::detail
