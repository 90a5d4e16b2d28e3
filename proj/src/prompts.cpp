#include "duetml/prompts.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>

#include "duetml/error.hpp"

namespace duetml {

namespace {

constexpr std::string_view kPassiveSystem =
    R"prompt(Assist a user in creating an image classification model using their own data. The system allows users to define categories, upload images, train the model, and validate its accuracy. The model refers to the image features. The number of categories is flexible, with a maximum of 10. Start by addressing the user's possibly vague initial goal. Proactively engage with the user through dialogue, offering specific examples and suggestions to guide their machine learning problem formulation. Be mindful of potential misalignments such as inappropriate category names, insufficient category numbers, or unsuitable training images. Use concise dialogue to probe and clarify the user's needs, guiding their approach to problem formulation and data preparation. Suggest category names. Also, suggest testing with adversarial or ambiguous images during validation to uncover any overlooked categories that are critical to achieving the user's goals. The user has a limited number of images, so avoid giving advice about the quantity of data. Keep responses brief and natural, about one line. Always speak in (user_selected_language).)prompt";

constexpr std::string_view kPassiveChatNoData =
    R"prompt(Please respond to the user's question/comment. The user's question/comment: '(user_input)'.)prompt";

constexpr std::string_view kPassiveChatWithData =
    R"prompt(The attached images represent the training data defined by the user, showing the category names and the associated images (up to 50 images are displayed, even if there are more than 50).
Based on this, please respond to the user's question/comment. User's question/comment: '(user_input)'.)prompt";

constexpr std::string_view kPassiveAskCategory =
    R"prompt(Please refer to one of the categories from the training data. The category name is (user_defined_category_name), and the attached image displays the associated uploaded images (up to 50 images are shown, even if there are more).
Review the appropriateness of the category name and images, both individually and in the context of previous discussions with the user.)prompt";

constexpr std::string_view kPassiveAskInference =
    R"prompt(The attached image serves to validate the trained classification model.
Inference results are: (inference_result)
These results show all the category names defined by the user in the training data and the probabilities assigned to each category by the model.
Encourage the user to introduce unexpected categories, like a lion in a dog and cat classifier or a fruit in a vegetable classifier, not only to test the model's limits but to inspire refinement in their problem formulation.
This helps the user discover new potential categories and realize the importance of precise category definitions in classification models.)prompt";

constexpr std::string_view kActiveWithData =
    R"prompt(Advise a user to create an image classification model using their own data.
The user interacts with the AI assistant during the model creation process, and all dialogues are recorded as (chat_log).
Current training data is shown in the attached images, with up to 50 images per category.
Focus on guiding the user to refine their vague ideas into a well-defined classification problem.
Use concise dialogue to challenge and clarify the user's understanding of categories and model validation.
Suggest category names.
Also, suggest testing with adversarial or ambiguous images during validation to help identify any necessary but overlooked categories, refining the model's behavior to meet the user's specific goal.
The user has a limited number of images, so avoid giving advice about the quantity of data. Keep communication clear, direct, and in (user_selected_language).)prompt";

constexpr std::string_view kActiveNoData =
    R"prompt(Advise a user to create an image classification model using their own data. The user interacts with the AI assistant during the model creation process, and all dialogues are recorded as (chat_log).
Focus on guiding the user to refine their vague ideas into a well-defined classification problem.
Use concise dialogue to challenge and clarify the user's understanding of categories and model validation.
Suggest category names.
Also, suggest testing with adversarial or ambiguous images during validation to help identify any necessary but overlooked categories, refining the model's behavior to meet the user's specific goal.
The user has a limited number of images, so avoid giving advice about the quantity of data. Keep communication clear, direct, and in (user_selected_language).)prompt";

constexpr std::array<std::string_view, 5> kPlaceholderNames = {
    "user_selected_language", "user_input", "user_defined_category_name", "inference_result",
    "chat_log"};

constexpr std::size_t kMaxAttachments = 11;

const std::optional<std::string>* optional_binding(const PromptBindings& b, std::string_view name) {
  if (name == "user_input") return &b.user_input;
  if (name == "user_defined_category_name") return &b.user_defined_category_name;
  if (name == "inference_result") return &b.inference_result;
  if (name == "chat_log") return &b.chat_log;
  return nullptr;
}

std::string substitute(std::string_view body, const PromptBindings& b) {
  std::string out;
  out.reserve(body.size());
  std::size_t pos = 0;
  while (pos < body.size()) {
    bool replaced = false;
    if (body[pos] == '(') {
      for (auto name : kPlaceholderNames) {
        const auto len = name.size();
        if (body.compare(pos + 1, len, name) == 0 && pos + 1 + len < body.size() &&
            body[pos + 1 + len] == ')') {
          if (name == "user_selected_language") {
            out += b.user_selected_language;
          } else {
            out += **optional_binding(b, name);
          }
          pos += len + 2;
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(body[pos++]);
  }
  return out;
}

std::string one_line(std::string_view text) {
  std::string out(text);
  std::replace(out.begin(), out.end(), '\n', ' ');
  std::replace(out.begin(), out.end(), '\r', ' ');
  return out;
}

}  // namespace

std::string_view to_string(TemplateId id) {
  switch (id) {
    case TemplateId::PassiveSystem: return "passive_system";
    case TemplateId::PassiveChatNoData: return "passive_chat_no_data";
    case TemplateId::PassiveChatWithData: return "passive_chat_with_data";
    case TemplateId::PassiveAskCategory: return "passive_ask_category";
    case TemplateId::PassiveAskInference: return "passive_ask_inference";
    case TemplateId::ActiveWithData: return "active_with_data";
    case TemplateId::ActiveNoData: return "active_no_data";
  }
  return "passive_chat_no_data";
}

std::optional<TemplateId> template_from_string(std::string_view s) {
  for (const auto& t : all_templates())
    if (to_string(t.id) == s) return t.id;
  return std::nullopt;
}

std::vector<std::string> find_placeholders(std::string_view body) {
  std::vector<std::pair<std::size_t, std::string>> found;
  for (auto name : kPlaceholderNames) {
    const std::string token = "(" + std::string(name) + ")";
    if (const auto p = body.find(token); p != std::string_view::npos)
      found.emplace_back(p, std::string(name));
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> out;
  for (auto& [p, name] : found) out.push_back(std::move(name));
  return out;
}

const std::vector<PromptTemplate>& all_templates() {
  static const std::vector<PromptTemplate> templates = [] {
    const std::pair<TemplateId, std::string_view> bodies[] = {
        {TemplateId::PassiveSystem, kPassiveSystem},
        {TemplateId::PassiveChatNoData, kPassiveChatNoData},
        {TemplateId::PassiveChatWithData, kPassiveChatWithData},
        {TemplateId::PassiveAskCategory, kPassiveAskCategory},
        {TemplateId::PassiveAskInference, kPassiveAskInference},
        {TemplateId::ActiveWithData, kActiveWithData},
        {TemplateId::ActiveNoData, kActiveNoData},
    };
    std::vector<PromptTemplate> out;
    for (const auto& [id, body] : bodies) out.push_back({id, body, find_placeholders(body)});
    return out;
  }();
  return templates;
}

const PromptTemplate& prompt_template(TemplateId id) {
  return all_templates()[static_cast<std::size_t>(id)];
}

bool is_passive(TemplateId id) {
  return id != TemplateId::ActiveWithData && id != TemplateId::ActiveNoData;
}

bool takes_attachments(TemplateId id) {
  switch (id) {
    case TemplateId::PassiveChatWithData:
    case TemplateId::PassiveAskCategory:
    case TemplateId::PassiveAskInference:
    case TemplateId::ActiveWithData:
      return true;
    default:
      return false;
  }
}

Attachment Attachment::from_montage(const Montage& m) {
  return {m.category_name, "image/png", m.png, m.digest};
}

Attachment Attachment::from_image_bytes(std::string label, Bytes data) {
  Attachment a;
  a.label = std::move(label);
  a.mime_type = std::string(duetml::mime_type(sniff_format(data)));
  a.digest = sha256_hex(data);
  a.data = std::move(data);
  return a;
}

std::string PromptEnvelope::digest() const {
  std::ostringstream s;
  s << "template:" << to_string(template_id) << '\n';
  s << "system:" << (system_text ? std::to_string(system_text->size()) + ":" + *system_text : "-")
    << '\n';
  s << "user:" << user_text.size() << ':' << user_text << '\n';
  for (const auto& a : attachments) s << "attachment:" << a.label << ':' << a.digest << '\n';
  s << "seed:" << montage_seed << '\n';
  return sha256_hex(s.str());
}

std::vector<std::string> PromptEnvelope::attachment_labels() const {
  std::vector<std::string> out;
  for (const auto& a : attachments) out.push_back(a.label);
  return out;
}

PromptEnvelope render(TemplateId id, const PromptBindings& bindings,
                      std::vector<Attachment> attachments, std::uint64_t montage_seed) {
  const auto& tmpl = prompt_template(id);
  std::vector<std::string> required = tmpl.placeholders;
  if (is_passive(id) && id != TemplateId::PassiveSystem)
    required.push_back("user_selected_language");

  for (auto name : kPlaceholderNames) {
    const bool needed = std::find(required.begin(), required.end(), name) != required.end();
    const auto* slot = optional_binding(bindings, name);
    if (!slot) continue;  // language is always bound
    if (needed && !slot->has_value())
      throw Error(ErrorCode::MissingBinding,
                  std::string(to_string(id)) + " needs (" + std::string(name) + ")");
    if (!needed && slot->has_value())
      throw Error(ErrorCode::UnexpectedBinding,
                  std::string(to_string(id)) + " has no (" + std::string(name) + ")");
  }

  if (bindings.user_selected_language.empty() &&
      std::find(required.begin(), required.end(), "user_selected_language") != required.end())
    throw Error(ErrorCode::MissingBinding,
                std::string(to_string(id)) + " needs (user_selected_language)");

  if (!takes_attachments(id) && !attachments.empty())
    throw Error(ErrorCode::UnexpectedAttachment,
                std::string(to_string(id)) + " does not reference training data");
  if (takes_attachments(id) && attachments.empty())
    throw Error(ErrorCode::MissingAttachment, std::string(to_string(id)) + " needs images");
  const bool single = id == TemplateId::PassiveAskCategory || id == TemplateId::PassiveAskInference;
  if ((single && attachments.size() != 1) || attachments.size() > kMaxAttachments)
    throw Error(ErrorCode::UnexpectedAttachment,
                std::string(to_string(id)) + " got " + std::to_string(attachments.size()) +
                    " attachments");

  PromptEnvelope env;
  env.template_id = id;
  env.bindings = bindings;
  env.montage_seed = montage_seed;
  env.user_text = substitute(tmpl.body, bindings);
  if (is_passive(id) && id != TemplateId::PassiveSystem)
    env.system_text = substitute(prompt_template(TemplateId::PassiveSystem).body, bindings);
  env.attachments = std::move(attachments);
  return env;
}

std::string serialize_inference_result(const InferenceResult& result) {
  std::string out = "{";
  for (std::size_t i = 0; i < result.labels.size(); ++i) {
    if (i) out += ", ";
    out += "'" + result.labels[i] + "': " + std::to_string(result.percentages[i]) + "%";
  }
  return out + "}";
}

std::string serialize_chat_log(std::span<const Message> history, std::size_t max_chars) {
  std::vector<std::string> lines;
  for (const auto& m : history) {
    // Only the dialogue goes in; workbench events are visible to the agent
    // through the montages and the conversation they prompted.
    std::string line;
    switch (m.role) {
      case Role::User: line = "USER: "; break;
      case Role::PassiveAgent: line = "ASSISTANT (passive): "; break;
      case Role::ActiveAgent: line = "ASSISTANT (active): "; break;
      case Role::SystemEvent: continue;
    }
    line += one_line(m.text);
    if (m.envelope && !m.envelope->attachment_labels.empty()) {
      line += " [attached: ";
      for (std::size_t i = 0; i < m.envelope->attachment_labels.size(); ++i) {
        if (i) line += ", ";
        line += m.envelope->attachment_labels[i];
      }
      line += "]";
    }
    lines.push_back(std::move(line));
  }
  std::size_t first = 0;
  if (max_chars > 0) {
    std::size_t total = 0;
    first = lines.size();
    while (first > 0 && total + lines[first - 1].size() + (total ? 1 : 0) <= max_chars) {
      total += lines[first - 1].size() + (total ? 1 : 0);
      --first;
    }
  }
  std::string out;
  for (std::size_t i = first; i < lines.size(); ++i) {
    if (i > first) out += '\n';
    out += lines[i];
  }
  return out;
}

}  // namespace duetml
