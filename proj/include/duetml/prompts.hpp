#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "duetml/classifier.hpp"
#include "duetml/history.hpp"
#include "duetml/montage.hpp"
#include "duetml/util.hpp"

namespace duetml {

enum class TemplateId {
  PassiveSystem,
  PassiveChatNoData,
  PassiveChatWithData,
  PassiveAskCategory,
  PassiveAskInference,
  ActiveWithData,
  ActiveNoData,
};

std::string_view to_string(TemplateId id);
std::optional<TemplateId> template_from_string(std::string_view s);

/// Template bodies are kept verbatim. A placeholder is its name in
/// parentheses, e.g. "(user_input)".
struct PromptTemplate {
  TemplateId id;
  std::string_view body;
  std::vector<std::string> placeholders;  // in order of first appearance
};

const PromptTemplate& prompt_template(TemplateId id);
const std::vector<PromptTemplate>& all_templates();

/// Placeholder names present in `body`, from the known placeholder set.
std::vector<std::string> find_placeholders(std::string_view body);

bool is_passive(TemplateId id);
/// Whether the variant is sent with images attached.
bool takes_attachments(TemplateId id);

struct PromptBindings {
  std::string user_selected_language = "English";
  std::optional<std::string> user_input;
  std::optional<std::string> user_defined_category_name;
  std::optional<std::string> inference_result;
  std::optional<std::string> chat_log;

  bool operator==(const PromptBindings&) const = default;
};

struct Attachment {
  std::string label;  // category name, or "evaluated image"
  std::string mime_type;
  Bytes data;
  std::string digest;  // sha256 of data

  static Attachment from_montage(const Montage& m);
  static Attachment from_image_bytes(std::string label, Bytes data);
};

/// A fully rendered model request. Passive envelopes carry the system prompt;
/// active ones put everything in the single user prompt.
struct PromptEnvelope {
  TemplateId template_id = TemplateId::PassiveChatNoData;
  std::optional<std::string> system_text;
  std::string user_text;
  std::vector<Attachment> attachments;
  PromptBindings bindings;
  std::uint64_t montage_seed = 0;

  std::string digest() const;
  std::vector<std::string> attachment_labels() const;
};

/// Substitutes bindings into the template (inserted text is never
/// re-scanned). Throws MissingBinding, UnexpectedBinding,
/// UnexpectedAttachment, MissingAttachment.
PromptEnvelope render(TemplateId id, const PromptBindings& bindings,
                      std::vector<Attachment> attachments = {}, std::uint64_t montage_seed = 0);

/// "{'dog': 30%, 'cat': 20%, 'bird': 50%}", in model label order.
std::string serialize_inference_result(const InferenceResult& result);

/// One "ROLE: text" line per message. Newlines inside a message collapse to
/// spaces; replies that were sent with images name them in a trailing
/// "[attached: ...]". `max_chars` (0 = unlimited) keeps the newest tail.
std::string serialize_chat_log(std::span<const Message> history, std::size_t max_chars = 0);

}  // namespace duetml
