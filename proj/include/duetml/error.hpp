#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace duetml {

enum class ErrorCode {
  EmptyName,
  DuplicateName,
  CategoryLimitExceeded,
  UnknownCategory,
  UndecodableImage,
  EmptyCategory,
  ExternalEmbedderUnavailable,
  InsufficientCategories,
  ExtractorMismatch,
  DimensionMismatch,
  MissingBinding,
  UnexpectedBinding,
  UnexpectedAttachment,
  MissingAttachment,
  AlreadyStarted,
  NotStarted,
  EmptyMessage,
  UnknownInference,
  UnknownSession,
  NoModel,
  AgentBackendFailure,
  Timeout,
  HttpError,
  PayloadTooLarge,
  AuthFailure,
  Busy,
  CorruptManifest,
  VersionMismatch,
  BadRequest,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// HTTP status the service maps each code to.
int http_status(ErrorCode code) noexcept;

/// The one exception type thrown by the library. `index` is set for
/// per-item failures (e.g. which upload payload failed to decode), `status`
/// for transport errors that carry an HTTP status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> index = std::nullopt,
        std::optional<int> status = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> index() const noexcept { return index_; }
  std::optional<int> status() const noexcept { return status_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
  std::optional<int> status_;
};

}  // namespace duetml
