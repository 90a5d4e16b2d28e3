#include "duetml/error.hpp"

namespace duetml {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyName: return "EmptyName";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::CategoryLimitExceeded: return "CategoryLimitExceeded";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::UndecodableImage: return "UndecodableImage";
    case ErrorCode::EmptyCategory: return "EmptyCategory";
    case ErrorCode::ExternalEmbedderUnavailable: return "ExternalEmbedderUnavailable";
    case ErrorCode::InsufficientCategories: return "InsufficientCategories";
    case ErrorCode::ExtractorMismatch: return "ExtractorMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingBinding: return "MissingBinding";
    case ErrorCode::UnexpectedBinding: return "UnexpectedBinding";
    case ErrorCode::UnexpectedAttachment: return "UnexpectedAttachment";
    case ErrorCode::MissingAttachment: return "MissingAttachment";
    case ErrorCode::AlreadyStarted: return "AlreadyStarted";
    case ErrorCode::NotStarted: return "NotStarted";
    case ErrorCode::EmptyMessage: return "EmptyMessage";
    case ErrorCode::UnknownInference: return "UnknownInference";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::NoModel: return "NoModel";
    case ErrorCode::AgentBackendFailure: return "AgentBackendFailure";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::HttpError: return "HttpError";
    case ErrorCode::PayloadTooLarge: return "PayloadTooLarge";
    case ErrorCode::AuthFailure: return "AuthFailure";
    case ErrorCode::Busy: return "Busy";
    case ErrorCode::CorruptManifest: return "CorruptManifest";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::BadRequest: return "BadRequest";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyName:
    case ErrorCode::UndecodableImage:
    case ErrorCode::EmptyMessage:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::MissingBinding:
    case ErrorCode::UnexpectedBinding:
    case ErrorCode::UnexpectedAttachment:
    case ErrorCode::MissingAttachment:
    case ErrorCode::BadRequest:
      return 400;
    case ErrorCode::UnknownCategory:
    case ErrorCode::UnknownInference:
    case ErrorCode::UnknownSession:
      return 404;
    case ErrorCode::DuplicateName:
    case ErrorCode::CategoryLimitExceeded:
    case ErrorCode::EmptyCategory:
    case ErrorCode::InsufficientCategories:
    case ErrorCode::AlreadyStarted:
    case ErrorCode::NotStarted:
    case ErrorCode::NoModel:
    case ErrorCode::Busy:
    case ErrorCode::ExtractorMismatch:
      return 409;
    case ErrorCode::PayloadTooLarge:
      return 413;
    case ErrorCode::AgentBackendFailure:
    case ErrorCode::HttpError:
    case ErrorCode::AuthFailure:
    case ErrorCode::ExternalEmbedderUnavailable:
      return 502;
    case ErrorCode::Timeout:
      return 504;
    case ErrorCode::CorruptManifest:
    case ErrorCode::VersionMismatch:
    case ErrorCode::IoError:
      return 500;
  }
  return 500;
}

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::size_t> index, std::optional<int> status)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      index_(index),
      status_(status) {}

}  // namespace duetml
