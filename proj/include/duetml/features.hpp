#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "duetml/error.hpp"
#include "duetml/image.hpp"
#include "duetml/util.hpp"

namespace duetml {

/// Which frozen backbone turns pixels into vectors. Builtin extractors are
/// pure functions of pixel data; external ones POST the image bytes to
/// `endpoint` and expect a JSON array of `dim` numbers back.
struct ExtractorSpec {
  enum class Kind { Builtin, External };

  std::string extractor_id = "histo-v1";
  int dim = 59;
  Kind kind = Kind::Builtin;
  std::string endpoint;
  std::chrono::milliseconds timeout{10000};
  int retries = 0;

  static ExtractorSpec builtin();
  static ExtractorSpec external(std::string extractor_id, int dim, std::string endpoint);

  bool operator==(const ExtractorSpec&) const = default;
};

struct FeatureVector {
  Eigen::VectorXd values;
  std::string extractor_id;

  Eigen::Index dim() const { return values.size(); }
};

/// histo-v1 layout, in concatenation order.
struct HistoLayout {
  static constexpr int kSide = 64;
  static constexpr int kColorBins = 8;
  static constexpr int kOrientBins = 9;
  static constexpr int kGridRows = 4;
  static constexpr int kGridCols = 5;

  static constexpr int kColorOffset = 0;
  static constexpr int kOrientOffset = kColorOffset + 3 * kColorBins;
  static constexpr int kMomentOffset = kOrientOffset + kOrientBins;
  static constexpr int kGridOffset = kMomentOffset + 6;
  static constexpr int kDim = kGridOffset + kGridRows * kGridCols;
};
static_assert(HistoLayout::kDim == 59);

/// Un-normalised histo-v1 features of a decoded image.
Eigen::VectorXd histo_v1_raw(const Image& img);

/// L2-normalised copy; an all-zero input stays zero.
Eigen::VectorXd l2_normalized(const Eigen::VectorXd& v);

/// Throws UndecodableImage, ExternalEmbedderUnavailable, DimensionMismatch.
FeatureVector extract(std::span<const std::uint8_t> image_bytes, const ExtractorSpec& spec);

struct BatchError {
  std::size_t index;
  ErrorCode code;
  std::string message;
};

struct BatchResult {
  std::vector<std::optional<FeatureVector>> vectors;  // one slot per input
  std::vector<BatchError> errors;

  std::size_t succeeded() const;
};

BatchResult extract_batch(std::span<const Bytes> images, const ExtractorSpec& spec);

}  // namespace duetml
