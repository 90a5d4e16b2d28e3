#include "duetml/features.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <numbers>

#include "http_util.hpp"

namespace duetml {

ExtractorSpec ExtractorSpec::builtin() { return {}; }

ExtractorSpec ExtractorSpec::external(std::string extractor_id, int dim, std::string endpoint) {
  ExtractorSpec s;
  s.extractor_id = std::move(extractor_id);
  s.dim = dim;
  s.kind = Kind::External;
  s.endpoint = std::move(endpoint);
  return s;
}

Eigen::VectorXd histo_v1_raw(const Image& src) {
  using L = HistoLayout;
  const Image img = resize_bilinear(src, L::kSide, L::kSide);
  constexpr double kPixels = L::kSide * L::kSide;

  Eigen::VectorXd f = Eigen::VectorXd::Zero(L::kDim);
  Eigen::MatrixXd lum(L::kSide, L::kSide);  // (row, col)
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d sum_sq = Eigen::Vector3d::Zero();

  for (int y = 0; y < L::kSide; ++y) {
    for (int x = 0; x < L::kSide; ++x) {
      const std::uint8_t* p = img.at(x, y);
      for (int c = 0; c < 3; ++c) {
        f[L::kColorOffset + c * L::kColorBins + (p[c] >> 5)] += 1.0 / kPixels;
        const double v = p[c] / 255.0;
        sum[c] += v;
        sum_sq[c] += v * v;
      }
      lum(y, x) = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
    }
  }

  // Orientation histogram: one vote per pixel, unsigned angle in [0, pi).
  // Flat pixels (zero gradient) land in bin 0, the degenerate bin.
  for (int y = 0; y < L::kSide; ++y) {
    for (int x = 0; x < L::kSide; ++x) {
      const double gx = lum(y, std::min(x + 1, L::kSide - 1)) - lum(y, std::max(x - 1, 0));
      const double gy = lum(std::min(y + 1, L::kSide - 1), x) - lum(std::max(y - 1, 0), x);
      int bin = 0;
      if (std::hypot(gx, gy) > 1e-12) {
        double angle = std::atan2(gy, gx);
        if (angle < 0) angle += std::numbers::pi;
        bin = std::min(L::kOrientBins - 1,
                       static_cast<int>(angle / (std::numbers::pi / L::kOrientBins)));
      }
      f[L::kOrientOffset + bin] += 1.0 / kPixels;
    }
  }

  for (int c = 0; c < 3; ++c) {
    const double mean = sum[c] / kPixels;
    f[L::kMomentOffset + c] = mean;
    f[L::kMomentOffset + 3 + c] = std::sqrt(std::max(0.0, sum_sq[c] / kPixels - mean * mean));
  }

  const int row_h = L::kSide / L::kGridRows;
  for (int r = 0; r < L::kGridRows; ++r) {
    for (int c = 0; c < L::kGridCols; ++c) {
      const int x0 = c * L::kSide / L::kGridCols;
      const int x1 = (c + 1) * L::kSide / L::kGridCols;
      f[L::kGridOffset + r * L::kGridCols + c] = lum.block(r * row_h, x0, row_h, x1 - x0).mean();
    }
  }
  return f;
}

Eigen::VectorXd l2_normalized(const Eigen::VectorXd& v) {
  const double n = v.norm();
  if (n == 0.0) return Eigen::VectorXd::Zero(v.size());
  return v / n;
}

namespace {

FeatureVector extract_external(std::span<const std::uint8_t> bytes, const ExtractorSpec& spec) {
  const auto fmt = sniff_format(bytes);
  decode_image(bytes);  // reject undecodable payloads before any network traffic
  const auto url = detail::split_url(spec.endpoint);
  httplib::Client cli(url.base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(spec.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(spec.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());

  std::string last_error;
  for (int attempt = 0; attempt <= spec.retries; ++attempt) {
    auto res = cli.Post(url.path, reinterpret_cast<const char*>(bytes.data()), bytes.size(),
                        std::string(mime_type(fmt)));
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    std::vector<double> values;
    try {
      values = nlohmann::json::parse(res->body).get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ExternalEmbedderUnavailable,
                  std::string("embedder returned malformed vector: ") + e.what());
    }
    if (static_cast<int>(values.size()) != spec.dim)
      throw Error(ErrorCode::DimensionMismatch, "embedder returned " +
                                                    std::to_string(values.size()) +
                                                    " values, expected " + std::to_string(spec.dim));
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(values.data(), spec.dim);
    if (!v.allFinite())
      throw Error(ErrorCode::ExternalEmbedderUnavailable, "embedder returned non-finite values");
    return {l2_normalized(v), spec.extractor_id};
  }
  throw Error(ErrorCode::ExternalEmbedderUnavailable, spec.endpoint + ": " + last_error);
}

}  // namespace

FeatureVector extract(std::span<const std::uint8_t> image_bytes, const ExtractorSpec& spec) {
  if (spec.kind == ExtractorSpec::Kind::External) return extract_external(image_bytes, spec);
  if (spec.extractor_id != "histo-v1" || spec.dim != HistoLayout::kDim)
    throw Error(ErrorCode::ExtractorMismatch, "unknown builtin extractor " + spec.extractor_id);
  return {l2_normalized(histo_v1_raw(decode_image(image_bytes))), spec.extractor_id};
}

std::size_t BatchResult::succeeded() const {
  std::size_t n = 0;
  for (const auto& v : vectors) n += v.has_value();
  return n;
}

BatchResult extract_batch(std::span<const Bytes> images, const ExtractorSpec& spec) {
  BatchResult out;
  out.vectors.resize(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    try {
      out.vectors[i] = extract(images[i], spec);
    } catch (const Error& e) {
      out.errors.push_back({i, e.code(), e.what()});
    }
  }
  return out;
}

}  // namespace duetml
