#include "duetml/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "duetml/error.hpp"

namespace duetml {

int InferenceResult::percentage(std::string_view label) const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return percentages[i];
  throw Error(ErrorCode::UnknownCategory, "no label '" + std::string(label) + "' in result");
}

ClassifierModel train_on_features(const std::vector<std::string>& labels,
                                  const Eigen::MatrixXd& features,
                                  const std::vector<int>& label_of,
                                  const SvmHyperparams& hyperparams, std::string extractor_id,
                                  std::vector<int>* sweeps, bool* converged) {
  if (labels.size() < 2)
    throw Error(ErrorCode::InsufficientCategories, "need at least two non-empty categories");
  ClassifierModel model;
  model.labels = labels;
  model.hyperparams = hyperparams;
  model.extractor_id = std::move(extractor_id);
  model.weights.resize(static_cast<Eigen::Index>(labels.size()), features.cols());
  model.biases.resize(static_cast<Eigen::Index>(labels.size()));
  if (converged) *converged = true;

  Eigen::VectorXd y(features.rows());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    for (Eigen::Index i = 0; i < features.rows(); ++i)
      y[i] = label_of[static_cast<std::size_t>(i)] == static_cast<int>(k) ? 1.0 : -1.0;
    const auto svm = train_binary_svm<double>(features, y, hyperparams);
    const auto row = static_cast<Eigen::Index>(k);
    model.weights.row(row) = svm.weights.transpose();
    model.biases[row] = svm.bias;
    if (sweeps) sweeps->push_back(svm.sweeps);
    if (converged) *converged = *converged && svm.converged;
  }
  return model;
}

TrainResult train(const TrainingDataset& dataset, const ExtractorSpec& extractor,
                  const SvmHyperparams& hyperparams, Timestamp now) {
  TrainResult out;
  std::vector<std::string> labels;
  std::vector<const ImageRef*> refs;
  std::vector<int> label_of;
  for (const auto& cat : dataset.categories()) {
    if (cat.images.empty()) {
      out.summary.excluded_empty.push_back(cat.name);
      continue;
    }
    for (const auto& ref : cat.images) {
      refs.push_back(&ref);
      label_of.push_back(static_cast<int>(labels.size()));
    }
    labels.push_back(cat.name);
  }
  if (labels.size() < 2)
    throw Error(ErrorCode::InsufficientCategories,
                "need at least two non-empty categories, have " + std::to_string(labels.size()));

  Eigen::MatrixXd features(static_cast<Eigen::Index>(refs.size()), extractor.dim);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto fv = extract(dataset.blob(*refs[i]), extractor);
    features.row(static_cast<Eigen::Index>(i)) = fv.values.transpose();
  }

  out.model = train_on_features(labels, features, label_of, hyperparams, extractor.extractor_id,
                                &out.summary.sweeps, &out.summary.converged);
  out.model.trained_at = now;
  out.summary.samples = refs.size();

  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    Eigen::Index best;
    decision_scores(out.model, features.row(i).transpose()).maxCoeff(&best);
    correct += best == label_of[static_cast<std::size_t>(i)];
  }
  out.summary.training_accuracy = static_cast<double>(correct) / static_cast<double>(refs.size());
  return out;
}

Eigen::VectorXd decision_scores(const ClassifierModel& model, const Eigen::VectorXd& features) {
  if (features.size() != model.dim())
    throw Error(ErrorCode::DimensionMismatch, "feature dim " + std::to_string(features.size()) +
                                                  " vs model dim " + std::to_string(model.dim()));
  return model.weights * features + model.biases;
}

std::vector<int> largest_remainder_percentages(const Eigen::VectorXd& probabilities) {
  const auto n = static_cast<std::size_t>(probabilities.size());
  std::vector<int> floors(n);
  std::vector<double> remainders(n);
  int total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = probabilities[static_cast<Eigen::Index>(i)] * 100.0;
    floors[i] = static_cast<int>(std::floor(share));
    remainders[i] = share - floors[i];
    total += floors[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; total < 100 && k < n; ++k, ++total) ++floors[order[k]];
  return floors;
}

InferenceResult result_from_scores(const std::vector<std::string>& labels,
                                   const Eigen::VectorXd& scores) {
  InferenceResult r;
  r.labels = labels;
  r.scores = scores;
  const Eigen::VectorXd shifted = (scores.array() - scores.maxCoeff()).exp().matrix();
  r.probabilities = shifted / shifted.sum();
  r.percentages = largest_remainder_percentages(r.probabilities);
  Eigen::Index best;
  scores.maxCoeff(&best);
  r.top_label = labels[static_cast<std::size_t>(best)];
  return r;
}

InferenceResult predict(const ClassifierModel& model, std::span<const std::uint8_t> image_bytes,
                        const ExtractorSpec& extractor) {
  if (extractor.extractor_id != model.extractor_id || extractor.dim != model.dim())
    throw Error(ErrorCode::ExtractorMismatch, "model was trained with " + model.extractor_id +
                                                  ", extractor is " + extractor.extractor_id);
  const auto fv = extract(image_bytes, extractor);
  auto r = result_from_scores(model.labels, decision_scores(model, fv.values));
  r.image_digest = sha256_hex(image_bytes);
  return r;
}

namespace {

constexpr char kMagic[8] = {'D', 'U', 'E', 'T', 'S', 'V', 'M', '\0'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void u64(std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> raw(std::size_t n) {
    if (n > in_.size() - pos_) throw Error(ErrorCode::CorruptManifest, "model file truncated");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto b = raw(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = v << 8 | b[static_cast<std::size_t>(i)];
    return v;
  }
  std::uint64_t u64() {
    auto b = raw(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = v << 8 | b[static_cast<std::size_t>(i)];
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    auto b = raw(n);
    return std::string(b.begin(), b.end());
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

Bytes serialize_model(const ClassifierModel& model) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(ClassifierModel::kFormatVersion);
  w.str(model.extractor_id);
  w.u32(static_cast<std::uint32_t>(model.dim()));
  w.u32(static_cast<std::uint32_t>(model.labels.size()));
  for (const auto& l : model.labels) w.str(l);
  for (Eigen::Index k = 0; k < model.weights.rows(); ++k)
    for (Eigen::Index d = 0; d < model.weights.cols(); ++d) w.f64(model.weights(k, d));
  for (Eigen::Index k = 0; k < model.biases.size(); ++k) w.f64(model.biases[k]);
  w.f64(model.hyperparams.C);
  w.f64(model.hyperparams.tolerance);
  w.u32(static_cast<std::uint32_t>(model.hyperparams.max_iter));
  w.u64(static_cast<std::uint64_t>(model.trained_at.count()));
  return w.take();
}

ClassifierModel deserialize_model(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.raw(sizeof kMagic);
  if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0)
    throw Error(ErrorCode::CorruptManifest, "not a model file");
  if (const auto v = r.u32(); v != ClassifierModel::kFormatVersion)
    throw Error(ErrorCode::VersionMismatch, "model format " + std::to_string(v));
  ClassifierModel m;
  m.extractor_id = r.str();
  const auto dim = r.u32();
  const auto count = r.u32();
  if (count < 2 || count > TrainingDataset::kMaxCategories || dim == 0 || dim > (1u << 20))
    throw Error(ErrorCode::CorruptManifest, "implausible model header");
  for (std::uint32_t k = 0; k < count; ++k) m.labels.push_back(r.str());
  m.weights.resize(count, dim);
  for (std::uint32_t k = 0; k < count; ++k)
    for (std::uint32_t d = 0; d < dim; ++d) m.weights(k, d) = r.f64();
  m.biases.resize(count);
  for (std::uint32_t k = 0; k < count; ++k) m.biases[k] = r.f64();
  m.hyperparams.C = r.f64();
  m.hyperparams.tolerance = r.f64();
  m.hyperparams.max_iter = static_cast<int>(r.u32());
  m.trained_at = Timestamp(static_cast<std::int64_t>(r.u64()));
  if (!r.done()) throw Error(ErrorCode::CorruptManifest, "trailing bytes in model file");
  return m;
}

}  // namespace duetml
