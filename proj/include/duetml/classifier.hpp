#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "duetml/dataset.hpp"
#include "duetml/features.hpp"
#include "duetml/svm.hpp"
#include "duetml/util.hpp"

namespace duetml {

using SvmHyperparams = SvmParams<double>;

/// One-vs-rest linear separators over frozen features. Labels are captured
/// at training time; later dataset edits never touch a trained model.
struct ClassifierModel {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::vector<std::string> labels;
  Eigen::MatrixXd weights;  // labels x dim
  Eigen::VectorXd biases;
  SvmHyperparams hyperparams;
  std::string extractor_id;
  Timestamp trained_at{0};

  Eigen::Index dim() const { return weights.cols(); }
};

struct TrainingSummary {
  std::vector<std::string> excluded_empty;
  std::size_t samples = 0;
  std::vector<int> sweeps;  // per label
  bool converged = true;
  double training_accuracy = 0.0;
};

struct TrainResult {
  ClassifierModel model;
  TrainingSummary summary;
};

/// Percent view of a softmax over decision scores, keyed by model label.
struct InferenceResult {
  std::vector<std::string> labels;
  Eigen::VectorXd scores;
  Eigen::VectorXd probabilities;
  std::vector<int> percentages;  // sums to exactly 100
  std::string top_label;
  std::string image_digest;  // sha256 of the evaluated image bytes

  int percentage(std::string_view label) const;
};

/// Fits one binary separator per non-empty category (label vs. rest).
/// Empty categories are left out and listed in the summary.
/// Throws InsufficientCategories when fewer than two categories have images.
TrainResult train(const TrainingDataset& dataset, const ExtractorSpec& extractor,
                  const SvmHyperparams& hyperparams = {}, Timestamp now = system_now());

/// Same, over precomputed features; `label_of[i]` indexes into `labels`.
ClassifierModel train_on_features(const std::vector<std::string>& labels,
                                  const Eigen::MatrixXd& features,
                                  const std::vector<int>& label_of,
                                  const SvmHyperparams& hyperparams, std::string extractor_id,
                                  std::vector<int>* sweeps = nullptr, bool* converged = nullptr);

/// s_k = w_k . x + b_k. Throws DimensionMismatch.
Eigen::VectorXd decision_scores(const ClassifierModel& model, const Eigen::VectorXd& features);

/// Softmax at temperature 1, then largest-remainder integer percentages.
InferenceResult result_from_scores(const std::vector<std::string>& labels,
                                   const Eigen::VectorXd& scores);

/// Floors every share of 100 and hands the leftover points to the largest
/// remainders (earlier index wins ties).
std::vector<int> largest_remainder_percentages(const Eigen::VectorXd& probabilities);

/// Throws UndecodableImage, ExtractorMismatch.
InferenceResult predict(const ClassifierModel& model, std::span<const std::uint8_t> image_bytes,
                        const ExtractorSpec& extractor);

/// Little-endian model file: magic, format version, extractor id, dim,
/// label count, length-prefixed labels, weights, biases, then
/// hyperparameters and training time.
Bytes serialize_model(const ClassifierModel& model);
ClassifierModel deserialize_model(std::span<const std::uint8_t> bytes);

}  // namespace duetml
