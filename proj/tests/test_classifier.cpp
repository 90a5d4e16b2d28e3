#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "duetml/classifier.hpp"
#include "duetml/error.hpp"
#include "support.hpp"

using namespace duetml;
using testsupport::solid_png;

namespace {

TrainingDataset reds_and_blues() {
  TrainingDataset ds;
  ds.add_category("reds");
  ds.add_category("blues");
  std::vector<Bytes> reds, blues;
  for (int i = 0; i < 5; ++i) {
    reds.push_back(solid_png(200 + 10 * i, 20 + 5 * i, 30));
    blues.push_back(solid_png(25, 40 + 5 * i, 180 + 15 * i));
  }
  ds.upload_images("reds", reds);
  ds.upload_images("blues", blues);
  return ds;
}

ClassifierModel fixed_model(std::vector<std::string> labels, Eigen::MatrixXd w, Eigen::VectorXd b) {
  ClassifierModel m;
  m.labels = std::move(labels);
  m.weights = std::move(w);
  m.biases = std::move(b);
  m.extractor_id = "histo-v1";
  return m;
}

double naive_dot(const Eigen::MatrixXd& w, Eigen::Index row, const Eigen::VectorXd& x) {
  double s = 0;
  for (Eigen::Index j = 0; j < x.size(); ++j) s += w(row, j) * x[j];
  return s;
}

}  // namespace

TEST_CASE("solid colors separate perfectly") {
  const auto ds = reds_and_blues();
  const auto r = train(ds, ExtractorSpec::builtin());
  CHECK(r.model.labels == std::vector<std::string>{"reds", "blues"});
  CHECK(r.summary.samples == 10);
  CHECK(r.summary.training_accuracy == 1.0);

  int correct = 0;
  for (const auto& c : ds.categories())
    for (const auto& ref : c.images)
      correct += predict(r.model, ds.blob(ref), ExtractorSpec::builtin()).top_label == c.name;
  CHECK(correct == 10);
}

TEST_CASE("fewer than two non-empty categories") {
  TrainingDataset ds;
  ds.add_category("only");
  ds.add_category("empty");
  ds.upload_images("only", std::vector<Bytes>{solid_png(1, 2, 3)});
  try {
    train(ds, ExtractorSpec::builtin());
    FAIL("expected InsufficientCategories");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientCategories);
  }
}

TEST_CASE("empty categories are excluded, not fatal") {
  auto ds = reds_and_blues();
  ds.add_category("nothing yet");
  const auto r = train(ds, ExtractorSpec::builtin());
  CHECK(r.model.labels.size() == 2);
  CHECK(r.summary.excluded_empty == std::vector<std::string>{"nothing yet"});
}

TEST_CASE("training is deterministic") {
  const auto ds = reds_and_blues();
  const auto a = train(ds, ExtractorSpec::builtin(), {}, Timestamp(1));
  const auto b = train(ds, ExtractorSpec::builtin(), {}, Timestamp(1));
  CHECK((a.model.weights - b.model.weights).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((a.model.biases - b.model.biases).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("model is frozen against later dataset edits") {
  auto ds = reds_and_blues();
  const auto r = train(ds, ExtractorSpec::builtin());
  const auto bytes = serialize_model(r.model);
  ds.remove_category("reds");
  ds.rename_category("blues", "navy");
  CHECK(r.model.labels == std::vector<std::string>{"reds", "blues"});
  CHECK(serialize_model(r.model) == bytes);
}

TEST_CASE("decision scores") {
  const auto m = fixed_model({"a", "b"}, Eigen::MatrixXd::Zero(2, 59), Eigen::Vector2d(1, -1));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  Eigen::VectorXd x(59);
  for (auto& v : x) v = n(rng);
  CHECK(decision_scores(m, x) == Eigen::Vector2d(1, -1));

  Eigen::MatrixXd w(3, 59);
  for (auto& v : w.reshaped()) v = n(rng);
  const auto m3 = fixed_model({"a", "b", "c"}, w, Eigen::Vector3d(0.5, -0.25, 2));
  const auto s = decision_scores(m3, x);
  for (Eigen::Index k = 0; k < 3; ++k) {
    CHECK(std::abs(s[k] - (naive_dot(w, k, x) + m3.biases[k])) <= 1e-12);
    const double alpha = 3.5;
    const auto scaled = decision_scores(m3, alpha * x);
    CHECK(scaled[k] - m3.biases[k] == doctest::Approx(alpha * (s[k] - m3.biases[k])));
  }

  try {
    decision_scores(m3, Eigen::VectorXd::Zero(10));
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("softmax and percentages") {
  const std::vector<std::string> labels = {"dog", "cat", "bird"};
  const Eigen::Vector3d scores(std::log(0.3), std::log(0.2), std::log(0.5));
  const auto r = result_from_scores(labels, scores);
  CHECK(r.percentages == std::vector<int>{30, 20, 50});
  CHECK(r.top_label == "bird");
  CHECK(r.percentage("cat") == 20);

  // shift invariance
  const auto shifted = result_from_scores(labels, (scores.array() + 123.0).matrix());
  CHECK((shifted.probabilities - r.probabilities).cwiseAbs().maxCoeff() < 1e-12);

  const auto tie = result_from_scores({"A", "B"}, Eigen::Vector2d(0.7, 0.7));
  CHECK(tie.percentages == std::vector<int>{50, 50});

  const auto extreme = result_from_scores({"A", "B"}, Eigen::Vector2d(1000, -1000));
  CHECK(extreme.percentages == std::vector<int>{100, 0});

  // three-way tie: the leftover point goes to the earliest label
  const auto thirds = largest_remainder_percentages(Eigen::Vector3d::Constant(1.0 / 3));
  CHECK(thirds == std::vector<int>{34, 33, 33});
}

TEST_CASE("property: percentages sum to 100 and top label is the argmax") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0, 3);
  for (int trial = 0; trial < 2000; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 9);
    Eigen::VectorXd s(k);
    for (auto& v : s) v = n(rng);
    std::vector<std::string> labels;
    for (int i = 0; i < k; ++i) labels.push_back("L" + std::to_string(i));
    const auto r = result_from_scores(labels, s);
    CHECK(std::accumulate(r.percentages.begin(), r.percentages.end(), 0) == 100);
    for (int p : r.percentages) CHECK((p >= 0 && p <= 100));
    Eigen::Index arg;
    s.maxCoeff(&arg);
    CHECK(r.top_label == labels[static_cast<std::size_t>(arg)]);
    CHECK(r.probabilities.sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("predict checks the extractor") {
  const auto r = train(reds_and_blues(), ExtractorSpec::builtin());
  auto other = ExtractorSpec::builtin();
  other.extractor_id = "something-else";
  try {
    predict(r.model, solid_png(1, 1, 1), other);
    FAIL("expected ExtractorMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ExtractorMismatch);
  }
  const auto png = solid_png(250, 0, 0);
  const auto p = predict(r.model, png, ExtractorSpec::builtin());
  CHECK(p.top_label == "reds");
  CHECK(p.image_digest == sha256_hex(png));
}

TEST_CASE("binary solver matches a hand-solved problem") {
  // Two points at x = -1 and x = +1: the max-margin separator is w = 1, b = 0.
  Eigen::MatrixXd x(2, 1);
  x << -1, 1;
  Eigen::VectorXd y(2);
  y << -1, 1;
  SvmParams<double> p;
  p.C = 100;
  const auto svm = train_binary_svm<double>(x, y, p);
  CHECK(svm.converged);
  CHECK(svm.weights[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(svm.bias == doctest::Approx(0.0).epsilon(1e-6));

  // Shifted pair: x = 1 and x = 3 → w = 1, b = -2.
  x << 1, 3;
  const auto shifted = train_binary_svm<double>(x, y, p);
  CHECK(shifted.weights[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(shifted.bias == doctest::Approx(-2.0).epsilon(1e-6));

  // With a small C the box binds: alpha = C, w = 2C.
  p.C = 0.1;
  x << -1, 1;
  const auto soft = train_binary_svm<double>(x, y, p);
  CHECK(soft.weights[0] == doctest::Approx(0.2).epsilon(1e-9));
  for (Eigen::Index i = 0; i < 2; ++i) CHECK(soft.alpha[i] == doctest::Approx(0.1));
}

TEST_CASE("dual objective never decreases") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  Eigen::MatrixXd x(30, 4);
  Eigen::VectorXd y(30);
  for (Eigen::Index i = 0; i < 30; ++i) {
    for (auto j = 0; j < 4; ++j) x(i, j) = n(rng);
    y[i] = x(i, 0) + 0.3 * n(rng) > 0 ? 1 : -1;
  }
  const auto svm = train_binary_svm<double>(x, y, {});
  REQUIRE(svm.dual_trace.size() >= 2);
  for (std::size_t i = 1; i < svm.dual_trace.size(); ++i)
    CHECK(svm.dual_trace[i] >= svm.dual_trace[i - 1] - 1e-12);
  // The solver is templated on scalar; float instantiates too.
  const auto f = train_binary_svm<float>(x.cast<float>(), y.cast<float>(), {});
  CHECK(f.weights.size() == 4);
}

TEST_CASE("model serialization") {
  const auto m = train(reds_and_blues(), ExtractorSpec::builtin(), {}, Timestamp(1234)).model;
  const auto bytes = serialize_model(m);
  CHECK(std::string(bytes.begin(), bytes.begin() + 7) == "DUETSVM");
  const auto back = deserialize_model(bytes);
  CHECK(back.labels == m.labels);
  CHECK(back.weights == m.weights);
  CHECK(back.biases == m.biases);
  CHECK(back.extractor_id == m.extractor_id);
  CHECK(back.trained_at == m.trained_at);
  CHECK(back.hyperparams.C == m.hyperparams.C);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(deserialize_model(truncated), Error);
  auto bad_version = bytes;
  bad_version[8] = 99;
  try {
    deserialize_model(bad_version);
    FAIL("expected VersionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VersionMismatch);
  }
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(deserialize_model(trailing), Error);
}
