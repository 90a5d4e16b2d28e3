#include <doctest.h>

#include <cmath>
#include <thread>

#include "duetml/error.hpp"
#include "duetml/features.hpp"
#include "support.hpp"
// after Eigen: <resolv.h> defines a _res macro that breaks Eigen's product kernels
#include <httplib.h>

using namespace duetml;
using testsupport::noise_png;
using testsupport::solid_png;

namespace {

// Independent oracle for the color block: counts of value >> 5 per channel.
std::array<int, 24> color_counts(const Image& img) {
  std::array<int, 24> h{};
  for (std::size_t i = 0; i < img.rgb.size(); ++i) ++h[(i % 3) * 8 + (img.rgb[i] >> 5)];
  return h;
}

}  // namespace

TEST_CASE("uniform mid-gray image") {
  const auto png = solid_png(128, 128, 128, 64, 64);
  const auto raw = histo_v1_raw(decode_image(png));
  REQUIRE(raw.size() == HistoLayout::kDim);

  // No gradients: every pixel lands in the degenerate orientation bin.
  CHECK(raw[HistoLayout::kOrientOffset] > 0);
  for (int k = 1; k < HistoLayout::kOrientBins; ++k) CHECK(raw[HistoLayout::kOrientOffset + k] == 0);

  // All color mass sits in bin 128 >> 5 = 4, a middle bin.
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 8; ++k) {
      const double v = raw[c * 8 + k];
      if (k == 4) CHECK(v > 0);
      else CHECK(v == 0);
    }

  const auto fv = extract(png, ExtractorSpec::builtin());
  CHECK(fv.dim() == 59);
  CHECK(fv.values.norm() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("color block matches an independent histogram") {
  const auto img = testsupport::noise_image(17, 64, 64);
  const auto raw = histo_v1_raw(img);
  const auto want = color_counts(img);
  const double total = 64.0 * 64.0;
  for (int k = 0; k < 24; ++k) {
    CAPTURE(k);
    // Either raw counts or fractions; the ratio to the oracle must be constant.
    CHECK(raw[k] * total / std::max(1.0, raw.head(8).sum()) == doctest::Approx(want[k]));
  }
}

TEST_CASE("determinism and file-name independence") {
  const auto a = noise_png(4, 40, 30);
  const Bytes copy = a;  // the same bytes, as if read from another file name
  const auto va = extract(a, ExtractorSpec::builtin());
  const auto vb = extract(a, ExtractorSpec::builtin());
  const auto vc = extract(copy, ExtractorSpec::builtin());
  CHECK(va.values == vb.values);
  CHECK(va.values == vc.values);
  CHECK(va.extractor_id == "histo-v1");
  for (int i = 0; i < va.dim(); ++i) CHECK(std::isfinite(va.values[i]));
}

TEST_CASE("normalisation") {
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(5);
  CHECK(l2_normalized(zero).isZero());
  Eigen::VectorXd v(2);
  v << 3, 4;
  CHECK(l2_normalized(v)[0] == doctest::Approx(0.6));
  for (std::uint64_t s = 0; s < 10; ++s)
    CHECK(extract(noise_png(s), ExtractorSpec::builtin()).values.norm() ==
          doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("extract rejects an unknown builtin") {
  auto spec = ExtractorSpec::builtin();
  spec.extractor_id = "resnet-42";
  try {
    extract(noise_png(1), spec);
    FAIL("expected ExtractorMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ExtractorMismatch);
  }
}

TEST_CASE("extract_batch") {
  const std::vector<Bytes> three = {noise_png(1), noise_png(2), noise_png(3)};
  auto r = extract_batch(three, ExtractorSpec::builtin());
  CHECK(r.succeeded() == 3);
  CHECK(r.errors.empty());
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(r.vectors[k]->values == extract(three[k], ExtractorSpec::builtin()).values);

  const std::vector<Bytes> with_bad = {noise_png(1), Bytes{9, 9, 9}, noise_png(3)};
  r = extract_batch(with_bad, ExtractorSpec::builtin());
  CHECK(r.succeeded() == 2);
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].index == 1);
  CHECK(r.errors[0].code == ErrorCode::UndecodableImage);
  CHECK_FALSE(r.vectors[1].has_value());
  CHECK(r.vectors[2]->values == extract(with_bad[2], ExtractorSpec::builtin()).values);
}

TEST_CASE("external adapter") {
  httplib::Server svr;
  std::atomic<int> calls{0};
  svr.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    // A toy embedder: first three bytes of the payload and its length.
    res.set_content("[" + std::to_string(static_cast<unsigned char>(req.body[0])) + "," +
                        std::to_string(static_cast<unsigned char>(req.body[1])) + "," +
                        std::to_string(req.body.size()) + "]",
                    "application/json");
  });
  svr.Post("/short", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("[1.0]", "application/json");
  });
  const int port = svr.bind_to_any_port("127.0.0.1");
  std::thread t([&] { svr.listen_after_bind(); });
  svr.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  const auto png = noise_png(2);
  const auto v = extract(png, ExtractorSpec::external("toy", 3, base + "/embed"));
  CHECK(v.extractor_id == "toy");
  Eigen::VectorXd raw(3);
  raw << png[0], png[1], static_cast<double>(png.size());
  const Eigen::VectorXd want = raw / raw.norm();
  for (int k = 0; k < 3; ++k) CHECK(v.values[k] == doctest::Approx(want[k]));

  try {
    extract(png, ExtractorSpec::external("toy", 3, base + "/short"));
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }

  // Corrupt images never reach the embedder.
  const int before = calls;
  CHECK_THROWS_AS(extract(Bytes{1, 2, 3}, ExtractorSpec::external("toy", 3, base + "/embed")),
                  Error);
  CHECK(calls == before);

  svr.stop();
  t.join();

  auto dead = ExtractorSpec::external("toy", 3, base + "/embed");
  dead.timeout = std::chrono::milliseconds(500);
  try {
    extract(png, dead);
    FAIL("expected ExternalEmbedderUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ExternalEmbedderUnavailable);
  }
}
