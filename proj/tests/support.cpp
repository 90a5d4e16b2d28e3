#include "support.hpp"

#include <filesystem>
#include <random>
#include <regex>
#include <sstream>

namespace testsupport {

namespace fs = std::filesystem;
using namespace duetml;

Bytes solid_png(std::uint8_t r, std::uint8_t g, std::uint8_t b, int w, int h) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto* p = img.at(x, y);
      p[0] = r;
      p[1] = g;
      p[2] = b;
    }
  return encode_png(img);
}

Image noise_image(std::uint64_t seed, int w, int h) {
  std::mt19937_64 rng(seed);
  Image img(w, h);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

Bytes noise_png(std::uint64_t seed, int w, int h) { return encode_png(noise_image(seed, w, h)); }

std::unique_ptr<Session> make_session(MockScript script, Clock clock, SessionConfig config,
                                      std::uint64_t seed) {
  if (!clock) clock = VirtualClock().clock();
  return std::make_unique<Session>("test", seed, std::move(clock), std::move(config),
                                   std::make_unique<MockBackend>(AgentId::Passive, script),
                                   std::make_unique<MockBackend>(AgentId::Active, script));
}

MockBackend& mock_of(AgentContext& ctx) { return dynamic_cast<MockBackend&>(ctx.backend()); }

std::string temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  std::random_device rd;
  const auto dir = fs::temp_directory_path() /
                   ("duetml-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string read_text(const std::string& path) {
  const auto b = read_file(path);
  return std::string(b.begin(), b.end());
}

std::map<std::string, std::string> reference_prompts() {
  std::istringstream in(read_text(std::string(DUETML_TEST_DATA) + "/reference_prompts.txt"));
  std::map<std::string, std::string> out;
  std::string line, current;
  while (std::getline(in, line)) {
    if (line.rfind("=== ", 0) == 0 && line.size() > 8) {
      current = line.substr(4, line.size() - 8);
      out[current];
      continue;
    }
    auto& body = out[current];
    if (!body.empty()) body += '\n';
    body += line;
  }
  return out;
}

std::vector<std::pair<std::string, int>> parse_inference_text(const std::string& text) {
  std::vector<std::pair<std::string, int>> out;
  if (text.size() < 2 || text.front() != '{' || text.back() != '}') return out;
  static const std::regex entry(R"('([^']*)': (\d+)%(, |\}$))");
  for (std::sregex_iterator it(text.begin() + 1, text.end(), entry), end; it != end; ++it)
    out.emplace_back((*it)[1].str(), std::stoi((*it)[2].str()));
  return out;
}

}  // namespace testsupport
