// duetml: run the workbench server or poke at its pieces offline.
#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "duetml/error.hpp"
#include "duetml/montage.hpp"
#include "duetml/prompts.hpp"
#include "duetml/service.hpp"

namespace fs = std::filesystem;
using namespace duetml;

namespace {

HttpService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

int serve(const std::string& listen, ServiceConfig config) {
  const auto colon = listen.rfind(':');
  const std::string host = colon == std::string::npos ? "127.0.0.1" : listen.substr(0, colon);
  const int port = std::stoi(colon == std::string::npos ? listen : listen.substr(colon + 1));
  HttpService service(std::move(config));
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::clog << "duetml listening on " << host << ':' << port << '\n';
  return service.listen(host, port) ? 0 : 1;
}

// Each subdirectory of `root` becomes a category; writes one PNG per category.
int montage(const std::string& root, const std::string& out_dir, std::uint64_t seed) {
  TrainingDataset dataset;
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    const auto& cat = dataset.add_category(d.filename().string(), system_now());
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(d))
      if (f.is_regular_file()) files.push_back(f.path());
    std::sort(files.begin(), files.end());
    std::vector<Bytes> payloads;
    for (const auto& f : files) payloads.push_back(read_file(f.string()));
    const auto report = dataset.upload_images(cat.name, payloads);
    std::clog << cat.name << ": " << report.added.size() << " image(s), "
              << report.duplicate_indices.size() << " duplicate(s)\n";
  }
  for (const auto& m : render_all(dataset, seed)) {
    const auto path = fs::path(out_dir) / (escape_category_name(m.category_name) + ".png");
    write_file(path.string(), m.png);
    std::cout << path.string() << ' ' << m.selected.size() << ' ' << m.digest << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive image-classifier workbench with two assistant agents"};
  app.require_subcommand(1);

  ServiceConfig config;
  std::string listen = "127.0.0.1:8080";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string mock_script;
  bool mock = false;
  long interval_s = 60;
  long timeout_s = 60;

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--listen", listen, "host:port")->capture_default_str();
  serve_cmd->add_option("--data-dir", config.data_dir)->capture_default_str();
  serve_cmd->add_option("--endpoint", config.backend.endpoint, "OpenAI-compatible base URL")
      ->capture_default_str();
  serve_cmd->add_option("--model", config.backend.model)->capture_default_str();
  serve_cmd->add_option("--api-key-env", api_key_env, "Environment variable holding the API key")
      ->capture_default_str();
  serve_cmd->add_option("--timeout", timeout_s, "Backend timeout in seconds")->capture_default_str();
  serve_cmd->add_option("--active-interval", interval_s, "Seconds between active-agent ticks, 0 = off")
      ->capture_default_str();
  serve_cmd->add_option("--language", config.session.language)->capture_default_str();
  serve_cmd->add_option("--chat-log-max-chars", config.session.chat_log_max_chars)
      ->capture_default_str();
  serve_cmd->add_flag("--mock", mock, "Use the scripted offline backend");
  serve_cmd->add_option("--mock-script", mock_script, "JSON script for the offline backend")
      ->check(CLI::ExistingFile);

  auto* prompts_cmd = app.add_subcommand("prompts", "Print the prompt templates");
  std::string only;
  prompts_cmd->add_option("id", only, "Template id");

  auto* montage_cmd = app.add_subcommand("montage", "Render montages from a folder of category folders");
  std::string root, out_dir = ".";
  std::uint64_t seed = 0;
  montage_cmd->add_option("root", root)->required()->check(CLI::ExistingDirectory);
  montage_cmd->add_option("-o,--out", out_dir)->capture_default_str();
  montage_cmd->add_option("--seed", seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve_cmd) {
      if (const char* key = std::getenv(api_key_env.c_str())) config.backend.api_key = key;
      config.backend.timeout = std::chrono::seconds(timeout_s);
      config.active_interval = std::chrono::seconds(interval_s);
      if (!mock_script.empty()) {
        const auto text = read_file(mock_script);
        config.mock = MockScript::from_json(std::string(text.begin(), text.end()));
      } else if (mock) {
        config.mock = MockScript{};
      }
      if (!config.mock && config.backend.api_key.empty())
        std::clog << "warning: " << api_key_env << " is not set\n";
      return serve(listen, std::move(config));
    }
    if (*prompts_cmd) {
      for (const auto& t : all_templates()) {
        if (!only.empty() && only != to_string(t.id)) continue;
        std::cout << "=== " << to_string(t.id) << " ===\n" << t.body << "\n\n";
      }
      return 0;
    }
    if (*montage_cmd) return montage(root, out_dir, seed);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return 2;
  }
  return 0;
}
