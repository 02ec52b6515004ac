// catd: HTTP service for adaptive test sessions.
//
//   catd [--bind 127.0.0.1] [--port 8080] [--data-dir DIR] [--bank [id=]path ...]
//
// Flags fall back to CAT_BIND, CAT_PORT, CAT_DATA_DIR and CAT_WEBHOOK_RETRIES.
// CAT_OPERATOR_TOKEN guards operator endpoints; CAT_TOKEN_KEY signs resume tokens.

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "cat/bank.hpp"
#include "cat/service.hpp"

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::string env_or(const char* name, std::string fallback = {}) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive testing service"};
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::string data_dir;
  std::vector<std::string> banks;
  int retries = 5;
  int base_delay_ms = 250;
  app.add_option("--bind", bind, "Listen address")->envname("CAT_BIND");
  app.add_option("--port", port, "Listen port")->envname("CAT_PORT")->check(CLI::Range(0, 65535));
  app.add_option("--data-dir", data_dir, "Persistence directory; in-memory when empty")->envname("CAT_DATA_DIR");
  app.add_option("--bank", banks, "Preload a bank file, optionally as id=path");
  app.add_option("--webhook-retries", retries, "Maximum webhook delivery attempts")
      ->envname("CAT_WEBHOOK_RETRIES")
      ->check(CLI::PositiveNumber);
  app.add_option("--webhook-delay-ms", base_delay_ms, "First webhook retry delay")->check(CLI::NonNegativeNumber);
  CLI11_PARSE(app, argc, argv);

  cat::ServiceOptions opts;
  if (!data_dir.empty()) opts.data_dir = std::filesystem::path(data_dir);
  opts.operator_token = env_or("CAT_OPERATOR_TOKEN");
  opts.token_key = env_or("CAT_TOKEN_KEY");
  opts.retry.max_attempts = retries;
  opts.retry.base_delay = std::chrono::milliseconds(base_delay_ms);

  try {
    cat::Service service(std::move(opts));
    const auto op = env_or("CAT_OPERATOR_TOKEN");
    for (const auto& arg : banks) {
      std::string id, path = arg;
      if (const auto eq = arg.find('='); eq != std::string::npos) {
        id = arg.substr(0, eq);
        path = arg.substr(eq + 1);
      }
      if (!id.empty() && service.get_bank(id, op).status == 200) {
        std::cerr << "bank " << id << " already present in data dir; skipping " << path << "\n";
        continue;
      }
      auto bank = cat::load_bank_file(path);
      const auto violations = cat::validate_bank(bank);
      for (const auto& v : violations)
        std::cerr << (v.warning ? "warning: " : "error: ") << path << ": " << v.subject << ": " << v.message << "\n";
      if (cat::has_errors(violations)) return 2;
      std::cerr << "loaded bank " << service.add_bank(std::move(bank), id) << " from " << path << "\n";
    }

    httplib::Server server;
    service.install(server);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "listening on " << bind << ":" << port << "\n";
    if (!server.listen(bind, port)) {
      std::cerr << "cannot listen on " << bind << ":" << port << "\n";
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
