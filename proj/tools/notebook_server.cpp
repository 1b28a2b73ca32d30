// HTTP server for group teaching sessions.
//
//   notebook_server --data data --state state --port 8080 --admin-token $TOKEN

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>

#include "tutee/http_api.hpp"
#include "tutee/service.hpp"

namespace {
httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Teachable-agent session server"};
  tutee::ServiceConfig cfg;
  std::string host = "127.0.0.1";
  int port = 8080;
  cfg.data_dir = "data";
  cfg.state_dir = "state";
  app.add_option("--data", cfg.data_dir, "curricula, flows and assets")->check(CLI::ExistingDirectory);
  app.add_option("--state", cfg.state_dir, "persistent state directory");
  app.add_option("--host", host);
  app.add_option("--port", port);
  app.add_option("--admin-token", cfg.admin_token, "bootstrap researcher token")->envname("TUTEE_ADMIN_TOKEN");
  app.add_option("--session-minutes", cfg.session_minutes);
  app.add_option("--idle-window", cfg.idle_window, "seconds before a silent member loses turns");
  app.add_option("--stuck-threshold", cfg.stuck_threshold);
  app.add_option("--probe-cadence", cfg.probe_cadence, "follow-up question every N effects (0 = off)");
  CLI11_PARSE(app, argc, argv);

  try {
    tutee::Service service(cfg);
    httplib::Server server;
    tutee::install_routes(server, service);
    server.set_mount_point("/assets", service.asset_dir().string());

    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    std::atomic<bool> running{true};
    std::thread ticker([&] {
      while (running) {
        std::this_thread::sleep_for(std::chrono::seconds(1));
        service.tick();
      }
    });

    std::cerr << "listening on " << host << ':' << port << '\n';
    const bool ok = server.listen(host, port);
    running = false;
    ticker.join();
    if (!ok) {
      std::cerr << "cannot listen on " << host << ':' << port << '\n';
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
