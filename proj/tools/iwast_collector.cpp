// iwast-collector: HTTP/WebSocket measurement collector.
#include <CLI11.hpp>

#include <boost/asio/io_context.hpp>
#include <boost/asio/signal_set.hpp>
#include <cstdio>

#include "iwast/collector.hpp"

int main(int argc, char** argv) {
  CLI::App app{"IWAST measurement collector"};
  std::uint16_t port = 8080;
  std::string address = "127.0.0.1";
  std::string db = "iwast.db";
  std::string scenario_dir = "scenarios";
  app.add_option("--port", port, "HTTP port (0 = any)")->capture_default_str();
  app.add_option("--address", address, "Bind address")->capture_default_str();
  app.add_option("--db", db, "SQLite file (:memory: for none)")->capture_default_str();
  app.add_option("--scenario-dir", scenario_dir, "Root for scenario_path in run requests")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  using namespace iwast::collector;
  try {
    Store store(db);
    LiveHub hub;
    RunManager runs(store, hub, scenario_dir);
    Api api(store, hub, runs);
    Server server(api, hub);
    const auto bound = server.start(address, port);
    std::printf("collector listening on http://%s:%u\n", address.c_str(), bound);
    std::fflush(stdout);

    boost::asio::io_context ioc;
    boost::asio::signal_set signals(ioc, SIGINT, SIGTERM);
    signals.async_wait([](const boost::system::error_code&, int) {});
    ioc.run();
    server.stop();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "iwast-collector: %s\n", e.what());
    return 1;
  }
  return 0;
}
