#include <sys/socket.h>

#include <atomic>
#include <set>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "iwast/collector.hpp"

namespace iwast::collector {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using boost::asio::ip::tcp;

struct Server::Impl {
  Api& api;
  LiveHub& hub;
  boost::asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::thread accept_thread;
  std::atomic<bool> stopping{false};
  std::mutex mutex;
  std::condition_variable idle;
  std::set<int> fds;
  int active = 0;

  Impl(Api& a, LiveHub& h) : api(a), hub(h) {}

  void serve(tcp::socket& socket);
  void live(tcp::socket& socket, const http::request<http::string_body>& req);
};

void Server::Impl::live(tcp::socket& socket, const http::request<http::string_body>& req) {
  websocket::stream<tcp::socket&> ws(socket);
  beast::error_code ec;
  ws.accept(req, ec);
  if (ec) return;
  auto sub = hub.subscribe();
  while (auto msg = sub->next()) {
    ws.text(true);
    ws.write(boost::asio::buffer(*msg), ec);
    if (ec) break;
  }
  hub.unsubscribe(sub);
  if (!ec) ws.close(websocket::close_code::going_away, ec);
}

void Server::Impl::serve(tcp::socket& socket) {
  beast::flat_buffer buffer;
  beast::error_code ec;
  for (;;) {
    http::request<http::string_body> req;
    http::read(socket, buffer, req, ec);
    if (ec) break;
    const std::string target(req.target());
    if (websocket::is_upgrade(req)) {
      if (target == "/api/live") live(socket, req);
      break;
    }
    const auto reply = api.handle({std::string(req.method_string()), target, req.body()});
    http::response<http::string_body> res{static_cast<http::status>(reply.status), req.version()};
    res.set(http::field::content_type, reply.content_type);
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req.keep_alive());
    res.body() = reply.body;
    res.prepare_payload();
    http::write(socket, res, ec);
    if (ec || !req.keep_alive()) break;
  }
  socket.shutdown(tcp::socket::shutdown_both, ec);
}

Server::Server(Api& api, LiveHub& hub) : impl_(std::make_unique<Impl>(api, hub)) {}

Server::~Server() { stop(); }

std::uint16_t Server::start(const std::string& address, std::uint16_t port) {
  auto& im = *impl_;
  const tcp::endpoint ep(boost::asio::ip::make_address(address), port);
  im.acceptor.open(ep.protocol());
  im.acceptor.set_option(tcp::acceptor::reuse_address(true));
  im.acceptor.bind(ep);
  im.acceptor.listen();
  const auto bound = im.acceptor.local_endpoint().port();
  im.accept_thread = std::thread([&im] {
    for (;;) {
      tcp::socket socket(im.ioc);
      beast::error_code ec;
      im.acceptor.accept(socket, ec);
      if (im.stopping) break;
      if (ec) continue;
      const int fd = socket.native_handle();
      {
        std::lock_guard lock(im.mutex);
        im.fds.insert(fd);
        ++im.active;
      }
      std::thread([&im, fd, s = std::move(socket)]() mutable {
        im.serve(s);
        std::lock_guard lock(im.mutex);
        im.fds.erase(fd);
        beast::error_code ignored;
        s.close(ignored);
        --im.active;
        im.idle.notify_all();
      }).detach();
    }
  });
  return bound;
}

void Server::stop() {
  auto& im = *impl_;
  if (!im.accept_thread.joinable()) return;
  im.stopping = true;
  // A blocking accept() is not woken by close(); poke it with a connection.
  {
    beast::error_code ec;
    boost::asio::io_context ioc;
    tcp::socket poke(ioc);
    auto ep = im.acceptor.local_endpoint(ec);
    if (ep.address().is_unspecified()) ep.address(boost::asio::ip::make_address("127.0.0.1"));
    poke.connect(ep, ec);
  }
  im.accept_thread.join();
  beast::error_code ec;
  im.acceptor.close(ec);
  im.hub.close_all();
  std::unique_lock lock(im.mutex);
  for (int fd : im.fds) ::shutdown(fd, SHUT_RDWR);
  im.idle.wait(lock, [&] { return im.active == 0; });
}

}  // namespace iwast::collector
