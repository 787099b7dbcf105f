#include "iwast/device_server.hpp"

#include <sys/socket.h>

#include <atomic>
#include <condition_variable>
#include <istream>
#include <mutex>
#include <set>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/read_until.hpp>
#include <boost/asio/streambuf.hpp>
#include <boost/asio/write.hpp>

namespace iwast::cfg {

using boost::asio::ip::tcp;

struct DeviceServer::Impl {
  explicit Impl(sim::Simulator& s) : sim(s) {}

  sim::Simulator& sim;
  std::mutex sim_mutex;
  boost::asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::thread accept_thread;
  std::atomic<bool> stopping{false};
  std::mutex mutex;
  std::condition_variable cv;
  std::set<int> fds;
  int active = 0;
  bool in_session = false;
  bool stopped = false;

  void serve(tcp::socket& socket);
};

void DeviceServer::Impl::serve(tcp::socket& socket) {
  boost::system::error_code ec;
  {
    std::lock_guard lock(mutex);
    if (in_session) {
      boost::asio::write(socket, boost::asio::buffer(std::string("ERR Busy another session is open\n")), ec);
      // Half-close and drain so the client's first line does not draw a reset.
      socket.shutdown(tcp::socket::shutdown_send, ec);
      char sink[256];
      while (!ec) socket.read_some(boost::asio::buffer(sink), ec);
      return;
    }
    in_session = true;
  }
  {
    std::lock_guard lock(sim_mutex);
    if (!sim.motherboard().session_open()) sim.reset_motherboard();
  }
  boost::asio::streambuf buffer;
  for (;;) {
    boost::asio::read_until(socket, buffer, '\n', ec);
    if (ec) break;
    std::istream is(&buffer);
    std::string line;
    std::getline(is, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string reply;
    {
      std::lock_guard lock(sim_mutex);
      reply = sim.usb_command(line);
    }
    boost::asio::write(socket, boost::asio::buffer(reply + "\n"), ec);
    if (ec) break;
  }
  std::lock_guard lock(mutex);
  in_session = false;
}

DeviceServer::DeviceServer(sim::Simulator& sim) : impl_(std::make_unique<Impl>(sim)) {}

DeviceServer::~DeviceServer() { stop(); }

std::uint16_t DeviceServer::start(const std::string& address, std::uint16_t port) {
  auto& im = *impl_;
  {
    std::lock_guard lock(im.sim_mutex);
    // Run boot until the session opens.
    im.sim.advance();
  }
  const tcp::endpoint ep(boost::asio::ip::make_address(address), port);
  im.acceptor.open(ep.protocol());
  im.acceptor.set_option(tcp::acceptor::reuse_address(true));
  im.acceptor.bind(ep);
  im.acceptor.listen();
  const auto bound = im.acceptor.local_endpoint().port();
  im.accept_thread = std::thread([&im] {
    for (;;) {
      tcp::socket socket(im.ioc);
      boost::system::error_code ec;
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
        boost::system::error_code ignored;
        s.close(ignored);
        --im.active;
        im.cv.notify_all();
      }).detach();
    }
  });
  return bound;
}

void DeviceServer::stop() {
  auto& im = *impl_;
  if (!im.accept_thread.joinable()) return;
  im.stopping = true;
  {
    boost::system::error_code ec;
    boost::asio::io_context ioc;
    tcp::socket poke(ioc);
    auto ep = im.acceptor.local_endpoint(ec);
    if (ep.address().is_unspecified()) ep.address(boost::asio::ip::make_address("127.0.0.1"));
    poke.connect(ep, ec);
  }
  im.accept_thread.join();
  boost::system::error_code ec;
  im.acceptor.close(ec);
  std::unique_lock lock(im.mutex);
  for (int fd : im.fds) ::shutdown(fd, SHUT_RDWR);
  im.cv.wait(lock, [&] { return im.active == 0; });
  im.stopped = true;
  im.cv.notify_all();
}

void DeviceServer::wait() {
  auto& im = *impl_;
  std::unique_lock lock(im.mutex);
  im.cv.wait(lock, [&] { return im.stopped; });
}

}  // namespace iwast::cfg
