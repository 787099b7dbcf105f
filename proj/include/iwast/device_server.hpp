// TCP endpoint standing in for the USB cable of a simulated device. One
// session at a time; a further concurrent connection gets "ERR Busy".
#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "iwast/sim_engine.hpp"

namespace iwast::cfg {

class DeviceServer {
 public:
  /// The simulator must have USB attached (await_configuration). A
  /// connection made while no session is open power-cycles the motherboard,
  /// so it boots from NVM into a fresh session.
  explicit DeviceServer(sim::Simulator& sim);
  ~DeviceServer();
  DeviceServer(const DeviceServer&) = delete;
  DeviceServer& operator=(const DeviceServer&) = delete;

  /// Port 0 picks an ephemeral port; returns the bound one.
  std::uint16_t start(const std::string& address, std::uint16_t port);
  void stop();
  /// Blocks until the server stops.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace iwast::cfg
