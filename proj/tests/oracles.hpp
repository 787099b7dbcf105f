// Independent reference implementations used only by the tests.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "iwast/energy_model.hpp"

namespace oracle {

// CRC-8, poly x^8+x^2+x+1, init 0, MSB first, one bit at a time.
inline std::uint8_t crc8_bitwise(std::span<const std::uint8_t> bytes) {
  unsigned reg = 0;
  for (std::uint8_t byte : bytes) {
    for (int bit = 7; bit >= 0; --bit) {
      const unsigned in = (byte >> bit) & 1u;
      const unsigned top = (reg >> 7) & 1u;
      reg = (reg << 1) & 0xFFu;
      if (top ^ in) reg ^= 0x07u;
    }
  }
  return static_cast<std::uint8_t>(reg);
}

// LoRa time on air in microseconds, computed in integers. 125 kHz, CR 4/5,
// 8 preamble symbols, explicit header, CRC on. Symbol time = 2^SF * 8 us.
inline std::int64_t airtime_us(int sf, int payload_len) {
  const std::int64_t de = sf >= 11 ? 1 : 0;
  const std::int64_t num = 8 * payload_len - 4 * sf + 28 + 16;
  const std::int64_t den = 4 * (sf - 2 * de);
  std::int64_t n = num <= 0 ? 0 : (num + den - 1) / den;
  n = n * 5;  // (CR + 4) with CR = 1
  const std::int64_t payload_symbols = 8 + (n > 0 ? n : 0);
  const std::int64_t t_sym_us = (std::int64_t{1} << sf) * 8;
  // Preamble is 8 + 4.25 symbols: 12.25 * t_sym = 49 * t_sym / 4.
  return payload_symbols * t_sym_us + 49 * t_sym_us / 4;
}

// Charge in uAs of one channel, sampled at the midpoint of each 1 ms step.
inline double riemann_uAs(std::span<const iwast::energy::Interval> ivs, double t0, double t1) {
  double sum = 0.0;
  std::size_t k = 0;
  const auto steps = static_cast<long>(std::llround((t1 - t0) * 1000.0));
  for (long i = 0; i < steps; ++i) {
    const double t = t0 + (static_cast<double>(i) + 0.5) / 1000.0;
    while (k < ivs.size() && ivs[k].t1 <= t) ++k;
    if (k < ivs.size() && ivs[k].t0 <= t) sum += ivs[k].current_uA * 1e-3;
  }
  return sum;
}

inline double riemann_uAs(const iwast::energy::EnergyLedger& ledger, double t0, double t1) {
  double sum = 0.0;
  for (iwast::energy::ChannelId ch = 0; ch < ledger.channel_count(); ++ch) sum += riemann_uAs(ledger.intervals(ch), t0, t1);
  return sum;
}

}  // namespace oracle
