#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "mfg/error.hpp"

namespace mfg {

/// Philox4x32-10 counter-based generator: a keyed bijection of 128-bit
/// counters, so any block of any stream is addressable without state.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static constexpr Counter block(Counter c, Key k) {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        k[0] += kWeyl0;
        k[1] += kWeyl1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
      c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
    }
    return c;
  }
};

/// Standard normal draws for one player and purpose. Draw j of step s comes
/// from counter (s, j / 2, player, domain), so streams of different players,
/// steps or domains never overlap and a player's noise does not depend on N.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint32_t player, std::uint32_t domain)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        player_(player),
        domain_(domain) {}

  /// Fills out[0..count) with the normals of `step`.
  template <typename Out>
  void fill(std::uint64_t step, Out& out, int count) const {
    if (step > std::numeric_limits<std::uint32_t>::max())
      throw Error(ErrorKind::SeedStreamExhausted, "step index exceeds the 32-bit counter word");
    for (int j = 0; j < count; j += 2) {
      const auto r = Philox4x32::block(
          {static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(j / 2), player_, domain_}, key_);
      const double u1 = unit(r[0], r[1]);
      const double u2 = unit(r[2], r[3]);
      const double rad = std::sqrt(-2.0 * std::log(u1));
      out[j] = rad * std::cos(2.0 * std::numbers::pi * u2);
      if (j + 1 < count) out[j + 1] = rad * std::sin(2.0 * std::numbers::pi * u2);
    }
  }

  /// Uniform on the 52-bit midpoint lattice, so both ends of (0, 1) stay
  /// excluded after rounding.
  static double unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
  }

 private:
  Philox4x32::Key key_;
  std::uint32_t player_;
  std::uint32_t domain_;
};

}  // namespace mfg
