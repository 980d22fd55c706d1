#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (master seed, path index, channel, draw index), so paths can be generated
// in any order or on any thread and still reproduce bit-for-bit.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace kyleback {

/// Philox4x32-10 block function (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter apply(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      ctr = single_round(ctr, key);
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static Counter single_round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// Independent sub-streams of one path.
enum class Channel : std::uint32_t {
  brownian = 0,   ///< demand noise B
  payoff = 1,     ///< payoff draw (Bernoulli coin or eta)
  horizon = 2,    ///< announcement time tau
  exact = 3,      ///< exact bridge sampler
  auxiliary = 4,  ///< anything else a test needs
};

/// Draws for one (seed, path_index) pair.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t path_index) : seed_(seed), path_(path_index) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t path_index() const { return path_; }

  /// Two 64-bit words for block `block` of a channel.
  std::array<std::uint64_t, 2> bits(Channel channel, std::uint64_t block) const {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                                  static_cast<std::uint32_t>(path_),
                                  static_cast<std::uint32_t>(path_ >> 32) ^
                                      (static_cast<std::uint32_t>(channel) << 24)};
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
    const auto out = Philox4x32::apply(ctr, key);
    return {(static_cast<std::uint64_t>(out[0]) << 32) | out[1], (static_cast<std::uint64_t>(out[2]) << 32) | out[3]};
  }

  /// Uniform on the open interval (0,1), 53-bit resolution.
  static double to_open_unit(std::uint64_t word) {
    return (static_cast<double>(word >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double uniform(Channel channel, std::uint64_t index) const { return to_open_unit(bits(channel, index)[0]); }

  /// Standard normal draw number `index` of the channel (Box-Muller; draws
  /// 2k and 2k+1 share one block).
  double normal(Channel channel, std::uint64_t index) const {
    const auto w = bits(channel, index >> 1);
    const double u1 = to_open_unit(w[0]);
    const double u2 = to_open_unit(w[1]);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    return (index & 1u) ? rad * std::sin(ang) : rad * std::cos(ang);
  }

  double exponential(Channel channel, std::uint64_t index, double rate) const {
    return -std::log(uniform(channel, index)) / rate;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t path_;
};

/// Sequential reader of normal draws that computes each Box-Muller pair once.
class NormalSequence {
 public:
  NormalSequence(const NoiseStream& stream, Channel channel) : stream_(stream), channel_(channel) {}

  double next() {
    if (index_ & 1u) {
      ++index_;
      return spare_;
    }
    const auto w = stream_.bits(channel_, index_ >> 1);
    const double rad = std::sqrt(-2.0 * std::log(NoiseStream::to_open_unit(w[0])));
    const double ang = 2.0 * std::numbers::pi * NoiseStream::to_open_unit(w[1]);
    spare_ = rad * std::sin(ang);
    ++index_;
    return rad * std::cos(ang);
  }

 private:
  NoiseStream stream_;
  Channel channel_;
  std::uint64_t index_ = 0;
  double spare_ = 0.0;
};

}  // namespace kyleback
