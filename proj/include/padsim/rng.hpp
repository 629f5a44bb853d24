#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace padsim {

// Philox4x32-10 counter-based generator. A block is a
// pure function of (key, counter), so any stream can be positioned without
// generating its predecessors.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key);
};

// One independent random stream, addressed by a master seed and a path of
// integer tags (replicate, subject, purpose, ...). Draw order inside a stream
// is the only state; streams never share counters.
class Stream {
 public:
  Stream(std::uint64_t master_seed, std::initializer_list<std::uint64_t> path);
  Stream(std::uint64_t master_seed, std::uint64_t stream_id);

  // Derive a child stream; the child does not consume draws from *this.
  Stream child(std::initializer_list<std::uint64_t> path) const;

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t stream_id() const { return stream_id_; }

 private:
  void refill();

  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_index_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;  // 32-bit words left in buffer_
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

// SplitMix64 finalizer; used to fold tag paths into stream ids.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_path(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

}  // namespace padsim
