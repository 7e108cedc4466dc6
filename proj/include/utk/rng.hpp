#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "utk/error.hpp"

namespace utk {

// 128-bit global seed. Parsed from hex on the CLI and echoed verbatim into
// the packed-file header so a run can be reproduced from its output alone.
struct Seed128 {
  uint64_t hi = 0;
  uint64_t lo = 0;

  bool operator==(const Seed128&) const = default;

  // Big-endian byte view: byte 0 is the most significant byte of hi.
  std::array<uint8_t, 16> bytes() const {
    std::array<uint8_t, 16> out{};
    for (int i = 0; i < 8; ++i) out[i] = uint8_t(hi >> (56 - 8 * i));
    for (int i = 0; i < 8; ++i) out[8 + i] = uint8_t(lo >> (56 - 8 * i));
    return out;
  }

  static Seed128 from_bytes(const std::array<uint8_t, 16>& b) {
    Seed128 s;
    for (int i = 0; i < 8; ++i) s.hi = (s.hi << 8) | b[i];
    for (int i = 0; i < 8; ++i) s.lo = (s.lo << 8) | b[8 + i];
    return s;
  }

  // Accepts 1..32 hex digits, optionally 0x-prefixed; shorter strings are
  // zero-extended on the left.
  static Seed128 from_hex(const std::string& hex);
  std::string to_hex() const;
};

// Independent stream families. Keeps per-document draws and per-sequence
// shuffle draws from ever sharing a counter.
enum class RngDomain : uint32_t {
  doc = 0,      // keyed by doc_id: chunk count, split points, labels
  shuffle = 1,  // keyed by global sequence index
  fixture = 9,  // synthetic data generation in tests/bench
};

// Philox4x32-10 counter-based generator (pure integer arithmetic, so a given
// (seed, domain, stream, counter) produces the same value on every platform).
// Splittable by construction: tangling a document depends only on
// (global_seed, doc_id), never on iteration order or worker layout.
class PhiloxRng {
 public:
  PhiloxRng(Seed128 seed, RngDomain domain, uint64_t stream) {
    key_[0] = uint32_t(seed.lo);
    key_[1] = uint32_t(seed.lo >> 32);
    uint64_t s = mix64(seed.hi ^ (stream + 0x9E3779B97F4A7C15ull * (uint64_t(domain) + 1)));
    stream_[0] = uint32_t(s);
    stream_[1] = uint32_t(s >> 32);
  }

  uint32_t next_u32() {
    if (block_pos_ == 4) refill();
    return block_[block_pos_++];
  }

  uint64_t next_u64() {
    uint64_t lo = next_u32();
    uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // Unbiased uniform draw in [0, n). n must be > 0.
  uint64_t below(uint64_t n) {
    uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Uniform in [0, 1) with 53 random bits.
  double unit_real() { return double(next_u64() >> 11) * 0x1.0p-53; }

 private:
  static uint64_t mix64(uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  void refill() {
    uint32_t c0 = uint32_t(counter_);
    uint32_t c1 = uint32_t(counter_ >> 32);
    uint32_t c2 = stream_[0];
    uint32_t c3 = stream_[1];
    uint32_t k0 = key_[0];
    uint32_t k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
      uint64_t p0 = uint64_t(0xD2511F53u) * c0;
      uint64_t p1 = uint64_t(0xCD9E8D57u) * c2;
      uint32_t n0 = uint32_t(p1 >> 32) ^ c1 ^ k0;
      uint32_t n1 = uint32_t(p1);
      uint32_t n2 = uint32_t(p0 >> 32) ^ c3 ^ k1;
      uint32_t n3 = uint32_t(p0);
      c0 = n0;
      c1 = n1;
      c2 = n2;
      c3 = n3;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    block_ = {c0, c1, c2, c3};
    block_pos_ = 0;
    ++counter_;
  }

  uint32_t key_[2];
  uint32_t stream_[2];
  uint64_t counter_ = 0;
  std::array<uint32_t, 4> block_{};
  int block_pos_ = 4;
};

// Stream keyed by document id; all augmentation randomness for one document
// flows from here.
inline PhiloxRng doc_rng(Seed128 seed, uint64_t doc_id) {
  return PhiloxRng(seed, RngDomain::doc, doc_id);
}

// Stream keyed by global sequence index; drives the chunk-slot shuffle.
inline PhiloxRng shuffle_rng(Seed128 seed, uint64_t seq_index) {
  return PhiloxRng(seed, RngDomain::shuffle, seq_index);
}

}  // namespace utk
