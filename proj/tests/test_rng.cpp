#include <set>

#include "doctest.h"
#include "utk/rng.hpp"

using namespace utk;

TEST_SUITE("rng") {
  TEST_CASE("identical key gives identical stream") {
    PhiloxRng a(Seed128{1, 2}, RngDomain::doc, 42);
    PhiloxRng b(Seed128{1, 2}, RngDomain::doc, 42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  }

  TEST_CASE("streams, domains and seeds are independent") {
    PhiloxRng base(Seed128{1, 2}, RngDomain::doc, 42);
    PhiloxRng other_stream(Seed128{1, 2}, RngDomain::doc, 43);
    PhiloxRng other_domain(Seed128{1, 2}, RngDomain::shuffle, 42);
    PhiloxRng other_seed_lo(Seed128{1, 3}, RngDomain::doc, 42);
    PhiloxRng other_seed_hi(Seed128{2, 2}, RngDomain::doc, 42);
    uint64_t v = base.next_u64();
    CHECK(v != other_stream.next_u64());
    CHECK(v != other_domain.next_u64());
    CHECK(v != other_seed_lo.next_u64());
    CHECK(v != other_seed_hi.next_u64());
  }

  TEST_CASE("below stays in range and covers it") {
    PhiloxRng rng(Seed128{7, 7}, RngDomain::fixture, 0);
    std::set<uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
      uint64_t v = rng.below(7);
      CHECK(v < 7);
      seen.insert(v);
    }
    CHECK(seen.size() == 7);
  }

  TEST_CASE("unit_real in [0,1) and roughly uniform") {
    PhiloxRng rng(Seed128{9, 1}, RngDomain::fixture, 0);
    int low = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      double v = rng.unit_real();
      CHECK(v >= 0.0);
      CHECK(v < 1.0);
      if (v < 0.5) ++low;
    }
    CHECK(std::abs(double(low) / n - 0.5) < 0.01);
  }

  TEST_CASE("hex seed round trip") {
    Seed128 s = Seed128::from_hex("0123456789abcdef0011223344556677");
    CHECK(s.hi == 0x0123456789abcdefull);
    CHECK(s.lo == 0x0011223344556677ull);
    CHECK(s.to_hex() == "0123456789abcdef0011223344556677");
    CHECK(Seed128::from_hex("ff").lo == 0xffull);
    CHECK(Seed128::from_hex("0xFF").lo == 0xffull);
    CHECK(Seed128::from_bytes(s.bytes()) == s);
    CHECK_THROWS_AS(Seed128::from_hex("xyz"), ConfigError);
    CHECK_THROWS_AS(Seed128::from_hex(""), ConfigError);
    CHECK_THROWS_AS(Seed128::from_hex("000000000000000000000000000000000"), ConfigError);
  }

  TEST_CASE("draws are platform-stable") {
    // Frozen values: if these move, previously packed corpora no longer
    // reproduce.
    PhiloxRng rng(Seed128{0, 0}, RngDomain::doc, 0);
    CHECK(rng.next_u64() == 0x08a63f2df658186aull);
    CHECK(rng.next_u64() == 0x021a7d891670ecf5ull);
  }
}
