#include "utk/rng.hpp"

#include <cctype>

namespace utk {

Seed128 Seed128::from_hex(const std::string& hex) {
  std::string s = hex;
  if (s.rfind("0x", 0) == 0 || s.rfind("0X", 0) == 0) s = s.substr(2);
  if (s.empty() || s.size() > 32) {
    throw ConfigError("seed must be 1..32 hex digits, got \"" + hex + "\"");
  }
  Seed128 out;
  for (char c : s) {
    int v;
    if (c >= '0' && c <= '9')
      v = c - '0';
    else if (c >= 'a' && c <= 'f')
      v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F')
      v = c - 'A' + 10;
    else
      throw ConfigError(std::string("invalid hex digit '") + c + "' in seed");
    out.hi = (out.hi << 4) | (out.lo >> 60);
    out.lo = (out.lo << 4) | uint64_t(v);
  }
  return out;
}

std::string Seed128::to_hex() const {
  static const char* digits = "0123456789abcdef";
  std::string s(32, '0');
  for (int i = 0; i < 16; ++i) s[i] = digits[(hi >> (60 - 4 * i)) & 0xf];
  for (int i = 0; i < 16; ++i) s[16 + i] = digits[(lo >> (60 - 4 * i)) & 0xf];
  return s;
}

}  // namespace utk
