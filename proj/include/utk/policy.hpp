#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "utk/error.hpp"

namespace utk {

// Token IDs for the structural vocabulary. Knot tokens are indexed by chunk
// position j: a cut between chunks j and j+1 inserts tail_knot(j) at the end
// of chunk j and head_knot(j+1) at the start of chunk j+1. Matching across
// the sequence is carried by chunk labels, not by knot indices.
struct SpecialTokens {
  uint32_t reserved_base = 0;
  uint32_t pad = 0;
  uint32_t cl_open = 0;   // opens a chunk label
  uint32_t cl_close = 0;  // closes a chunk label
  uint32_t sol_open = 0;  // opens the untie-solution block
  uint32_t sol_sep = 0;   // separates labels inside the solution block
  uint32_t sol_close = 0;
  std::vector<uint32_t> head_knots;  // head_knots[j-2] = <h_j>, j in [2, max_h]
  std::vector<uint32_t> tail_knots;  // tail_knots[j-1] = <t_j>, j in [1, max_h-1]

  uint32_t max_h() const { return uint32_t(head_knots.size()) + 1; }

  uint32_t head_knot(uint32_t j) const;  // j in [2, max_h]
  uint32_t tail_knot(uint32_t j) const;  // j in [1, max_h-1]

  // -1 if id is not a head knot, else its j.
  int head_knot_index(uint32_t id) const;
  int tail_knot_index(uint32_t id) const;

  bool is_special(uint32_t id) const;
  std::vector<uint32_t> all_ids() const;

  // Contiguous layout starting at reserved_base:
  //   pad, cl_open, cl_close, sol_open, sol_sep, sol_close,
  //   head_knot[2..max_h], tail_knot[1..max_h-1]
  static SpecialTokens default_layout(uint32_t reserved_base, uint32_t max_h);

  void validate() const;  // pairwise distinct, all >= reserved_base
};

// Pool of ordinary token IDs chunk labels are drawn from. Either a
// contiguous range [start, start+count) or an explicit id list.
struct LabelPool {
  uint32_t start = 256;
  uint32_t count = 4096;
  std::vector<uint32_t> ids;  // non-empty overrides the range

  uint64_t size() const { return ids.empty() ? count : ids.size(); }
  uint32_t at(uint64_t i) const { return ids.empty() ? start + uint32_t(i) : ids[i]; }
  bool contains(uint32_t id) const;
};

enum class Strategy { utk, cip, none };

const char* to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

// All augmentation knobs.
struct SplitPolicy {
  double p_split = 0.8;
  // Conditional distribution of the chunk count given that a split occurs;
  // support must lie in [2, max_h] and the masses must sum to 1.
  std::vector<std::pair<uint32_t, double>> chunk_count_dist = {{2, 0.5}, {3, 0.5}};
  uint32_t max_h = 8;
  uint32_t min_split_len = 256;  // documents shorter than this are never split
  uint32_t min_chunk_len = 16;
  uint32_t label_len = 4;
  LabelPool label_pool;
  bool preserve_order = true;
  Strategy strategy = Strategy::utk;

  // Number of distinct labels the pool can produce (saturating).
  uint64_t label_capacity() const;

  void validate(const SpecialTokens& specials) const;
};

struct Config {
  uint32_t vocab_size = 65536;
  SplitPolicy policy;
  SpecialTokens specials;

  static Config defaults();
  static Config from_json_file(const std::string& path);
  static Config from_json_text(const std::string& text, const std::string& origin);

  void validate() const;
};

}  // namespace utk
