#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "utk/packed.hpp"

namespace utk {

// Exact counts of token-pair distances. Bin k covers distances
// [bin_edges[k], bin_edges[k+1]); together the bins cover [1, seq_len).
struct DistanceHistogram {
  std::vector<uint64_t> bin_edges;  // size = counts.size() + 1, ascending
  std::vector<uint64_t> counts;
  uint64_t total_pairs = 0;

  void merge(const DistanceHistogram& other);
  std::string to_csv() const;
  std::string to_json() const;
  std::string to_gnuplot() const;  // "# lo hi count" columns
};

enum class PairScope {
  intra_doc_cross_chunk,  // same document, different chunks
  intra_doc_all,          // same document, including within-chunk pairs
  all_pairs,              // every pair, across documents too
};

const char* to_string(PairScope s);
PairScope pair_scope_from_string(const std::string& s);

// |{(i,j) : i in [a0,a1), j in [b0,b1), j-i = d}| for non-overlapping spans
// with a before b. Closed form; throws on overlap.
uint64_t pair_count_at_distance(uint64_t a0, uint64_t a1, uint64_t b0, uint64_t b1, uint64_t d);

// Sum of pair_count_at_distance over d in [d_lo, d_hi). Closed form over the
// trapezoidal count profile, so binning a 128K sequence costs O(bins) per
// span pair instead of O(seq_len).
uint64_t pair_count_in_range(uint64_t a0, uint64_t a1, uint64_t b0, uint64_t b1, uint64_t d_lo,
                             uint64_t d_hi);

// Within-span pairs: sum of (len - d) over d in [d_lo, d_hi).
uint64_t self_pair_count_in_range(uint64_t len, uint64_t d_lo, uint64_t d_hi);

std::vector<uint64_t> linear_edges(uint32_t bins, uint64_t seq_len);
std::vector<uint64_t> log_edges(uint32_t bins, uint64_t seq_len);
// "16" -> 16 linear bins, "log:16" -> 16 log bins, "1,64,256" -> explicit
// ascending edges (seq_len appended when the last edge falls short).
std::vector<uint64_t> parse_bin_spec(const std::string& spec, uint64_t seq_len);

// Distances are measured between body tokens by default; include_structural
// adds labels, knots and delimiters (never padding).
DistanceHistogram histogram(const std::vector<PackedSequence>& seqs,
                            const std::vector<uint64_t>& bin_edges, PairScope scope,
                            bool include_structural = false, int workers = 0);

namespace reference {
// O(n^2) token-pair counter, serial. Oracle for the closed form.
DistanceHistogram histogram_brute(const std::vector<PackedSequence>& seqs,
                                  const std::vector<uint64_t>& bin_edges, PairScope scope,
                                  bool include_structural = false);
}  // namespace reference

}  // namespace utk
