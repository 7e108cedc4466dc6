#pragma once

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "utk/corpus.hpp"
#include "utk/packed.hpp"
#include "utk/policy.hpp"
#include "utk/rng.hpp"

namespace utk {

// One chunk of a tangled document, fully assembled:
//   [head_knot(j) if j>1] cl_open label cl_close body [tail_knot(j) if j<h]
// and, on the last chunk of a split document, the untie solution
//   sol_open label_1 sol_sep label_2 ... sol_sep label_h sol_close.
// An unsplit document (h=1) passes through as a bare body with no labels,
// knots or solution.
struct TangledChunk {
  uint64_t doc_id = 0;
  uint32_t chunk_index = 0;  // 1-based j
  uint32_t total_chunks = 0;
  std::vector<uint32_t> label;  // empty when h=1
  std::vector<uint32_t> tokens;
  std::vector<uint8_t> mask;
  std::vector<ChunkSpan> spans;  // chunk-local offsets
};

// Loss-mask rule: knots, label/solution delimiters and padding never carry
// loss; body, label and solution-label tokens do.
bool loss_mask_for(SpanKind kind);

// Number of tokens a document occupies after tangling.
uint64_t augmented_len(uint64_t doc_len, uint32_t h, uint32_t label_len);

// Chunk count for one document. 1 below min_split_len; otherwise 1 with
// probability 1-p_split, else a draw from chunk_count_dist, capped at the
// largest h with h*min_chunk_len <= doc_len.
uint32_t sample_chunk_count(uint64_t doc_len, const SplitPolicy& policy, PhiloxRng& rng);

// h-1 strictly increasing cut offsets in (0, doc_len), uniform over all
// feasible cut sets whose h chunks each have length >= min_chunk_len.
std::vector<uint64_t> choose_split_points(uint64_t doc_len, uint32_t h, const SplitPolicy& policy,
                                          PhiloxRng& rng);

// Tracks labels already used within one packed sequence so every chunk label
// in a sequence is unique.
class LabelSet {
 public:
  bool insert(const std::vector<uint32_t>& label);  // false if already present
  size_t size() const { return set_.size(); }
  void clear() { set_.clear(); }

 private:
  struct Hash {
    size_t operator()(const std::vector<uint32_t>& v) const {
      uint64_t h = 1469598103934665603ull;
      for (uint32_t x : v) h = (h ^ x) * 1099511628211ull;
      return size_t(h);
    }
  };
  std::unordered_set<std::vector<uint32_t>, Hash> set_;
};

// label_len uniform i.i.d. draws from the label pool, re-drawn until unique
// against `used`. Throws ConfigError when the pool cannot supply another
// distinct label.
std::vector<uint32_t> gen_label(const SplitPolicy& policy, PhiloxRng& rng, LabelSet& used);

// The tangling phase plus the backtracing suffix for a single document.
// Pure given (doc, policy, specials, rng state, used-label state).
std::vector<TangledChunk> tangle_document(const Document& doc, const SplitPolicy& policy,
                                          const SpecialTokens& specials, PhiloxRng& rng,
                                          LabelSet& used);

// Chunk-interleaved baseline: two bare chunks (no labels, knots or
// solution); documents shorter than 2*min_chunk_len pass through unsplit.
// The packer interleaves chunk 1 of every document before any chunk 2.
std::vector<TangledChunk> tangle_cip(const Document& doc, const SplitPolicy& policy,
                                     PhiloxRng& rng);

// Pass-through: one body chunk, no structure (strategy "none" and the h=1
// path share this).
std::vector<TangledChunk> tangle_none(const Document& doc);

}  // namespace utk
