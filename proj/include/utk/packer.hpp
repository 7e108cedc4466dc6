#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "utk/corpus.hpp"
#include "utk/packed.hpp"
#include "utk/policy.hpp"
#include "utk/rng.hpp"
#include "utk/tangler.hpp"

namespace utk {

struct PackOptions {
  uint32_t seq_len = 0;
  uint32_t claimed_len = 0;  // 0 means equal to seq_len
  int workers = 0;           // 0 means all available cores
};

struct PackStats {
  uint64_t sequences = 0;
  uint64_t docs = 0;
  uint64_t split_docs = 0;
  uint64_t input_tokens = 0;
  uint64_t output_tokens = 0;
  uint64_t pad_tokens = 0;

  double split_fraction() const { return docs ? double(split_docs) / double(docs) : 0.0; }
};

// Slot position of one chunk after shuffling: doc is the index into the
// batch, chunk is 0-based within the document.
struct ChunkRef {
  uint32_t doc = 0;
  uint32_t chunk = 0;

  bool operator==(const ChunkRef&) const = default;
};

// Uniform random permutation of all chunk slots. With preserve_order, each
// document keeps the slot set the plain shuffle gave it but places its
// chunks there in ascending chunk order; without it, chunks land at the raw
// permuted positions.
std::vector<ChunkRef> shuffle_chunk_slots(const std::vector<uint32_t>& chunks_per_doc,
                                          bool preserve_order, PhiloxRng& rng);

// Chunk-interleaved order: chunk 1 of every document in document order, then
// chunk 2 of every document, and so on.
std::vector<ChunkRef> cip_chunk_order(const std::vector<uint32_t>& chunks_per_doc);

using SequenceSink = std::function<void(uint64_t seq_index, PackedSequence&&)>;

// Assembles fixed-length training sequences: documents are greedily
// accumulated in stream order until their tangled length reaches seq_len,
// tangled, shuffled into chunk slots, concatenated, truncated at exactly
// seq_len, and (only at end of stream) padded. Deterministic for a given
// (seed, corpus order) regardless of worker count.
PackStats pack(DocumentStream& docs, const Config& cfg, const PackOptions& options, Seed128 seed,
               const SequenceSink& sink);

// Longer-than-claimed mode: trains at train_len while advertising
// claimed_len. Identical to pack at seq_len = train_len; the caller records
// both lengths in the file header.
PackStats pack_overlength(DocumentStream& docs, const Config& cfg, uint32_t claimed_len,
                          uint32_t train_len, int workers, Seed128 seed,
                          const SequenceSink& sink);

// Convenience for tests: collect every sequence in order.
std::vector<PackedSequence> pack_to_vector(DocumentStream& docs, const Config& cfg,
                                           const PackOptions& options, Seed128 seed,
                                           PackStats* stats = nullptr);

}  // namespace utk
