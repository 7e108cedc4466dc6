#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "utk/error.hpp"

namespace utk {

static_assert(std::endian::native == std::endian::little,
              "packed format I/O assumes a little-endian host");

enum class SpanKind : uint8_t {
  body,
  label,
  label_delim,
  head_knot,
  tail_knot,
  solution_label,
  solution_delim,
  pad,
};

const char* to_string(SpanKind k);
SpanKind span_kind_from_string(const std::string& s);

// Provenance record mapping a half-open token range of a packed sequence
// back to (document, chunk, role). Solution-label spans carry the
// chunk_index of the chunk whose label they repeat.
struct ChunkSpan {
  uint64_t doc_id = 0;
  uint32_t chunk_index = 0;   // 1-based; 0 for pad spans
  uint32_t total_chunks = 0;  // h of the document; 0 for pad spans
  uint64_t start = 0;
  uint64_t end = 0;  // half-open
  SpanKind kind = SpanKind::body;
  bool clipped = false;  // truncation cut this span short

  uint64_t len() const { return end - start; }
};

struct PackedSequence {
  std::vector<uint32_t> tokens;
  std::vector<uint8_t> loss_mask;  // 1 = position is a training target
  std::vector<ChunkSpan> spans;    // ordered, partition [0, seq_len)
};

// File header. claimed_len < seq_len marks a longer-than-claimed packing
// (training length above the advertised context length).
struct PackHeader {
  uint32_t seq_len = 0;
  uint32_t claimed_len = 0;
  std::array<uint8_t, 16> seed{};
};

// On-disk layout, all little-endian:
//   magic "UTKP" | u16 version=1 | u16 flags=0 | u32 seq_len | u32 claimed_len
//   | 16-byte seed echo
// then one record per sequence:
//   seq_len x u32 tokens | ceil(seq_len/8) loss-mask bytes, LSB-first
constexpr size_t kPackedHeaderBytes = 32;
constexpr uint16_t kPackedVersion = 1;

inline size_t packed_mask_bytes(uint32_t seq_len) { return (size_t(seq_len) + 7) / 8; }
inline size_t packed_record_bytes(uint32_t seq_len) {
  return size_t(seq_len) * 4 + packed_mask_bytes(seq_len);
}

std::string manifest_path_for(const std::string& packed_path);

class PackedWriter {
 public:
  PackedWriter(const std::string& path, const PackHeader& header, bool write_manifest = true);
  ~PackedWriter();

  void write(const PackedSequence& seq);
  uint64_t count() const { return count_; }
  void close();

 private:
  std::string path_;
  PackHeader header_;
  std::ofstream data_;
  std::ofstream manifest_;
  bool manifest_enabled_;
  uint64_t count_ = 0;
  std::vector<uint8_t> record_buf_;
  std::string manifest_buf_;
};

class PackedReader {
 public:
  explicit PackedReader(const std::string& path);

  const PackHeader& header() const { return header_; }
  bool has_manifest() const { return manifest_enabled_; }
  // Spans come from the manifest sidecar when present, else stay empty.
  bool next(PackedSequence& out);

 private:
  std::string path_;
  PackHeader header_;
  std::ifstream data_;
  std::ifstream manifest_;
  bool manifest_enabled_ = false;
  uint64_t record_index_ = 0;
  std::vector<uint8_t> record_buf_;
};

std::vector<PackedSequence> read_all_sequences(PackedReader& reader);

// Serialized span list for one sequence / its inverse. Used by the manifest
// sidecar; exposed for tests.
std::string spans_to_manifest_line(uint64_t seq_index, std::span<const ChunkSpan> spans);
std::vector<ChunkSpan> spans_from_manifest_line(const std::string& line, uint64_t expect_seq);

// Contiguous per-document extent of a packed sequence. doc_id is empty for
// pad runs.
struct DocBoundary {
  uint64_t start = 0;
  uint64_t end = 0;
  std::optional<uint64_t> doc_id;

  bool operator==(const DocBoundary&) const = default;
};

// Merges contiguous runs of spans sharing a doc_id. Throws if the sequence
// carries no span manifest.
std::vector<DocBoundary> doc_boundaries(const PackedSequence& seq);

}  // namespace utk
