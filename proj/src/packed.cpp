#include "utk/packed.hpp"

#include <cstring>

#include "json.hpp"

namespace utk {

using nlohmann::json;

const char* to_string(SpanKind k) {
  switch (k) {
    case SpanKind::body: return "body";
    case SpanKind::label: return "label";
    case SpanKind::label_delim: return "label_delim";
    case SpanKind::head_knot: return "head_knot";
    case SpanKind::tail_knot: return "tail_knot";
    case SpanKind::solution_label: return "solution_label";
    case SpanKind::solution_delim: return "solution_delim";
    case SpanKind::pad: return "pad";
  }
  return "?";
}

SpanKind span_kind_from_string(const std::string& s) {
  if (s == "body") return SpanKind::body;
  if (s == "label") return SpanKind::label;
  if (s == "label_delim") return SpanKind::label_delim;
  if (s == "head_knot") return SpanKind::head_knot;
  if (s == "tail_knot") return SpanKind::tail_knot;
  if (s == "solution_label") return SpanKind::solution_label;
  if (s == "solution_delim") return SpanKind::solution_delim;
  if (s == "pad") return SpanKind::pad;
  throw FormatError("unknown span kind \"" + s + "\"");
}

std::string manifest_path_for(const std::string& packed_path) {
  return packed_path + ".manifest.jsonl";
}

namespace {

void put_u16(std::vector<uint8_t>& buf, uint16_t v) {
  buf.push_back(uint8_t(v));
  buf.push_back(uint8_t(v >> 8));
}

void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(uint8_t(v >> (8 * i)));
}

uint16_t get_u16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }
uint32_t get_u32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

}  // namespace

std::string spans_to_manifest_line(uint64_t seq_index, std::span<const ChunkSpan> spans) {
  // Hand-rolled emission: the manifest sits on the pack hot path.
  std::string s;
  s.reserve(64 + spans.size() * 96);
  s += "{\"seq\":";
  s += std::to_string(seq_index);
  s += ",\"spans\":[";
  bool first = true;
  for (const ChunkSpan& sp : spans) {
    if (!first) s += ',';
    first = false;
    s += '{';
    if (sp.kind != SpanKind::pad) {
      s += "\"doc_id\":";
      s += std::to_string(sp.doc_id);
      s += ",\"chunk_index\":";
      s += std::to_string(sp.chunk_index);
      s += ",\"total_chunks\":";
      s += std::to_string(sp.total_chunks);
      s += ',';
    }
    s += "\"start\":";
    s += std::to_string(sp.start);
    s += ",\"end\":";
    s += std::to_string(sp.end);
    s += ",\"kind\":\"";
    s += to_string(sp.kind);
    s += '"';
    if (sp.clipped) s += ",\"clipped\":true";
    s += '}';
  }
  s += "]}";
  return s;
}

std::vector<ChunkSpan> spans_from_manifest_line(const std::string& line, uint64_t expect_seq) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed manifest line: ") + e.what());
  }
  if (j.value<uint64_t>("seq", UINT64_MAX) != expect_seq)
    throw FormatError("manifest line out of order (expected seq " + std::to_string(expect_seq) +
                      ")");
  std::vector<ChunkSpan> spans;
  for (const json& js : j.at("spans")) {
    ChunkSpan sp;
    sp.doc_id = js.value<uint64_t>("doc_id", 0);
    sp.chunk_index = js.value<uint32_t>("chunk_index", 0);
    sp.total_chunks = js.value<uint32_t>("total_chunks", 0);
    sp.start = js.at("start").get<uint64_t>();
    sp.end = js.at("end").get<uint64_t>();
    sp.kind = span_kind_from_string(js.at("kind").get<std::string>());
    sp.clipped = js.value<bool>("clipped", false);
    spans.push_back(sp);
  }
  return spans;
}

PackedWriter::PackedWriter(const std::string& path, const PackHeader& header, bool write_manifest)
    : path_(path), header_(header), manifest_enabled_(write_manifest) {
  if (header.seq_len == 0) throw ConfigError("seq_len must be > 0");
  data_.open(path, std::ios::binary | std::ios::trunc);
  if (!data_) throw IoError("cannot open for write: " + path);
  std::vector<uint8_t> hdr;
  hdr.reserve(kPackedHeaderBytes);
  hdr.insert(hdr.end(), {'U', 'T', 'K', 'P'});
  put_u16(hdr, kPackedVersion);
  put_u16(hdr, 0);  // flags
  put_u32(hdr, header.seq_len);
  put_u32(hdr, header.claimed_len ? header.claimed_len : header.seq_len);
  hdr.insert(hdr.end(), header.seed.begin(), header.seed.end());
  data_.write(reinterpret_cast<const char*>(hdr.data()), std::streamsize(hdr.size()));
  if (manifest_enabled_) {
    manifest_.open(manifest_path_for(path), std::ios::trunc);
    if (!manifest_) throw IoError("cannot open for write: " + manifest_path_for(path));
  }
}

PackedWriter::~PackedWriter() {
  try {
    close();
  } catch (...) {
  }
}

void PackedWriter::write(const PackedSequence& seq) {
  uint32_t n = header_.seq_len;
  if (seq.tokens.size() != n || seq.loss_mask.size() != n)
    throw IntegrityError("sequence length mismatch: got " + std::to_string(seq.tokens.size()) +
                         " tokens, header says " + std::to_string(n));
  record_buf_.resize(packed_record_bytes(n));
  std::memcpy(record_buf_.data(), seq.tokens.data(), size_t(n) * 4);
  uint8_t* mask = record_buf_.data() + size_t(n) * 4;
  std::memset(mask, 0, packed_mask_bytes(n));
  for (uint32_t i = 0; i < n; ++i) {
    if (seq.loss_mask[i]) mask[i >> 3] |= uint8_t(1u << (i & 7));
  }
  data_.write(reinterpret_cast<const char*>(record_buf_.data()),
              std::streamsize(record_buf_.size()));
  if (!data_) throw IoError("write failed: " + path_);
  if (manifest_enabled_) {
    manifest_buf_ = spans_to_manifest_line(count_, seq.spans);
    manifest_buf_ += '\n';
    manifest_.write(manifest_buf_.data(), std::streamsize(manifest_buf_.size()));
    if (!manifest_) throw IoError("write failed: " + manifest_path_for(path_));
  }
  ++count_;
}

void PackedWriter::close() {
  if (data_.is_open()) {
    data_.close();
    if (data_.fail()) throw IoError("close failed: " + path_);
  }
  if (manifest_.is_open()) manifest_.close();
}

PackedReader::PackedReader(const std::string& path) : path_(path) {
  data_.open(path, std::ios::binary);
  if (!data_) throw IoError("cannot open: " + path);
  uint8_t hdr[kPackedHeaderBytes];
  data_.read(reinterpret_cast<char*>(hdr), kPackedHeaderBytes);
  if (data_.gcount() != kPackedHeaderBytes) throw FormatError(path + ": truncated header");
  if (std::memcmp(hdr, "UTKP", 4) != 0) throw FormatError(path + ": bad magic bytes");
  uint16_t version = get_u16(hdr + 4);
  if (version != kPackedVersion)
    throw FormatError(path + ": unsupported version " + std::to_string(version));
  header_.seq_len = get_u32(hdr + 8);
  header_.claimed_len = get_u32(hdr + 12);
  std::memcpy(header_.seed.data(), hdr + 16, 16);
  if (header_.seq_len == 0) throw FormatError(path + ": header seq_len is 0");

  manifest_.open(manifest_path_for(path));
  manifest_enabled_ = manifest_.is_open();
}

bool PackedReader::next(PackedSequence& out) {
  uint32_t n = header_.seq_len;
  record_buf_.resize(packed_record_bytes(n));
  data_.read(reinterpret_cast<char*>(record_buf_.data()), std::streamsize(record_buf_.size()));
  if (data_.gcount() == 0) return false;
  if (size_t(data_.gcount()) != record_buf_.size())
    throw FormatError(path_ + ": truncated record " + std::to_string(record_index_));
  out.tokens.resize(n);
  std::memcpy(out.tokens.data(), record_buf_.data(), size_t(n) * 4);
  const uint8_t* mask = record_buf_.data() + size_t(n) * 4;
  out.loss_mask.resize(n);
  for (uint32_t i = 0; i < n; ++i) out.loss_mask[i] = (mask[i >> 3] >> (i & 7)) & 1;
  out.spans.clear();
  if (manifest_enabled_) {
    std::string line;
    if (!std::getline(manifest_, line))
      throw FormatError(manifest_path_for(path_) + ": missing manifest line for record " +
                        std::to_string(record_index_));
    out.spans = spans_from_manifest_line(line, record_index_);
  }
  ++record_index_;
  return true;
}

std::vector<PackedSequence> read_all_sequences(PackedReader& reader) {
  std::vector<PackedSequence> seqs;
  PackedSequence s;
  while (reader.next(s)) seqs.push_back(std::move(s));
  return seqs;
}

std::vector<DocBoundary> doc_boundaries(const PackedSequence& seq) {
  if (seq.spans.empty()) throw IntegrityError("sequence carries no span manifest");
  std::vector<DocBoundary> out;
  for (const ChunkSpan& sp : seq.spans) {
    std::optional<uint64_t> id;
    if (sp.kind != SpanKind::pad) id = sp.doc_id;
    if (!out.empty() && out.back().doc_id == id && out.back().end == sp.start) {
      out.back().end = sp.end;
    } else {
      out.push_back({sp.start, sp.end, id});
    }
  }
  return out;
}

}  // namespace utk
