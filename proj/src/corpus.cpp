#include "utk/corpus.hpp"

#include <cstring>

#include "json.hpp"

namespace utk {

using nlohmann::json;

CorpusFormat corpus_format_from_path(const std::string& path) {
  if (path.size() >= 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0)
    return CorpusFormat::jsonl;
  return CorpusFormat::tokbin;
}

CorpusReader::CorpusReader(const std::string& path, CorpusFormat format, uint32_t vocab_size)
    : path_(path), format_(format), vocab_size_(vocab_size) {
  in_.open(path, format == CorpusFormat::tokbin ? std::ios::binary : std::ios::in);
  if (!in_) throw IoError("cannot open corpus file: " + path);
}

void CorpusReader::check_document(const Document& doc) {
  if (doc.tokens.empty())
    throw FormatError(path_ + ": empty document (record " + std::to_string(record_index_) + ")");
  if (!seen_ids_.insert(doc.doc_id).second)
    throw FormatError(path_ + ": duplicate doc_id " + std::to_string(doc.doc_id) + " (record " +
                      std::to_string(record_index_) + ")");
  if (vocab_size_ > 0) {
    for (uint32_t t : doc.tokens) {
      if (t >= vocab_size_)
        throw FormatError(path_ + ": token id " + std::to_string(t) + " outside vocab (record " +
                          std::to_string(record_index_) + ")");
    }
  }
}

bool CorpusReader::next(Document& out) {
  bool ok = format_ == CorpusFormat::jsonl ? next_jsonl(out) : next_tokbin(out);
  if (!ok) return false;
  check_document(out);
  ++record_index_;
  return true;
}

bool CorpusReader::next_jsonl(Document& out) {
  std::string line;
  for (;;) {
    uint64_t line_start = byte_offset_;
    if (!std::getline(in_, line)) return false;
    byte_offset_ += line.size() + 1;
    if (line.empty()) continue;  // tolerate blank lines
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(path_ + ": malformed record " + std::to_string(record_index_) +
                        " at byte " + std::to_string(line_start) + ": " + e.what());
    }
    if (!j.contains("doc_id") || !j.contains("tokens") || !j["tokens"].is_array())
      throw FormatError(path_ + ": record " + std::to_string(record_index_) + " at byte " +
                        std::to_string(line_start) + " missing doc_id/tokens");
    out.doc_id = j["doc_id"].get<uint64_t>();
    out.tokens = j["tokens"].get<std::vector<uint32_t>>();
    return true;
  }
}

bool CorpusReader::next_tokbin(Document& out) {
  uint32_t count = 0;
  in_.read(reinterpret_cast<char*>(&count), 4);
  if (in_.gcount() == 0) return false;
  if (in_.gcount() != 4)
    throw FormatError(path_ + ": truncated record header at byte " + std::to_string(byte_offset_) +
                      " (record " + std::to_string(record_index_) + ")");
  out.doc_id = record_index_;
  out.tokens.resize(count);
  in_.read(reinterpret_cast<char*>(out.tokens.data()), std::streamsize(count) * 4);
  if (in_.gcount() != std::streamsize(count) * 4)
    throw FormatError(path_ + ": truncated record " + std::to_string(record_index_) + " at byte " +
                      std::to_string(byte_offset_) + " (wanted " + std::to_string(count) +
                      " tokens)");
  byte_offset_ += 4 + uint64_t(count) * 4;
  return true;
}

void write_corpus_jsonl(const std::string& path, std::span<const Document> docs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  std::string buf;
  for (const Document& d : docs) {
    buf.clear();
    buf += "{\"doc_id\":";
    buf += std::to_string(d.doc_id);
    buf += ",\"tokens\":[";
    for (size_t i = 0; i < d.tokens.size(); ++i) {
      if (i) buf += ',';
      buf += std::to_string(d.tokens[i]);
    }
    buf += "]}\n";
    out.write(buf.data(), std::streamsize(buf.size()));
  }
  if (!out) throw IoError("write failed: " + path);
}

void write_corpus_tokbin(const std::string& path, std::span<const Document> docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  for (const Document& d : docs) {
    uint32_t count = uint32_t(d.tokens.size());
    out.write(reinterpret_cast<const char*>(&count), 4);
    out.write(reinterpret_cast<const char*>(d.tokens.data()), std::streamsize(count) * 4);
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Document> read_all(DocumentStream& stream) {
  std::vector<Document> docs;
  Document d;
  while (stream.next(d)) docs.push_back(std::move(d));
  return docs;
}

}  // namespace utk
