#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "utk/error.hpp"

namespace utk {

// Pre-tokenized document: the unit of augmentation. Token IDs are unitless
// vocabulary indices; tokenization happens upstream of this toolkit.
struct Document {
  uint64_t doc_id = 0;
  std::vector<uint32_t> tokens;
};

enum class CorpusFormat { jsonl, tokbin };

// .jsonl -> jsonl, everything else -> tokbin.
CorpusFormat corpus_format_from_path(const std::string& path);

class DocumentStream {
 public:
  virtual ~DocumentStream() = default;
  // Fills `out` and returns true, or returns false at end of stream.
  virtual bool next(Document& out) = 0;
};

class VectorDocumentStream final : public DocumentStream {
 public:
  explicit VectorDocumentStream(std::vector<Document> docs) : docs_(std::move(docs)) {}
  bool next(Document& out) override {
    if (pos_ >= docs_.size()) return false;
    out = docs_[pos_++];
    return true;
  }

 private:
  std::vector<Document> docs_;
  size_t pos_ = 0;
};

// Streams documents from disk in file order. Checks doc_id uniqueness and,
// when vocab_size > 0, that every token id is inside the corpus vocabulary.
//
// jsonl: one object per line, {"doc_id": <int>, "tokens": [<int>...]}.
// tokbin: repeated records of u32 count followed by count u32 token ids,
//         little-endian; doc_ids are assigned sequentially from 0.
class CorpusReader final : public DocumentStream {
 public:
  CorpusReader(const std::string& path, CorpusFormat format, uint32_t vocab_size = 0);
  bool next(Document& out) override;

 private:
  bool next_jsonl(Document& out);
  bool next_tokbin(Document& out);
  void check_document(const Document& doc);

  std::string path_;
  CorpusFormat format_;
  uint32_t vocab_size_;
  std::ifstream in_;
  uint64_t record_index_ = 0;
  uint64_t byte_offset_ = 0;
  std::unordered_set<uint64_t> seen_ids_;
};

// Fixture/export writers; exact inverses of the reader formats.
void write_corpus_jsonl(const std::string& path, std::span<const Document> docs);
void write_corpus_tokbin(const std::string& path, std::span<const Document> docs);

std::vector<Document> read_all(DocumentStream& stream);

}  // namespace utk
