#include "utk/packer.hpp"

#include <omp.h>

#include <algorithm>
#include <cstring>
#include <exception>

namespace utk {

std::vector<ChunkRef> shuffle_chunk_slots(const std::vector<uint32_t>& chunks_per_doc,
                                          bool preserve_order, PhiloxRng& rng) {
  uint64_t total = 0;
  for (uint32_t k : chunks_per_doc) total += k;

  std::vector<uint32_t> perm(total);
  for (uint64_t i = 0; i < total; ++i) perm[i] = uint32_t(i);
  for (uint64_t i = total; i > 1; --i) {
    uint64_t j = rng.below(i);
    std::swap(perm[i - 1], perm[j]);
  }

  std::vector<ChunkRef> order(total);
  uint64_t start = 0;
  std::vector<uint32_t> slots;
  for (uint32_t d = 0; d < chunks_per_doc.size(); ++d) {
    uint32_t k = chunks_per_doc[d];
    slots.assign(perm.begin() + start, perm.begin() + start + k);
    if (preserve_order) std::sort(slots.begin(), slots.end());
    for (uint32_t j = 0; j < k; ++j) order[slots[j]] = {d, j};
    start += k;
  }
  return order;
}

std::vector<ChunkRef> cip_chunk_order(const std::vector<uint32_t>& chunks_per_doc) {
  uint32_t max_chunks = 0;
  for (uint32_t k : chunks_per_doc) max_chunks = std::max(max_chunks, k);
  std::vector<ChunkRef> order;
  for (uint32_t c = 0; c < max_chunks; ++c) {
    for (uint32_t d = 0; d < chunks_per_doc.size(); ++d) {
      if (c < chunks_per_doc[d]) order.push_back({d, c});
    }
  }
  return order;
}

namespace {

struct Batch {
  std::vector<Document> docs;
  uint64_t assembled_len = 0;
};

struct AssembledSeq {
  PackedSequence seq;
  uint64_t split_docs = 0;
  uint64_t pad_tokens = 0;
};

// Tangled length of a document without building it: the chunk count is the
// first thing the doc-keyed stream yields, so peeking here and re-drawing
// inside tangle_document gives the same h.
uint64_t peek_assembled_len(const Document& doc, const Config& cfg, Seed128 seed) {
  switch (cfg.policy.strategy) {
    case Strategy::none: return doc.tokens.size();
    case Strategy::cip: return doc.tokens.size();
    case Strategy::utk: {
      PhiloxRng rng = doc_rng(seed, doc.doc_id);
      uint32_t h = sample_chunk_count(doc.tokens.size(), cfg.policy, rng);
      return augmented_len(doc.tokens.size(), h, cfg.policy.label_len);
    }
  }
  return doc.tokens.size();
}

AssembledSeq assemble_sequence(const Batch& batch, const Config& cfg, uint32_t seq_len,
                               Seed128 seed, uint64_t seq_index) {
  AssembledSeq out;

  LabelSet used;
  std::vector<std::vector<TangledChunk>> tangled(batch.docs.size());
  std::vector<uint32_t> counts(batch.docs.size());
  for (size_t i = 0; i < batch.docs.size(); ++i) {
    const Document& doc = batch.docs[i];
    PhiloxRng rng = doc_rng(seed, doc.doc_id);
    switch (cfg.policy.strategy) {
      case Strategy::utk:
        tangled[i] = tangle_document(doc, cfg.policy, cfg.specials, rng, used);
        break;
      case Strategy::cip: tangled[i] = tangle_cip(doc, cfg.policy, rng); break;
      case Strategy::none: tangled[i] = tangle_none(doc); break;
    }
    counts[i] = uint32_t(tangled[i].size());
    if (counts[i] > 1) ++out.split_docs;
  }

  std::vector<ChunkRef> order;
  switch (cfg.policy.strategy) {
    case Strategy::utk: {
      PhiloxRng rng = shuffle_rng(seed, seq_index);
      order = shuffle_chunk_slots(counts, cfg.policy.preserve_order, rng);
      break;
    }
    case Strategy::cip: order = cip_chunk_order(counts); break;
    case Strategy::none:
      for (uint32_t d = 0; d < counts.size(); ++d)
        for (uint32_t c = 0; c < counts[d]; ++c) order.push_back({d, c});
      break;
  }

  PackedSequence& seq = out.seq;
  seq.tokens.reserve(seq_len);
  seq.loss_mask.reserve(seq_len);

  for (const ChunkRef& ref : order) {
    if (seq.tokens.size() >= seq_len) break;
    const TangledChunk& chunk = tangled[ref.doc][ref.chunk];
    uint64_t pos = seq.tokens.size();
    uint64_t room = seq_len - pos;
    uint64_t take = std::min<uint64_t>(chunk.tokens.size(), room);

    seq.tokens.insert(seq.tokens.end(), chunk.tokens.begin(), chunk.tokens.begin() + take);
    seq.loss_mask.insert(seq.loss_mask.end(), chunk.mask.begin(), chunk.mask.begin() + take);
    for (const ChunkSpan& sp : chunk.spans) {
      if (sp.start >= take) break;  // cut fell before this span
      ChunkSpan rebased = sp;
      rebased.start = sp.start + pos;
      rebased.end = std::min<uint64_t>(sp.end, take) + pos;
      rebased.clipped = sp.end > take;
      seq.spans.push_back(rebased);
    }
  }

  if (seq.tokens.size() < seq_len) {
    uint64_t start = seq.tokens.size();
    out.pad_tokens = seq_len - start;
    seq.tokens.resize(seq_len, cfg.specials.pad);
    seq.loss_mask.resize(seq_len, 0);
    ChunkSpan sp;
    sp.start = start;
    sp.end = seq_len;
    sp.kind = SpanKind::pad;
    seq.spans.push_back(sp);
  }
  return out;
}

}  // namespace

PackStats pack(DocumentStream& docs, const Config& cfg, const PackOptions& options, Seed128 seed,
               const SequenceSink& sink) {
  if (options.seq_len == 0) throw ConfigError("seq_len must be > 0");
  if (options.claimed_len > options.seq_len)
    throw ConfigError("claimed_len " + std::to_string(options.claimed_len) +
                      " exceeds training seq_len " + std::to_string(options.seq_len));
  cfg.validate();

  const int workers = options.workers > 0 ? options.workers : omp_get_max_threads();
  const size_t window = size_t(std::max(workers * 4, 8));

  PackStats stats;
  std::vector<Batch> pending;
  uint64_t next_seq_index = 0;

  auto flush = [&]() {
    if (pending.empty()) return;
    std::vector<AssembledSeq> results(pending.size());
    std::vector<std::exception_ptr> errors(pending.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (int64_t b = 0; b < int64_t(pending.size()); ++b) {
      try {
        results[b] =
            assemble_sequence(pending[b], cfg, options.seq_len, seed, next_seq_index + b);
      } catch (...) {
        errors[b] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (size_t b = 0; b < results.size(); ++b) {
      stats.split_docs += results[b].split_docs;
      stats.pad_tokens += results[b].pad_tokens;
      stats.output_tokens += options.seq_len;
      ++stats.sequences;
      sink(next_seq_index + b, std::move(results[b].seq));
    }
    next_seq_index += pending.size();
    pending.clear();
  };

  Batch current;
  Document doc;
  while (docs.next(doc)) {
    ++stats.docs;
    stats.input_tokens += doc.tokens.size();
    current.assembled_len += peek_assembled_len(doc, cfg, seed);
    current.docs.push_back(std::move(doc));
    if (current.assembled_len >= options.seq_len) {
      pending.push_back(std::move(current));
      current = Batch{};
      if (pending.size() >= window) flush();
    }
  }
  if (!current.docs.empty()) pending.push_back(std::move(current));
  flush();
  return stats;
}

PackStats pack_overlength(DocumentStream& docs, const Config& cfg, uint32_t claimed_len,
                          uint32_t train_len, int workers, Seed128 seed,
                          const SequenceSink& sink) {
  if (train_len < claimed_len)
    throw ConfigError("train_len " + std::to_string(train_len) + " below claimed_len " +
                      std::to_string(claimed_len));
  PackOptions opt;
  opt.seq_len = train_len;
  opt.claimed_len = claimed_len;
  opt.workers = workers;
  return pack(docs, cfg, opt, seed, sink);
}

std::vector<PackedSequence> pack_to_vector(DocumentStream& docs, const Config& cfg,
                                           const PackOptions& options, Seed128 seed,
                                           PackStats* stats) {
  std::vector<PackedSequence> out;
  PackStats s = pack(docs, cfg, options, seed, [&](uint64_t idx, PackedSequence&& seq) {
    if (idx != out.size()) throw IntegrityError("sequence sink called out of order");
    out.push_back(std::move(seq));
  });
  if (stats) *stats = s;
  return out;
}

}  // namespace utk
